//! Load consolidation: the offloading step and the coverage fixpoint built on
//! it.

use crate::forecast::LoadMatrix;
use crate::scenario::{EcId, ServiceId};

use super::load::{Capacity, Placement, Reach};

#[derive(Debug, Clone)]
pub struct CoverageResult {
    /// ECs left serving load, ascending id.
    pub set: Vec<EcId>,
    pub placement: Placement,
    /// Capacity tests performed, in total and in the busiest round.
    pub capacity_tests: usize,
    pub max_tests_per_round: usize,
    pub rounds: usize,
}

impl CoverageResult {
    pub fn contains(&self, n: EcId) -> bool {
        self.set.binary_search(&n).is_ok()
    }
}

/// Tries to move every load entry served at `n` to another EC reachable from
/// both `n` and the entry's origin. Candidates are ECs already serving load,
/// nearest to the origin first. All-or-nothing: on failure the placement is
/// left as it was.
pub fn offload(n: EcId, rs: &Reach, placement: &mut Placement, cap: &Capacity, tests: &mut usize) -> bool {
    let entries: Vec<(EcId, ServiceId, f64)> = placement.load.entries(n).collect();
    let e = rs.len();
    let mut moved: Vec<(EcId, EcId, ServiceId, f64)> = Vec::new();
    for (q, s, v) in entries {
        let mut cands: Vec<EcId> = (0..e)
            .filter(|&w| w != n && rs.contains(n, w) && rs.contains(q, w) && placement.served(w) > 0.0)
            .collect();
        cands.sort_by_key(|&w| (rs.distance(q, w), w));
        for w in cands {
            *tests += 1;
            if placement.can_support(w, s, v, cap) {
                transfer(placement, n, w, q, s, v, cap);
                moved.push((w, q, s, v));
                break;
            }
        }
    }
    if placement.served(n) == 0.0 {
        return true;
    }
    for (w, q, s, v) in moved.into_iter().rev() {
        transfer(placement, w, n, q, s, v, cap);
    }
    false
}

fn transfer(p: &mut Placement, from: EcId, to: EcId, q: EcId, s: ServiceId, v: f64, cap: &Capacity) {
    let have = p.load.get(from, q, s);
    if (have - v).abs() <= 1e-12 * have.max(1.0) {
        p.move_entry(from, to, q, s, cap);
    } else {
        // Partial: split the entry, then move the split-off part whole.
        let rest = have - v;
        p.load.set(from, q, s, v);
        p.move_entry(from, to, q, s, cap);
        p.load.set(from, q, s, rest);
        *p = Placement::new(p.load.clone(), cap);
    }
}

/// Consolidation fixpoint. ECs are visited by ascending served load with
/// non-active ones first; the first successful offload restarts the scan.
/// Before that, entries placed out of their origin's reach or on an EC over
/// capacity are relocated where possible.
pub fn coverage(
    initial: LoadMatrix,
    rs: &Reach,
    cap: &Capacity,
    active: &[bool],
    offload_enabled: bool,
) -> CoverageResult {
    let mut placement = Placement::new(initial, cap);
    repair(&mut placement, rs, cap);
    let e = rs.len();
    let (mut total, mut max_round, mut rounds) = (0, 0, 0);
    if offload_enabled {
        loop {
            rounds += 1;
            let mut order: Vec<EcId> = (0..e).collect();
            order.sort_by(|&a, &b| {
                active[a]
                    .cmp(&active[b])
                    .then(placement.served(a).total_cmp(&placement.served(b)))
                    .then(a.cmp(&b))
            });
            let mut tests = 0;
            let mut changed = false;
            for n in order {
                if placement.served(n) > 0.0 && offload(n, rs, &mut placement, cap, &mut tests) {
                    changed = true;
                    break;
                }
            }
            total += tests;
            max_round = max_round.max(tests);
            if !changed {
                break;
            }
        }
    }
    let set = (0..e).filter(|&n| placement.served(n) > 0.0).collect();
    CoverageResult {
        set,
        placement,
        capacity_tests: total,
        max_tests_per_round: max_round,
        rounds,
    }
}

/// Puts misplaced entries somewhere feasible, preferring the origin EC,
/// then ECs already hosting the service, then the nearest.
fn repair(p: &mut Placement, rs: &Reach, cap: &Capacity) {
    let e = rs.len();
    for n in 0..e {
        let stray: Vec<_> = p.load.entries(n).filter(|&(q, _, _)| !rs.contains(q, n)).collect();
        for (q, s, v) in stray {
            if let Some(w) = relocation_target(p, rs, cap, n, q, s, v) {
                transfer(p, n, w, q, s, v, cap);
            }
        }
    }
    for n in 0..e {
        while !p.within_capacity(n, cap) {
            // Shed the least loaded service first.
            let mut services: Vec<(f64, ServiceId)> = (0..cap.demand.len())
                .filter(|&s| p.hosts(n, s))
                .map(|s| (p.load.served_service(n, s), s))
                .collect();
            services.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut progressed = false;
            for (_, s) in services {
                let pieces: Vec<_> = p.load.entries(n).filter(|&(_, sv, _)| sv == s).collect();
                let mut moved = Vec::new();
                let mut ok = true;
                for (q, _, v) in pieces {
                    match relocation_target(p, rs, cap, n, q, s, v) {
                        Some(w) => {
                            transfer(p, n, w, q, s, v, cap);
                            moved.push((w, q, v));
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    progressed = true;
                    break;
                }
                for (w, q, v) in moved.into_iter().rev() {
                    transfer(p, w, n, q, s, v, cap);
                }
            }
            if !progressed {
                break;
            }
        }
    }
}

fn relocation_target(
    p: &Placement,
    rs: &Reach,
    cap: &Capacity,
    from: EcId,
    q: EcId,
    s: ServiceId,
    v: f64,
) -> Option<EcId> {
    let mut cands: Vec<EcId> = (0..rs.len()).filter(|&w| w != from && rs.contains(q, w)).collect();
    cands.sort_by_key(|&w| (w != q, !p.hosts(w, s), rs.distance(q, w), w));
    cands.into_iter().find(|&w| p.can_support(w, s, v, cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Resources;

    fn cap(e_res: u32, rate: f64) -> Capacity {
        Capacity {
            resources: Resources::new(e_res, e_res),
            demand: vec![Resources::new(1, 1); 2],
            service_rate: rate,
            margin: 0.0,
        }
    }

    fn all_reach(n: usize) -> Reach {
        Reach::from_fn(n, |_, _| true, |a, b| a.abs_diff(b))
    }

    #[test]
    fn zero_load_gives_empty_set() {
        let r = coverage(LoadMatrix::zeros(3, 2), &all_reach(3), &cap(2, 100.0), &[true; 3], true);
        assert!(r.set.is_empty());
    }

    #[test]
    fn single_loaded_ec_is_a_fixpoint() {
        let mut m = LoadMatrix::zeros(3, 2);
        m.set(1, 0, 0, 5.0);
        m.set(1, 1, 1, 5.0);
        let r = coverage(m, &all_reach(3), &cap(2, 100.0), &[true; 3], true);
        assert_eq!(r.set, vec![1]);
    }

    #[test]
    fn lighter_ec_is_absorbed() {
        let mut m = LoadMatrix::zeros(2, 2);
        m.set(0, 0, 0, 30.0);
        m.set(1, 1, 0, 10.0);
        let r = coverage(m, &all_reach(2), &cap(2, 100.0), &[true; 2], true);
        assert_eq!(r.set, vec![0]);
        assert_eq!(r.placement.load.get(0, 1, 0), 10.0);
        assert_eq!(r.placement.load.total(), 40.0);
    }

    #[test]
    fn full_candidates_leave_load_in_place() {
        let mut m = LoadMatrix::zeros(2, 2);
        m.set(0, 0, 0, 60.0);
        m.set(1, 1, 1, 50.0);
        let before = m.clone();
        let c = cap(2, 100.0);
        let mut p = Placement::new(m, &c);
        let mut tests = 0;
        assert!(!offload(1, &all_reach(2), &mut p, &c, &mut tests));
        assert_eq!(p.load, before);
        assert_eq!(tests, 1);
    }

    #[test]
    fn sleeping_ec_is_emptied_before_a_lighter_active_one() {
        let mut m = LoadMatrix::zeros(3, 1);
        m.set(0, 0, 0, 10.0);
        m.set(1, 1, 0, 20.0);
        m.set(2, 2, 0, 30.0);
        let mut c = cap(1, 100.0);
        c.demand.truncate(1);
        let r = coverage(m, &all_reach(3), &c, &[true, true, false], true);
        assert_eq!(r.set.len(), 1);
        assert_ne!(r.set[0], 2);
    }

    #[test]
    fn unreachable_entries_are_repaired() {
        let mut m = LoadMatrix::zeros(2, 1);
        m.set(1, 0, 0, 5.0);
        let mut c = cap(1, 100.0);
        c.demand.truncate(1);
        let rs = Reach::from_fn(2, |q, w| q == w, |a, b| a.abs_diff(b));
        let r = coverage(m, &rs, &c, &[true; 2], true);
        assert_eq!(r.set, vec![0]);
    }
}
