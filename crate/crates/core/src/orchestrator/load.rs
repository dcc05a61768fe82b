//! Reachability sets and the capacity model behind the offloading test.

use crate::config::Resources;
use crate::forecast::LoadMatrix;
use crate::latency::path_estimate;
use crate::scenario::{EcId, ServiceId, Topology};

/// `rs[q]`: ECs that can serve load originating in `q`'s cell within the
/// latency limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Reach {
    n: usize,
    member: Vec<bool>,
    /// Hop distance, used to order offloading candidates.
    dist: Vec<usize>,
}

impl Reach {
    /// Builds from a predicate and a distance function.
    pub fn from_fn(n: usize, ok: impl Fn(EcId, EcId) -> bool, dist: impl Fn(EcId, EcId) -> usize) -> Self {
        let mut member = vec![false; n * n];
        let mut d = vec![0; n * n];
        for q in 0..n {
            for w in 0..n {
                member[q * n + w] = ok(q, w);
                d[q * n + w] = dist(q, w);
            }
        }
        Reach { n, member, dist: d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn contains(&self, q: EcId, w: EcId) -> bool {
        self.member[q * self.n + w]
    }

    pub fn distance(&self, q: EcId, w: EcId) -> usize {
        self.dist[q * self.n + w]
    }

    pub fn set(&self, q: EcId) -> Vec<EcId> {
        (0..self.n).filter(|&w| self.contains(q, w)).collect()
    }
}

/// Reachability on a topology under the current link loads. Saturated paths
/// are unreachable.
pub fn reachability_set(
    topology: &Topology,
    t_max: f64,
    link_loads: &[f64],
    service_budget: f64,
) -> Reach {
    Reach::from_fn(
        topology.num_ecs(),
        |q, w| {
            path_estimate(topology, q, w, link_loads, service_budget).is_ok_and(|t| t <= t_max)
        },
        |q, w| topology.hops(q, w),
    )
}

/// Static inputs of the capacity test.
#[derive(Debug, Clone)]
pub struct Capacity {
    pub resources: Resources,
    /// Per-service resource demand while running.
    pub demand: Vec<Resources>,
    /// `c * mu_s`: request rate an EC can sustain.
    pub service_rate: f64,
    /// Required utilisation headroom.
    pub margin: f64,
}

impl Capacity {
    /// Utilisation must stay strictly below this bound.
    pub fn rho_limit(&self) -> f64 {
        1.0 - self.margin
    }
}

/// A load matrix with incrementally maintained per-EC aggregates.
#[derive(Debug, Clone)]
pub struct Placement {
    pub load: LoadMatrix,
    served: Vec<f64>,
    /// `[n][s]` load of service `s` served at `n`.
    per_service: Vec<f64>,
    hosted: Vec<Resources>,
    s: usize,
}

impl Placement {
    pub fn new(load: LoadMatrix, cap: &Capacity) -> Self {
        let (e, s) = (load.num_ecs(), load.num_services());
        let mut p = Placement {
            served: vec![0.0; e],
            per_service: vec![0.0; e * s],
            hosted: vec![Resources::ZERO; e],
            s,
            load,
        };
        for n in 0..e {
            for (_, sv, v) in p.load.entries(n).collect::<Vec<_>>() {
                p.served[n] += v;
                p.per_service[n * s + sv] += v;
            }
            for sv in 0..s {
                if p.per_service[n * s + sv] > 0.0 {
                    p.hosted[n] += cap.demand[sv];
                }
            }
        }
        p
    }

    pub fn served(&self, n: EcId) -> f64 {
        self.served[n]
    }

    pub fn hosts(&self, n: EcId, s: ServiceId) -> bool {
        self.per_service[n * self.s + s] > 0.0
    }

    pub fn hosted_resources(&self, n: EcId) -> Resources {
        self.hosted[n]
    }

    pub fn utilisation(&self, n: EcId, cap: &Capacity) -> f64 {
        self.served[n] / cap.service_rate
    }

    /// Would `n` still be within capacity after taking `rate` of service `s`?
    pub fn can_support(&self, n: EcId, s: ServiceId, rate: f64, cap: &Capacity) -> bool {
        let res = if self.hosts(n, s) {
            self.hosted[n]
        } else {
            self.hosted[n] + cap.demand[s]
        };
        res.fits_within(&cap.resources) && (self.served[n] + rate) / cap.service_rate < cap.rho_limit()
    }

    /// Is `n` currently within capacity?
    pub fn within_capacity(&self, n: EcId, cap: &Capacity) -> bool {
        self.hosted[n].fits_within(&cap.resources)
            && (self.served[n] == 0.0 || self.served[n] / cap.service_rate < cap.rho_limit())
    }

    /// Moves the whole `(q, s)` entry from `from` to `to`.
    pub fn move_entry(&mut self, from: EcId, to: EcId, q: EcId, s: ServiceId, cap: &Capacity) {
        let v = self.load.get(from, q, s);
        if v == 0.0 || from == to {
            return;
        }
        self.load.set(from, q, s, 0.0);
        self.load.add(to, q, s, v);
        self.served[from] -= v;
        self.served[to] += v;
        let (fi, ti) = (from * self.s + s, to * self.s + s);
        let to_had = self.per_service[ti] > 0.0;
        self.per_service[fi] -= v;
        self.per_service[ti] += v;
        if self.served[from].abs() < 1e-9 {
            self.served[from] = 0.0;
        }
        if !self.load.hosts(from, s) {
            self.per_service[fi] = 0.0;
            self.hosted[from] = self.hosted[from].saturating_sub(&cap.demand[s]);
        }
        if !to_had {
            self.hosted[to] += cap.demand[s];
        }
    }

    /// Serving EC of each `(q, s)` pair with load, `index = q * S + s`. When a
    /// pair is split the most loaded server wins, then the lowest id.
    pub fn assignment(&self) -> Vec<Option<EcId>> {
        let (e, s) = (self.load.num_ecs(), self.s);
        let mut best: Vec<Option<(EcId, f64)>> = vec![None; e * s];
        for n in 0..e {
            for (q, sv, v) in self.load.entries(n) {
                let slot = &mut best[q * s + sv];
                if slot.is_none_or(|(_, bv)| v > bv) {
                    *slot = Some((n, v));
                }
            }
        }
        best.into_iter().map(|b| b.map(|(n, _)| n)).collect()
    }
}
