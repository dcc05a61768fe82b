#![allow(clippy::needless_range_loop)]

use edgenap::config::{PowerConfig, Resources, SleepLevel};
use edgenap::forecast::OriginLoad;
use edgenap::orchestrator::horizon::HorizonInputs;
use edgenap::orchestrator::{aggregate_horizon, coverage, select_sleep_depth, Capacity, Reach};
use edgenap::power::{EcState, PowerTable};
use proptest::prelude::*;

/// Grid reach: ECs within `radius` hops (Manhattan) of the origin.
fn grid_reach(cols: usize, n: usize, radius: usize) -> Reach {
    let hops = move |a: usize, b: usize| (a / cols).abs_diff(b / cols) + (a % cols).abs_diff(b % cols);
    Reach::from_fn(n, move |q, w| hops(q, w) <= radius, hops)
}

fn cap(services: usize) -> Capacity {
    Capacity {
        resources: Resources { cpu: 4, mem: 4 },
        demand: vec![Resources { cpu: 1, mem: 1 }; services],
        service_rate: 10_000.0,
        margin: 0.0,
    }
}

/// Origin loads each of which fits on its own EC.
fn loads() -> impl Strategy<Value = (usize, usize, usize, Vec<Vec<f64>>)> {
    (1usize..4, 1usize..4, 1usize..5, 0usize..3).prop_flat_map(|(rows, cols, services, radius)| {
        let n = rows * cols;
        let row = prop::collection::vec(prop_oneof![Just(0.0), 1.0f64..2_000.0], services);
        (Just(cols), Just(services), Just(radius), prop::collection::vec(row, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn coverage_conserves_load_and_respects_reach((cols, services, radius, rows) in loads(), offload in any::<bool>()) {
        let n = rows.len();
        let origins = OriginLoad::from_rows(rows);
        let rs = grid_reach(cols, n, radius);
        let cap = cap(services);
        let active = vec![true; n];
        let res = coverage(origins.to_matrix(), &rs, &cap, &active, offload);
        let m = &res.placement.load;
        for q in 0..n {
            for s in 0..services {
                let placed: f64 = (0..n).map(|e| m.get(e, q, s)).sum();
                prop_assert!((placed - origins.get(q, s)).abs() < 1e-6);
                for e in 0..n {
                    if m.get(e, q, s) > 0.0 {
                        prop_assert!(rs.contains(q, e), "({q},{s}) on {e}");
                        prop_assert!(res.contains(e));
                    }
                }
            }
        }
        for e in 0..n {
            prop_assert!(res.placement.within_capacity(e, &cap));
            prop_assert_eq!(res.contains(e), res.placement.served(e) > 0.0);
        }
        let loaded = (0..n).filter(|&q| (0..services).any(|s| origins.get(q, s) > 0.0)).count();
        prop_assert!(res.set.len() <= loaded);
        if !offload {
            prop_assert_eq!(res.set.len(), loaded);
        }
    }

    #[test]
    fn horizon_keeps_every_needed_ec((cols, services, radius, rows) in loads(), frames in 1usize..4, busy in any::<u64>()) {
        let n = rows.len();
        let rs = grid_reach(cols, n, radius);
        let cap = cap(services);
        let active = vec![true; n];
        let in_use: Vec<bool> = (0..n).map(|e| busy >> e & 1 == 1).collect();
        // Each frame rotates the origins by one cell.
        let forecast: Vec<OriginLoad> = (0..frames)
            .map(|k| OriginLoad::from_rows((0..n).map(|q| rows[(q + k) % n].clone()).collect()))
            .collect();
        let current = OriginLoad::from_rows(rows.clone()).to_matrix();
        let plan = aggregate_horizon(
            Some(current),
            &forecast,
            5.0,
            HorizonInputs { rs: &rs, cap: &cap, active: &active, offload: true, in_use: &in_use },
        );
        prop_assert_eq!(plan.frames.len(), frames + 1);
        for e in 0..n {
            let first = plan.frames.iter().zip(&plan.offsets).find(|(f, _)| f.contains(e)).map(|(_, &t)| t);
            match first {
                Some(t) => prop_assert!(plan.keep[e] && plan.need_time[e] <= t),
                None if in_use[e] => prop_assert_eq!(plan.need_time[e], 0.0),
                None => prop_assert!(!plan.keep[e] && plan.need_time[e].is_infinite()),
            }
            for s in 0..services {
                prop_assert!(plan.service_need[e][s] >= plan.need_time[e] || in_use[e]);
            }
        }
    }

    #[test]
    fn chosen_sleep_depth_wakes_in_time(need in 0.0f64..120.0, margin in 0.0f64..2.0) {
        let table = PowerTable::from_config(&PowerConfig::reference()).unwrap();
        let levels = [SleepLevel::S1, SleepLevel::S3, SleepLevel::S4];
        match select_sleep_depth(need, &table, margin, &levels) {
            EcState::Active => prop_assert!(need < table.spec(SleepLevel::S1).up_delay + margin),
            EcState::Sleep(l) => {
                prop_assert!(table.spec(l).up_delay + margin <= need);
                // No deeper level would also have fit.
                for deeper in levels.iter().filter(|&&d| d > l) {
                    prop_assert!(table.spec(*deeper).up_delay + margin > need);
                }
            }
        }
    }
}
