//! End-to-end latency: radio access, forwarding over M/D/1 links, and the
//! service sojourn at the serving EC.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{EcId, LinkId, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum LatencyError {
    #[error("link saturated: rho = {rho}")]
    Saturated { rho: f64 },
}

/// Mean M/D/1 sojourn on a link: `(2 - rho) / (2 mu (1 - rho))`.
pub fn link_queue_delay(lambda: f64, mu: f64) -> Result<f64, LatencyError> {
    let rho = lambda / mu;
    if !(rho < 1.0) {
        return Err(LatencyError::Saturated { rho });
    }
    Ok((2.0 - rho) / (2.0 * mu * (1.0 - rho)))
}

/// Sum of queueing delay plus per-hop processing over `path`.
pub fn forwarding_latency(
    topology: &Topology,
    path: &[LinkId],
    link_loads: &[f64],
) -> Result<f64, LatencyError> {
    path.iter().try_fold(0.0, |acc, &l| {
        let link = &topology.links[l];
        Ok(acc + link_queue_delay(link_loads[l], link.service_rate)? + link.proc_time)
    })
}

/// Aggregate request rate on each link given `(origin, serving EC, rate)` flows.
pub fn link_loads<I>(topology: &Topology, flows: I) -> Vec<f64>
where
    I: IntoIterator<Item = (EcId, EcId, f64)>,
{
    let mut loads = vec![0.0; topology.links.len()];
    for (src, dst, rate) in flows {
        for &l in topology.route(src, dst).expect("valid EC ids") {
            loads[l] += rate;
        }
    }
    loads
}

/// Latency estimate used for reachability: everything but the service time
/// is deterministic given the link loads, the service time is budgeted.
pub fn path_estimate(
    topology: &Topology,
    src: EcId,
    dst: EcId,
    link_loads: &[f64],
    service_budget: f64,
) -> Result<f64, LatencyError> {
    let path = topology.route(src, dst).expect("valid EC ids");
    Ok(topology.wireless_delay + forwarding_latency(topology, path, link_loads)? + service_budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    Violated,
}

/// Conditions that void a request regardless of its latency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Disruption {
    pub dropped: bool,
    pub service_transitioning: bool,
    pub ec_waking: bool,
}

impl Disruption {
    pub fn any(&self) -> bool {
        self.dropped || self.service_transitioning || self.ec_waking
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySample {
    pub request_id: u64,
    pub t_wireless: f64,
    pub t_f: f64,
    pub t_s: f64,
    pub total: f64,
    pub verdict: Verdict,
}

impl LatencySample {
    pub fn new(request_id: u64, t_wireless: f64, t_f: f64, t_s: f64, t_max: f64, d: Disruption) -> Self {
        let total = t_wireless + t_f + t_s;
        LatencySample {
            request_id,
            t_wireless,
            t_f,
            t_s,
            total,
            verdict: sla_verdict(total, t_max, d),
        }
    }
}

/// The limit itself is still within the SLA.
pub fn sla_verdict(t_u: f64, t_max: f64, d: Disruption) -> Verdict {
    if d.any() || !(t_u <= t_max) {
        Verdict::Violated
    } else {
        Verdict::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Resources;

    #[test]
    fn md1_values() {
        assert_eq!(link_queue_delay(0.0, 1000.0), Ok(0.001));
        assert!((link_queue_delay(500.0, 1000.0).unwrap() - 0.0015).abs() < 1e-15);
        assert!((link_queue_delay(999.0, 1000.0).unwrap() - 0.5005).abs() < 1e-9);
        assert!(link_queue_delay(1000.0, 1000.0).is_err());
    }

    #[test]
    fn md1_matches_discrete_event_run() {
        use crate::config::ServiceTimeLaw;
        use crate::queueing::{simulate_station, StationParams};
        let s = simulate_station(&StationParams {
            cores: 1,
            low_rate: 800.0,
            low_mu: 1000.0,
            low_law: ServiceTimeLaw::Deterministic,
            high_rate: 0.0,
            high_mu: 1.0,
            high_law: ServiceTimeLaw::Deterministic,
            requests: 400_000,
            warmup: 1000,
            seed: 5,
        });
        let expect = link_queue_delay(800.0, 1000.0).unwrap();
        assert!((s.low.mean_sojourn / expect - 1.0).abs() < 0.03, "{} vs {expect}", s.low.mean_sojourn);
    }

    fn grid(rows: usize, cols: usize) -> Topology {
        Topology::grid(rows, cols, 1.0, 1, Resources::new(1, 1), 1000.0, 0.0001, 0.001, vec![])
    }

    #[test]
    fn forwarding_sums_hops() {
        let t = grid(3, 3);
        let loads = vec![0.0; t.links.len()];
        assert_eq!(forwarding_latency(&t, &[], &loads), Ok(0.0));
        let path = t.route(0, 2).unwrap();
        assert!((forwarding_latency(&t, path, &loads).unwrap() - 0.0022).abs() < 1e-15);
    }

    #[test]
    fn loads_follow_routes() {
        let t = grid(1, 3);
        let loads = link_loads(&t, [(0, 2, 10.0), (1, 2, 5.0), (2, 2, 99.0)]);
        assert_eq!(loads, vec![10.0, 15.0]);
    }

    #[test]
    fn verdicts() {
        let none = Disruption::default();
        assert_eq!(sla_verdict(0.007, 0.007, none), Verdict::Ok);
        assert_eq!(sla_verdict(0.0071, 0.007, none), Verdict::Violated);
        let starting = Disruption {
            service_transitioning: true,
            ..none
        };
        assert_eq!(sla_verdict(0.001, 0.007, starting), Verdict::Violated);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn delay_grows_with_load(a in 0.0f64..999.0, b in 0.0f64..999.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(link_queue_delay(lo, 1000.0).unwrap() <= link_queue_delay(hi, 1000.0).unwrap());
            }
        }
    }
}
