//! Run metrics: energy, availability, state occupancy and transitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::SleepLevel;
use crate::power::EcState;

/// Occupancy categories, in report order.
pub const CATEGORIES: [&str; 6] = ["active", "s1", "s2", "s3", "s4", "transition"];

pub(crate) fn category(state: EcState, transitioning: bool) -> usize {
    if transitioning {
        return 5;
    }
    match state {
        EcState::Active => 0,
        EcState::Sleep(SleepLevel::S1) => 1,
        EcState::Sleep(SleepLevel::S2) => 2,
        EcState::Sleep(SleepLevel::S3) => 3,
        EcState::Sleep(SleepLevel::S4) => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub seed: u64,
    pub t_max: f64,
    pub sim_duration: f64,
    pub warmup: f64,
    pub energy_j: f64,
    pub energy_per_ec_j: Vec<f64>,
    /// Energy over what every EC would draw at peak for the whole window.
    pub energy_ratio: f64,
    pub requests_total: u64,
    pub requests_violated: u64,
    /// Violations caused by a sleeping or transitioning EC or service.
    pub requests_dropped: u64,
    pub availability: f64,
    /// Fraction of time per category, averaged over ECs.
    pub occupancy: BTreeMap<String, f64>,
    pub occupancy_per_ec: Vec<BTreeMap<String, f64>>,
    pub transitions_per_ec: Vec<u64>,
    pub transitions_total: u64,
    pub service_transitions_total: u64,
    /// `w_power * mean power + w_violation * violations per second`.
    pub objective: f64,
}

impl MetricsReport {
    /// Mean number of ECs in a category over the window.
    pub fn mean_ecs_in(&self, category: &str) -> f64 {
        self.occupancy.get(category).copied().unwrap_or(0.0) * self.energy_per_ec_j.len() as f64
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EcMeter {
    last: f64,
    pub energy: f64,
    pub occupancy: [f64; 6],
    pub transitions: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct Meter {
    pub warmup: f64,
    pub ecs: Vec<EcMeter>,
    pub requests_total: u64,
    pub violated: u64,
    pub dropped: u64,
    pub service_transitions: u64,
}

impl Meter {
    pub fn new(n_ecs: usize, warmup: f64) -> Self {
        Meter {
            warmup,
            ecs: vec![EcMeter::default(); n_ecs],
            requests_total: 0,
            violated: 0,
            dropped: 0,
            service_transitions: 0,
        }
    }

    /// Accounts EC `ec` drawing `watts` in `cat` from its last update to `now`.
    /// Returns the energy added inside the measured window.
    pub fn advance(&mut self, ec: usize, now: f64, watts: f64, cat: usize) -> f64 {
        let m = &mut self.ecs[ec];
        let from = m.last.max(self.warmup);
        m.last = now;
        if now <= from {
            return 0.0;
        }
        let dt = now - from;
        m.energy += watts * dt;
        m.occupancy[cat] += dt;
        watts * dt
    }

    pub fn counts(&self, t: f64) -> bool {
        t >= self.warmup
    }

    pub fn record(&mut self, t_arrival: f64, violated: bool, dropped: bool) {
        if !self.counts(t_arrival) {
            return;
        }
        self.requests_total += 1;
        if violated {
            self.violated += 1;
        }
        if dropped {
            self.dropped += 1;
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn report(&self, policy: &str, seed: u64, t_max: f64, end: f64, p_peak: f64, weights: (f64, f64)) -> MetricsReport {
        let window = (end - self.warmup).max(0.0);
        let n = self.ecs.len();
        let energy_per_ec_j: Vec<f64> = self.ecs.iter().map(|m| m.energy).collect();
        let energy_j: f64 = energy_per_ec_j.iter().sum();
        let frac = |x: f64| if window > 0.0 { x / window } else { 0.0 };
        let occupancy_per_ec: Vec<BTreeMap<String, f64>> = self
            .ecs
            .iter()
            .map(|m| {
                CATEGORIES
                    .iter()
                    .zip(m.occupancy)
                    .map(|(c, t)| (c.to_string(), frac(t)))
                    .collect()
            })
            .collect();
        let occupancy = CATEGORIES
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mean = self.ecs.iter().map(|m| frac(m.occupancy[i])).sum::<f64>() / n.max(1) as f64;
                (c.to_string(), mean)
            })
            .collect();
        let transitions_per_ec: Vec<u64> = self.ecs.iter().map(|m| m.transitions).collect();
        let peak = n as f64 * p_peak * window;
        MetricsReport {
            policy: policy.to_string(),
            seed,
            t_max,
            sim_duration: end,
            warmup: self.warmup,
            energy_j,
            energy_per_ec_j,
            energy_ratio: if peak > 0.0 { energy_j / peak } else { 0.0 },
            requests_total: self.requests_total,
            requests_violated: self.violated,
            requests_dropped: self.dropped,
            availability: if self.requests_total > 0 {
                1.0 - self.violated as f64 / self.requests_total as f64
            } else {
                1.0
            },
            occupancy,
            occupancy_per_ec,
            transitions_total: transitions_per_ec.iter().sum(),
            transitions_per_ec,
            service_transitions_total: self.service_transitions,
            objective: if window > 0.0 {
                weights.0 * energy_j / window + weights.1 * self.violated as f64 / window
            } else {
                0.0
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_clipped() {
        let mut m = Meter::new(1, 10.0);
        assert_eq!(m.advance(0, 5.0, 100.0, 0), 0.0);
        assert_eq!(m.advance(0, 15.0, 100.0, 0), 500.0);
        m.record(9.0, true, true);
        m.record(11.0, true, false);
        m.record(12.0, false, false);
        let r = m.report("x", 1, 0.007, 20.0, 200.0, (1.0, 1.0));
        assert_eq!(r.energy_j, 500.0);
        assert_eq!(r.requests_total, 2);
        assert_eq!(r.availability, 0.5);
        assert_eq!(r.occupancy["active"], 0.5);
    }
}
