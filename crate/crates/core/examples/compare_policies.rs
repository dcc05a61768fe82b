//! Runs every policy on the reference scenario and prints a one-line summary each.

use edgenap::config::{PolicyVariant, ScenarioConfig};
use edgenap::engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::reference();
    cfg.sim_duration = 600.0;
    cfg.warmup = 60.0;
    let only: Vec<PolicyVariant> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    for v in PolicyVariant::ALL.into_iter().filter(|v| only.is_empty() || only.contains(v)) {
        cfg.policy.variant = v;
        let r = engine::run(&cfg)?;
        println!(
            "{:<10} energy {:>9.0} J  ratio {:.3}  avail {:.5} ({} of {} dropped)  transitions {:>4}  active {:.2}  s4 {:.2}",
            r.policy,
            r.energy_j,
            r.energy_ratio,
            r.availability,
            r.requests_dropped,
            r.requests_violated,
            r.transitions_total,
            r.mean_ecs_in("active"),
            r.mean_ecs_in("s4"),
        );
    }
    Ok(())
}
