//! Energy and availability against the latency limit, mean ± std over seeds.

use edgenap::config::{PolicyVariant, ScenarioConfig};
use edgenap::engine::sweep::{run_sweep, summarize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::reference();
    cfg.sim_duration = 300.0;
    cfg.warmup = 30.0;
    cfg.sweep.policies = vec![PolicyVariant::Pnap, PolicyVariant::Sleepy];
    cfg.sweep.t_max = vec![0.003, 0.005, 0.007, 0.009, 0.011];
    cfg.sweep.seeds = vec![1, 2];
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = run_sweep(&cfg, jobs, None)?;
    println!("{:<8} {:>6} {:>16} {:>18} {:>8}", "policy", "t_max", "energy_ratio", "availability", "in s4");
    for s in summarize(&rows) {
        println!(
            "{:<8} {:>4}ms {:>8.4} ±{:.4} {:>9.5} ±{:.5} {:>8.2}",
            s.policy.as_str(),
            s.t_max_ms,
            s.energy_ratio.mean,
            s.energy_ratio.std,
            s.availability.mean,
            s.availability.std,
            s.ecs_s4.mean
        );
    }
    Ok(())
}
