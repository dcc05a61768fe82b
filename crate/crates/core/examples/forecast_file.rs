//! Writes the ground-truth load of a run to a forecast file, then runs PNap
//! from that file and from the built-in forecasters.

use edgenap::config::{ForecastKind, ScenarioConfig};
use edgenap::engine::{self, origin_load_at, trajectory};
use edgenap::forecast::{write_forecast, Forecast};
use edgenap::scenario::build_topology;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::reference();
    cfg.sim_duration = 300.0;
    let topo = build_topology(&cfg)?;
    let traj = trajectory(&cfg, &topo);
    let dt = cfg.forecast.step_dt;
    // Enough frames to cover the last tick's horizon.
    let n = ((cfg.sim_duration / dt) as usize) + cfg.forecast.horizon + 1;
    let frames = (1..=n)
        .map(|k| {
            let step = traj.step_at((k as f64 * dt).min(cfg.sim_duration));
            origin_load_at(&traj, step, topo.num_ecs(), topo.num_services(), cfg.services.request_rate)
        })
        .collect();
    let path = std::env::temp_dir().join("edgenap_forecast.txt");
    std::fs::write(&path, write_forecast(&Forecast { step_dt: dt, frames }))?;

    for kind in [ForecastKind::Oracle, ForecastKind::File, ForecastKind::Persistence, ForecastKind::Ewma] {
        let mut c = cfg.clone();
        c.forecast.kind = kind;
        c.forecast.path = Some(path.clone());
        let r = engine::run(&c)?;
        println!("{:<12} energy {:>9.0} J  availability {:.5}", format!("{kind:?}"), r.energy_j, r.availability);
    }
    Ok(())
}
