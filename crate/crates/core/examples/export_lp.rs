//! Writes the timed program of the tiny scenario and reports its size.

use std::path::Path;

use edgenap::config::ScenarioConfig;
use edgenap::orchestrator::lp::{count_rows, export_lp, from_scenario, LpMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::load(Path::new("configs/tiny.toml"), &[])?;
    for steps in [1, 2, 4, 8] {
        let inst = from_scenario(&cfg, steps)?;
        let ideal = export_lp(&inst, LpMode::Ideal);
        let timed = export_lp(&inst, LpMode::Timed);
        println!("{steps} steps: ideal {} rows, timed {} rows", count_rows(&ideal), count_rows(&timed));
    }
    let inst = from_scenario(&cfg, 4)?;
    std::fs::create_dir_all("out")?;
    std::fs::write("out/tiny.lp", export_lp(&inst, LpMode::Timed))?;
    println!("wrote out/tiny.lp");
    Ok(())
}
