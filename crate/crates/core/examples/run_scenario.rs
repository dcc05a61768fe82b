//! Runs one scenario file with power and command traces.
//!
//! `cargo run --example run_scenario -- configs/tiny.toml out/tiny`

use std::path::PathBuf;

use edgenap::cli::summary_line;
use edgenap::config::ScenarioConfig;
use edgenap::engine::{self, TraceKind, Tracer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().unwrap_or_else(|| "configs/tiny.toml".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/run_scenario".into()));
    let cfg = ScenarioConfig::load(&config, &[])?;
    std::fs::create_dir_all(&out)?;
    let tracer = Tracer::to_dir(&out, &[TraceKind::Power, TraceKind::Commands])?;
    let r = engine::run_traced(&cfg, tracer)?;
    println!("{}", summary_line(&r));
    for (ec, e) in r.energy_per_ec_j.iter().enumerate() {
        println!("  ec {ec:>2}: {e:>10.1} J  transitions {}", r.transitions_per_ec[ec]);
    }
    println!("traces in {}", out.display());
    Ok(())
}
