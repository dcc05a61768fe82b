//! Command-line front end: `run`, `sweep`, `export-lp`, `validate`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ConfigError, PolicyVariant, ScenarioConfig};
use crate::engine::sweep::{run_sweep, summarize, write_csv, SummaryRow, SweepPoint};
use crate::engine::{run_traced, EngineError, MetricsReport, TraceKind, Tracer};
use crate::orchestrator::lp::{export_lp, from_scenario, LpMode};

#[derive(Debug, Parser)]
#[command(name = "edgenap", version, about = "Energy-aware edge orchestration simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Scenario TOML file.
    pub config: PathBuf,
    /// Override a config key, e.g. `--set t_max=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write its report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Traces to write, comma separated.
        #[arg(long, value_delimiter = ',')]
        trace: Vec<TraceKind>,
    },
    /// Run the policy x t_max x seed grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Latency limits in milliseconds, replacing `sweep.t_max`.
        #[arg(long, value_delimiter = ',')]
        t_max_ms: Vec<f64>,
        /// Replaces `sweep.policies`.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyVariant>,
        /// Replaces `sweep.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Write the scenario's binary program over `steps` ticks as an LP file.
    ExportLp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Mode::Timed)]
        mode: Mode,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print it fully resolved.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Ideal,
    Timed,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = ScenarioConfig::load(&self.config, &self.set)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(e) => e.exit_code(),
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Serialize)]
struct RunOutput<'a> {
    seed: u64,
    config: &'a ScenarioConfig,
    report: &'a MetricsReport,
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    config: &'a ScenarioConfig,
    summary: &'a [SummaryRow],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()
}

/// `# `-prefixed copy of the resolved config.
fn config_comment(cfg: &ScenarioConfig, prefix: &str) -> String {
    cfg.to_toml_string().lines().map(|l| format!("{prefix}{l}\n")).collect()
}

pub fn summary_line(r: &MetricsReport) -> String {
    format!(
        "{} t_max={}ms seed={} energy={:.1}J ratio={:.4} availability={:.5} transitions={} objective={:.4}",
        r.policy,
        r.t_max * 1e3,
        r.seed,
        r.energy_j,
        r.energy_ratio,
        r.availability,
        r.transitions_total,
        r.objective
    )
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out, trace } => {
            let cfg = common.load()?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.to_toml_string())?;
            let tracer = if trace.is_empty() {
                Tracer::none()
            } else {
                Tracer::to_dir(&out, &trace)?
            };
            let report = run_traced(&cfg, tracer)?;
            write_json(
                &out.join("report.json"),
                &RunOutput {
                    seed: cfg.seed,
                    config: &cfg,
                    report: &report,
                },
            )?;
            let point = SweepPoint {
                policy: cfg.policy.variant,
                t_max: cfg.t_max,
                seed: cfg.seed,
            };
            let mut f = BufWriter::new(File::create(out.join("report.csv"))?);
            f.write_all(config_comment(&cfg, "# ").as_bytes())?;
            write_csv(&mut f, &cfg, &[(point, report.clone())])?;
            f.flush()?;
            println!("{}", summary_line(&report));
        }
        Command::Sweep {
            common,
            out,
            jobs,
            t_max_ms,
            policies,
            seeds,
        } => {
            let mut cfg = common.load()?;
            if !t_max_ms.is_empty() {
                cfg.sweep.t_max = t_max_ms.iter().map(|t| t * 1e-3).collect();
            }
            if !policies.is_empty() {
                cfg.sweep.policies = policies;
            }
            if !seeds.is_empty() {
                cfg.sweep.seeds = seeds;
            } else if let Some(s) = common.seed {
                cfg.sweep.seeds = vec![s];
            }
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.to_toml_string())?;
            let rows = run_sweep(&cfg, jobs, Some(&out.join("manifest.jsonl")))?;
            let mut f = BufWriter::new(File::create(out.join("sweep.csv"))?);
            f.write_all(config_comment(&cfg, "# ").as_bytes())?;
            write_csv(&mut f, &cfg, &rows)?;
            f.flush()?;
            let summary = summarize(&rows);
            write_json(
                &out.join("summary.json"),
                &SweepOutput {
                    config: &cfg,
                    summary: &summary,
                },
            )?;
            for s in &summary {
                println!(
                    "{:<10} t_max={:>5}ms energy_ratio={:.4}±{:.4} availability={:.5}±{:.5} seeds={}",
                    s.policy, s.t_max_ms, s.energy_ratio.mean, s.energy_ratio.std, s.availability.mean, s.availability.std, s.seeds
                );
            }
        }
        Command::ExportLp {
            common,
            steps,
            mode,
            out,
        } => {
            let cfg = common.load()?;
            let inst = from_scenario(&cfg, steps)?;
            let mode = match mode {
                Mode::Ideal => LpMode::Ideal,
                Mode::Timed => LpMode::Timed,
            };
            let text = format!("{}{}", config_comment(&cfg, "\\ "), export_lp(&inst, mode));
            match out {
                Some(p) => fs::write(p, text)?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
        }
        Command::Validate { common } => {
            let cfg = common.load()?;
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
