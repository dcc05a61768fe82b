//! Parameter sweeps over policies, latency limits and seeds.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, PolicyVariant, ScenarioConfig};

use super::{run, EngineError, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub policy: PolicyVariant,
    pub t_max: f64,
    pub seed: u64,
}

impl SweepPoint {
    fn key(&self) -> (PolicyVariant, u64, u64) {
        (self.policy, (self.t_max * 1e9).round() as u64, self.seed)
    }

    pub fn config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut c = base.clone();
        c.policy.variant = self.policy;
        c.t_max = self.t_max;
        c.seed = self.seed;
        c
    }
}

/// The grid of `cfg.sweep`, in output order. Latency limits equal to the
/// nanosecond are merged.
pub fn sweep_points(cfg: &ScenarioConfig) -> Result<Vec<SweepPoint>, ConfigError> {
    let s = &cfg.sweep;
    for (name, empty) in [
        ("sweep.t_max", s.t_max.is_empty()),
        ("sweep.policies", s.policies.is_empty()),
        ("sweep.seeds", s.seeds.is_empty()),
    ] {
        if empty {
            return Err(ConfigError::invalid(name, "empty list"));
        }
    }
    let mut pts: Vec<SweepPoint> = s
        .policies
        .iter()
        .flat_map(|&policy| {
            s.t_max
                .iter()
                .flat_map(move |&t_max| s.seeds.iter().map(move |&seed| SweepPoint { policy, t_max, seed }))
        })
        .collect();
    pts.sort_by_key(|p| p.key());
    pts.dedup_by_key(|p| p.key());
    Ok(pts)
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    point: SweepPoint,
    report: MetricsReport,
}

/// Runs every point on `jobs` threads. With a manifest path, finished points
/// are appended as JSON lines and a rerun skips the ones already there.
pub fn run_sweep(cfg: &ScenarioConfig, jobs: usize, manifest: Option<&Path>) -> Result<Vec<(SweepPoint, MetricsReport)>, EngineError> {
    let points = sweep_points(cfg)?;
    for p in &points {
        p.config(cfg).validate()?;
    }
    let mut done: BTreeMap<(PolicyVariant, u64, u64), MetricsReport> = BTreeMap::new();
    let sink = match manifest {
        Some(path) => {
            let header = manifest_header(cfg);
            if let Some(prev) = read_manifest(path, &header)? {
                done = prev.into_iter().map(|l| (l.point.key(), l.report)).collect();
            } else {
                let mut f = File::create(path)?;
                writeln!(f, "{header}")?;
            }
            Some(Mutex::new(OpenOptions::new().append(true).open(path)?))
        }
        None => None,
    };
    let todo: Vec<SweepPoint> = points.iter().copied().filter(|p| !done.contains_key(&p.key())).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let fresh: Vec<Result<(SweepPoint, MetricsReport), EngineError>> = pool.install(|| {
        todo.par_iter()
            .map(|p| {
                let r = run(&p.config(cfg))?;
                if let Some(m) = &sink {
                    let line = serde_json::to_string(&ManifestLine { point: *p, report: r.clone() }).map_err(io::Error::other)?;
                    let mut f = m.lock().expect("manifest lock");
                    writeln!(f, "{line}")?;
                    f.flush()?;
                }
                Ok((*p, r))
            })
            .collect()
    });
    for r in fresh {
        let (p, rep) = r?;
        done.insert(p.key(), rep);
    }
    Ok(points
        .into_iter()
        .map(|p| {
            let r = done.remove(&p.key()).expect("every point ran");
            (p, r)
        })
        .collect())
}

fn manifest_header(cfg: &ScenarioConfig) -> String {
    let mut base = cfg.clone();
    base.sweep = Default::default();
    serde_json::json!({ "config": base.to_toml_string() }).to_string()
}

/// Lines of an existing manifest written for the same base config.
fn read_manifest(path: &Path, header: &str) -> io::Result<Option<Vec<ManifestLine>>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut lines = BufReader::new(f).lines();
    match lines.next() {
        Some(Ok(h)) if h == header => {}
        _ => return Ok(None),
    }
    let mut out = Vec::new();
    for l in lines {
        // A torn last line from an interrupted run is ignored.
        if let Ok(entry) = serde_json::from_str::<ManifestLine>(&l?) {
            out.push(entry);
        }
    }
    Ok(Some(out))
}

pub const CSV_COLUMNS: [&str; 13] = [
    "policy",
    "t_max_ms",
    "seed",
    "energy_J",
    "energy_ratio",
    "availability",
    "transitions_total",
    "occupancy_active",
    "occupancy_s1",
    "occupancy_s2",
    "occupancy_s3",
    "occupancy_s4",
    "objective",
];

fn occ(r: &MetricsReport, c: &str) -> f64 {
    r.occupancy.get(c).copied().unwrap_or(0.0)
}

pub fn write_csv<W: Write>(mut w: W, cfg: &ScenarioConfig, rows: &[(SweepPoint, MetricsReport)]) -> io::Result<()> {
    writeln!(w, "# edgenap sweep")?;
    writeln!(
        w,
        "# sim_duration={} warmup={} users={} ecs={}",
        cfg.sim_duration,
        cfg.warmup,
        cfg.users.count,
        cfg.grid.rows * cfg.grid.cols
    )?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(CSV_COLUMNS)?;
    for (p, r) in rows {
        c.write_record([
            p.policy.to_string(),
            format!("{}", p.t_max * 1e3),
            p.seed.to_string(),
            r.energy_j.to_string(),
            r.energy_ratio.to_string(),
            r.availability.to_string(),
            r.transitions_total.to_string(),
            occ(r, "active").to_string(),
            occ(r, "s1").to_string(),
            occ(r, "s2").to_string(),
            occ(r, "s3").to_string(),
            occ(r, "s4").to_string(),
            r.objective.to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Sample mean and standard deviation (n - 1).
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyVariant,
    pub t_max_ms: f64,
    pub seeds: usize,
    pub energy_j: Stat,
    pub energy_ratio: Stat,
    pub availability: Stat,
    pub transitions_total: Stat,
    pub ecs_active: Stat,
    pub ecs_s4: Stat,
    pub objective: Stat,
}

/// Mean and spread over seeds for each (policy, t_max).
pub fn summarize(rows: &[(SweepPoint, MetricsReport)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(PolicyVariant, u64), Vec<&(SweepPoint, MetricsReport)>> = BTreeMap::new();
    for row in rows {
        let (pol, t, _) = row.0.key();
        groups.entry((pol, t)).or_default().push(row);
    }
    groups
        .into_values()
        .map(|g| {
            let stat = |f: &dyn Fn(&MetricsReport) -> f64| Stat::of(&g.iter().map(|(_, r)| f(r)).collect::<Vec<_>>());
            SummaryRow {
                policy: g[0].0.policy,
                t_max_ms: g[0].0.t_max * 1e3,
                seeds: g.len(),
                energy_j: stat(&|r| r.energy_j),
                energy_ratio: stat(&|r| r.energy_ratio),
                availability: stat(&|r| r.availability),
                transitions_total: stat(&|r| r.transitions_total as f64),
                ecs_active: stat(&|r| r.mean_ecs_in("active")),
                ecs_s4: stat(&|r| r.mean_ecs_in("s4")),
                objective: stat(&|r| r.objective),
            }
        })
        .collect()
}
