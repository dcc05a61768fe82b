//! Load tensors and horizon forecasters.
//!
//! # Forecast file format
//!
//! Plain text, `#` starts a comment, blank lines are ignored. The first
//! record is the header `E S H step_dt`. It is followed by `H` frames, each
//! introduced by a `frame k` line (`k` counting from 1) and holding `E` rows
//! of `S` whitespace-separated non-negative request rates; row `q` is the
//! origin EC, column `s` the service. Frame `k` describes the load at
//! `k * step_dt` seconds after the start of the run.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::scenario::{EcId, ServiceId};

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("cannot read forecast file: {0}")]
    Io(String),
    #[error("forecast file line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("forecast frame {frame}: {reason}")]
    Frame { frame: usize, reason: String },
    #[error("forecast header: {0}")]
    Header(String),
    #[error("forecast needs frame {needed} but the file has {available}")]
    OutOfRange { needed: usize, available: usize },
    #[error("empty load history")]
    NoHistory,
}

/// Request rate per (origin EC, service).
#[derive(Debug, Clone, PartialEq)]
pub struct OriginLoad {
    e: usize,
    s: usize,
    rates: Vec<f64>,
}

impl OriginLoad {
    pub fn zeros(e: usize, s: usize) -> Self {
        OriginLoad {
            e,
            s,
            rates: vec![0.0; e * s],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let e = rows.len();
        let s = rows.first().map_or(0, Vec::len);
        OriginLoad {
            e,
            s,
            rates: rows.into_iter().flatten().collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.e, self.s)
    }

    pub fn get(&self, q: EcId, s: ServiceId) -> f64 {
        self.rates[q * self.s + s]
    }

    pub fn add(&mut self, q: EcId, s: ServiceId, v: f64) {
        self.rates[q * self.s + s] += v;
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Places every origin's load on its own EC.
    pub fn to_matrix(&self) -> LoadMatrix {
        let mut m = LoadMatrix::zeros(self.e, self.s);
        for q in 0..self.e {
            for s in 0..self.s {
                m.set(q, q, s, self.get(q, s));
            }
        }
        m
    }
}

/// Load served at EC `n` that originates in `q`'s cell for service `s`,
/// indexed `[n][q][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMatrix {
    e: usize,
    s: usize,
    data: Vec<f64>,
}

impl LoadMatrix {
    pub fn zeros(e: usize, s: usize) -> Self {
        LoadMatrix {
            e,
            s,
            data: vec![0.0; e * e * s],
        }
    }

    pub fn num_ecs(&self) -> usize {
        self.e
    }

    pub fn num_services(&self) -> usize {
        self.s
    }

    #[inline]
    fn idx(&self, n: EcId, q: EcId, s: ServiceId) -> usize {
        (n * self.e + q) * self.s + s
    }

    pub fn get(&self, n: EcId, q: EcId, s: ServiceId) -> f64 {
        self.data[self.idx(n, q, s)]
    }

    pub fn set(&mut self, n: EcId, q: EcId, s: ServiceId, v: f64) {
        let i = self.idx(n, q, s);
        self.data[i] = v;
    }

    pub fn add(&mut self, n: EcId, q: EcId, s: ServiceId, v: f64) {
        let i = self.idx(n, q, s);
        self.data[i] += v;
    }

    fn row(&self, n: EcId) -> &[f64] {
        let w = self.e * self.s;
        &self.data[n * w..(n + 1) * w]
    }

    /// Total load served at `n`.
    pub fn served(&self, n: EcId) -> f64 {
        self.row(n).iter().sum()
    }

    pub fn served_service(&self, n: EcId, s: ServiceId) -> f64 {
        (0..self.e).map(|q| self.get(n, q, s)).sum()
    }

    /// Does `n` serve any load of `s`?
    pub fn hosts(&self, n: EcId, s: ServiceId) -> bool {
        (0..self.e).any(|q| self.get(n, q, s) > 0.0)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Non-zero `(q, s, rate)` entries served at `n`, in index order.
    pub fn entries(&self, n: EcId) -> impl Iterator<Item = (EcId, ServiceId, f64)> + '_ {
        let s = self.s;
        self.row(n)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(move |(i, v)| (i / s, i % s, *v))
    }

    /// The origin layer: load summed over serving ECs.
    pub fn origins(&self) -> OriginLoad {
        let mut o = OriginLoad::zeros(self.e, self.s);
        for n in 0..self.e {
            for (q, s, v) in self.entries(n) {
                o.add(q, s, v);
            }
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub step_dt: f64,
    /// Frame `k` (0-based) predicts the load at `now + (k + 1) * step_dt`.
    pub frames: Vec<OriginLoad>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    /// Frames as load matrices with each origin served locally.
    pub fn matrices(&self) -> Vec<LoadMatrix> {
        self.frames.iter().map(OriginLoad::to_matrix).collect()
    }
}

pub trait Forecaster: Send {
    /// `history` holds the origin loads observed so far, oldest first.
    fn predict(
        &mut self,
        now: f64,
        history: &[OriginLoad],
        horizon: usize,
        step_dt: f64,
    ) -> Result<Forecast, ForecastError>;
}

/// Reads the true future from the run's ground truth.
pub struct OracleForecaster {
    truth: Arc<dyn Fn(f64) -> OriginLoad + Send + Sync>,
}

impl OracleForecaster {
    pub fn new(truth: Arc<dyn Fn(f64) -> OriginLoad + Send + Sync>) -> Self {
        OracleForecaster { truth }
    }
}

impl Forecaster for OracleForecaster {
    fn predict(&mut self, now: f64, _: &[OriginLoad], horizon: usize, step_dt: f64) -> Result<Forecast, ForecastError> {
        let frames = (1..=horizon).map(|k| (self.truth)(now + k as f64 * step_dt)).collect();
        Ok(Forecast { step_dt, frames })
    }
}

/// Repeats the last observation.
pub struct PersistenceForecaster;

impl Forecaster for PersistenceForecaster {
    fn predict(&mut self, _: f64, history: &[OriginLoad], horizon: usize, step_dt: f64) -> Result<Forecast, ForecastError> {
        let last = history.last().ok_or(ForecastError::NoHistory)?;
        Ok(Forecast {
            step_dt,
            frames: vec![last.clone(); horizon],
        })
    }
}

/// Exponentially weighted level, extrapolated flat over the horizon.
pub struct EwmaForecaster {
    pub weight: f64,
}

impl Forecaster for EwmaForecaster {
    fn predict(&mut self, _: f64, history: &[OriginLoad], horizon: usize, step_dt: f64) -> Result<Forecast, ForecastError> {
        let mut iter = history.iter();
        let mut level = iter.next().ok_or(ForecastError::NoHistory)?.clone();
        for obs in iter {
            for (l, x) in level.rates.iter_mut().zip(&obs.rates) {
                *l = self.weight * x + (1.0 - self.weight) * *l;
            }
        }
        Ok(Forecast {
            step_dt,
            frames: vec![level; horizon],
        })
    }
}

/// Serves horizon windows out of a run-long forecast read from a file.
pub struct FileForecaster {
    source: Forecast,
}

impl FileForecaster {
    pub fn new(source: Forecast) -> Self {
        FileForecaster { source }
    }
}

impl Forecaster for FileForecaster {
    fn predict(&mut self, now: f64, _: &[OriginLoad], horizon: usize, step_dt: f64) -> Result<Forecast, ForecastError> {
        let src = &self.source;
        let mut frames = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let t = now + k as f64 * step_dt;
            let idx = (t / src.step_dt).round() as usize;
            if idx == 0 || idx > src.frames.len() {
                return Err(ForecastError::OutOfRange {
                    needed: idx,
                    available: src.frames.len(),
                });
            }
            frames.push(src.frames[idx - 1].clone());
        }
        Ok(Forecast { step_dt, frames })
    }
}

/// Parses a forecast file and checks it against the scenario shape.
pub fn ingest_forecast_file(path: &Path, ecs: usize, services: usize) -> Result<Forecast, ForecastError> {
    let text = std::fs::read_to_string(path).map_err(|e| ForecastError::Io(format!("{}: {e}", path.display())))?;
    parse_forecast(&text, ecs, services)
}

pub fn parse_forecast(text: &str, ecs: usize, services: usize) -> Result<Forecast, ForecastError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| ForecastError::Header("missing".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(ForecastError::Syntax {
            line: hline,
            reason: "header must be `E S H step_dt`".into(),
        });
    }
    let int = |s: &str| {
        s.parse::<usize>().map_err(|_| ForecastError::Syntax {
            line: hline,
            reason: format!("`{s}` is not a count"),
        })
    };
    let (e, s, h) = (int(fields[0])?, int(fields[1])?, int(fields[2])?);
    let step_dt: f64 = fields[3].parse().map_err(|_| ForecastError::Syntax {
        line: hline,
        reason: format!("`{}` is not a duration", fields[3]),
    })?;
    if h == 0 {
        return Err(ForecastError::Header("H must be >= 1".into()));
    }
    if !(step_dt > 0.0) {
        return Err(ForecastError::Header("step_dt must be > 0".into()));
    }
    if e != ecs || s != services {
        return Err(ForecastError::Header(format!(
            "shape {e}x{s} does not match the scenario's {ecs}x{services}"
        )));
    }

    let mut frames = Vec::with_capacity(h);
    for k in 1..=h {
        let (line, marker) = lines.next().ok_or_else(|| ForecastError::Frame {
            frame: k,
            reason: "missing".into(),
        })?;
        if marker.split_whitespace().collect::<Vec<_>>() != ["frame", &k.to_string()] {
            return Err(ForecastError::Syntax {
                line,
                reason: format!("expected `frame {k}`"),
            });
        }
        let mut rows = Vec::with_capacity(e);
        for q in 0..e {
            let (_, row) = lines.next().ok_or_else(|| ForecastError::Frame {
                frame: k,
                reason: format!("has only {q} of {e} rows"),
            })?;
            let vals = row
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|err| ForecastError::Frame {
                    frame: k,
                    reason: format!("row {q}: {err}"),
                })?;
            if vals.len() != s {
                return Err(ForecastError::Frame {
                    frame: k,
                    reason: format!("row {q} has {} values, expected {s}", vals.len()),
                });
            }
            if let Some(v) = vals.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(ForecastError::Frame {
                    frame: k,
                    reason: format!("row {q} has invalid rate {v}"),
                });
            }
            rows.push(vals);
        }
        frames.push(OriginLoad::from_rows(rows));
    }
    if let Some((line, _)) = lines.next() {
        return Err(ForecastError::Syntax {
            line,
            reason: "trailing content after the last frame".into(),
        });
    }
    Ok(Forecast { step_dt, frames })
}

/// Writes `forecast` in the file format above.
pub fn write_forecast(forecast: &Forecast) -> String {
    use std::fmt::Write;
    let (e, s) = forecast.frames.first().map_or((0, 0), OriginLoad::shape);
    let mut out = format!("{e} {s} {} {}\n", forecast.horizon(), forecast.step_dt);
    for (k, f) in forecast.frames.iter().enumerate() {
        writeln!(out, "frame {}", k + 1).unwrap();
        for q in 0..e {
            let row: Vec<String> = (0..s).map(|j| f.get(q, j).to_string()).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(v: f64) -> OriginLoad {
        OriginLoad::from_rows(vec![vec![v, 0.0], vec![1.0, v]])
    }

    #[test]
    fn persistence_repeats_last() {
        let f = PersistenceForecaster.predict(0.0, &[obs(1.0), obs(3.0)], 4, 5.0).unwrap();
        assert_eq!(f.frames, vec![obs(3.0); 4]);
        assert!(PersistenceForecaster.predict(0.0, &[], 4, 5.0).is_err());
    }

    #[test]
    fn ewma_weight_one_is_persistence() {
        let h = [obs(1.0), obs(7.0), obs(2.0)];
        let a = EwmaForecaster { weight: 1.0 }.predict(0.0, &h, 3, 5.0).unwrap();
        let b = PersistenceForecaster.predict(0.0, &h, 3, 5.0).unwrap();
        assert_eq!(a, b);
        let half = EwmaForecaster { weight: 0.5 }.predict(0.0, &h, 1, 5.0).unwrap();
        assert_eq!(half.frames[0].get(0, 0), 0.5 * 2.0 + 0.5 * (0.5 * 7.0 + 0.5 * 1.0));
    }

    #[test]
    fn oracle_reads_truth_at_frame_times() {
        let truth: Arc<dyn Fn(f64) -> OriginLoad + Send + Sync> = Arc::new(obs);
        let f = OracleForecaster::new(truth).predict(10.0, &[], 3, 5.0).unwrap();
        assert_eq!(f.frames, vec![obs(15.0), obs(20.0), obs(25.0)]);
    }

    #[test]
    fn matrix_accessors() {
        let mut m = LoadMatrix::zeros(3, 2);
        m.set(1, 0, 1, 4.0);
        m.set(1, 2, 0, 1.0);
        assert_eq!(m.served(1), 5.0);
        assert_eq!(m.entries(1).collect::<Vec<_>>(), vec![(0, 1, 4.0), (2, 0, 1.0)]);
        assert!(m.hosts(1, 1) && !m.hosts(0, 1));
        assert_eq!(m.origins().get(0, 1), 4.0);
    }

    fn sample_file(h: usize) -> String {
        let mut s = format!("# test\n2 2 {h} 5\n");
        for k in 1..=h {
            s += &format!("frame {k}\n{k} 0\n0.5 1 # trailing comment\n");
        }
        s
    }

    #[test]
    fn parse_valid_file() {
        let f = parse_forecast(&sample_file(10), 2, 2).unwrap();
        assert_eq!(f.horizon(), 10);
        assert_eq!(f.step_dt, 5.0);
        assert_eq!(f.frames[2].get(0, 0), 3.0);
        assert_eq!(parse_forecast(&write_forecast(&f), 2, 2).unwrap(), f);
    }

    #[test]
    fn reject_bad_files() {
        assert!(matches!(parse_forecast("2 2 0 5\n", 2, 2), Err(ForecastError::Header(_))));
        let neg = sample_file(2).replace("2 0\n", "-2 0\n");
        assert!(matches!(parse_forecast(&neg, 2, 2), Err(ForecastError::Frame { frame: 2, .. })));
        assert!(matches!(parse_forecast(&sample_file(2), 3, 2), Err(ForecastError::Header(_))));
        let short = sample_file(2).replace("0.5 1 # trailing comment\n", "0.5\n");
        assert!(matches!(parse_forecast(&short, 2, 2), Err(ForecastError::Frame { frame: 1, .. })));
    }

    #[test]
    fn file_forecaster_slices_windows() {
        let f = parse_forecast(&sample_file(10), 2, 2).unwrap();
        let mut fc = FileForecaster::new(f);
        let w = fc.predict(10.0, &[], 3, 5.0).unwrap();
        assert_eq!(w.frames[0].get(0, 0), 3.0);
        assert_eq!(w.frames[2].get(0, 0), 5.0);
        assert!(fc.predict(40.0, &[], 3, 5.0).is_err());
    }
}
