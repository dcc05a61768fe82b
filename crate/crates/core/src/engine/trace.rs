//! Optional per-run CSV traces.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;
use std::str::FromStr;

use crate::latency::{LatencySample, Verdict};
use crate::orchestrator::{CommandKind, PlanCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    Power,
    Latency,
    Commands,
    Mobility,
}

impl TraceKind {
    pub const ALL: [TraceKind; 4] = [TraceKind::Power, TraceKind::Latency, TraceKind::Commands, TraceKind::Mobility];

    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::Power => "power",
            TraceKind::Latency => "latency",
            TraceKind::Commands => "commands",
            TraceKind::Mobility => "mobility",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown trace '{s}', expected power, latency, commands or mobility"))
    }
}

type Sink = csv::Writer<BufWriter<File>>;

#[derive(Default)]
pub struct Tracer {
    power: Option<Sink>,
    latency: Option<Sink>,
    commands: Option<Sink>,
    mobility: Option<Sink>,
    error: Option<csv::Error>,
}

fn open(dir: &Path, kind: TraceKind, header: &[&str]) -> io::Result<Sink> {
    let f = File::create(dir.join(format!("trace_{kind}.csv")))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(header)?;
    Ok(w)
}

impl Tracer {
    pub fn none() -> Self {
        Tracer::default()
    }

    /// Writes `trace_<kind>.csv` files into `dir`.
    pub fn to_dir(dir: &Path, kinds: &[TraceKind]) -> io::Result<Self> {
        let mut t = Tracer::default();
        for k in kinds {
            match k {
                TraceKind::Power => t.power = Some(open(dir, *k, &["ec", "start", "end", "watts", "state"])?),
                TraceKind::Latency => {
                    t.latency = Some(open(
                        dir,
                        *k,
                        &["request", "arrival", "user", "ec", "service", "t_wireless", "t_f", "t_s", "total", "verdict"],
                    )?)
                }
                TraceKind::Commands => {
                    t.commands = Some(open(dir, *k, &["t", "kind", "ec", "service", "user", "target"])?)
                }
                TraceKind::Mobility => t.mobility = Some(open(dir, *k, &["t", "user", "x", "y", "cell", "ec"])?),
            }
        }
        Ok(t)
    }

    pub fn wants(&self, kind: TraceKind) -> bool {
        match kind {
            TraceKind::Power => self.power.is_some(),
            TraceKind::Latency => self.latency.is_some(),
            TraceKind::Commands => self.commands.is_some(),
            TraceKind::Mobility => self.mobility.is_some(),
        }
    }

    fn write(sink: &mut Option<Sink>, error: &mut Option<csv::Error>, row: &[String]) {
        if let Some(w) = sink {
            if let Err(e) = w.write_record(row) {
                error.get_or_insert(e);
            }
        }
    }

    pub fn power(&mut self, ec: usize, start: f64, end: f64, watts: f64, state: &str) {
        let row = [ec.to_string(), start.to_string(), end.to_string(), watts.to_string(), state.to_string()];
        Self::write(&mut self.power, &mut self.error, &row);
    }

    pub fn latency(&mut self, arrival: f64, user: usize, ec: usize, service: usize, s: &LatencySample) {
        let verdict = match s.verdict {
            Verdict::Ok => "ok",
            Verdict::Violated => "violated",
        };
        let row = [
            s.request_id.to_string(),
            arrival.to_string(),
            user.to_string(),
            ec.to_string(),
            service.to_string(),
            s.t_wireless.to_string(),
            s.t_f.to_string(),
            s.t_s.to_string(),
            s.total.to_string(),
            verdict.to_string(),
        ];
        Self::write(&mut self.latency, &mut self.error, &row);
    }

    pub fn command(&mut self, c: &PlanCommand) {
        let (kind, ec, service, user, target) = match c.kind {
            CommandKind::EcTransition { ec, target } => ("ec", ec.to_string(), String::new(), String::new(), target.to_string()),
            CommandKind::ServiceTransition { ec, service, target } => {
                ("service", ec.to_string(), service.to_string(), String::new(), target.to_string())
            }
            CommandKind::Associate { user, ec } => ("associate", ec.to_string(), String::new(), user.to_string(), String::new()),
        };
        let row = [c.issue_t.to_string(), kind.to_string(), ec, service, user, target];
        Self::write(&mut self.commands, &mut self.error, &row);
    }

    pub fn mobility(&mut self, t: f64, user: usize, pos: (f64, f64), cell: usize, ec: usize) {
        let row = [t.to_string(), user.to_string(), pos.0.to_string(), pos.1.to_string(), cell.to_string(), ec.to_string()];
        Self::write(&mut self.mobility, &mut self.error, &row);
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        for w in [&mut self.power, &mut self.latency, &mut self.commands, &mut self.mobility]
            .into_iter()
            .flatten()
        {
            w.flush()?;
        }
        Ok(())
    }
}
