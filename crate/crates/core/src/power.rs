//! EC activity states, transition timing and power, and energy integration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PowerConfig, SleepLevel};
use crate::scenario::EcId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EcState {
    Active,
    Sleep(SleepLevel),
}

impl EcState {
    pub fn is_active(&self) -> bool {
        matches!(self, EcState::Active)
    }
}

impl fmt::Display for EcState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EcState::Active => f.write_str("active"),
            EcState::Sleep(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleepSpec {
    pub power: f64,
    pub down_delay: f64,
    pub up_delay: f64,
    pub down_power: f64,
    pub up_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub p_peak: f64,
    pub p_idle: f64,
    levels: [Option<SleepSpec>; 4],
}

fn slot(level: SleepLevel) -> usize {
    match level {
        SleepLevel::S1 => 0,
        SleepLevel::S2 => 1,
        SleepLevel::S3 => 2,
        SleepLevel::S4 => 3,
    }
}

impl PowerTable {
    /// Validates the ordering constraints: peak ≥ idle ≥ every sleep power,
    /// and deeper states draw strictly less and wake strictly slower.
    pub fn from_config(c: &PowerConfig) -> Result<Self, ConfigError> {
        let bad = |reason: String| Err(ConfigError::invalid("power", reason));
        if !(c.p_peak >= c.p_idle && c.p_idle >= 0.0) {
            return bad(format!("need p_peak >= p_idle >= 0, got {} and {}", c.p_peak, c.p_idle));
        }
        let mut levels = [None; 4];
        let mut prev: Option<(SleepLevel, SleepSpec)> = None;
        for level in SleepLevel::ALL {
            let Some(s) = c.level(level) else { continue };
            let fields = [s.power, s.down_delay, s.up_delay, s.down_power, s.up_power];
            if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad(format!("{level}: all entries must be finite and >= 0"));
            }
            if s.power > c.p_idle {
                return bad(format!("{level}: sleep power {} exceeds p_idle", s.power));
            }
            if let Some((pl, p)) = prev {
                if !(s.power < p.power) {
                    return bad(format!("{level} must draw less than {pl}"));
                }
                if !(s.up_delay > p.up_delay) {
                    return bad(format!("{level} must wake slower than {pl}"));
                }
                if s.down_delay < p.down_delay {
                    return bad(format!("{level} must not enter faster than {pl}"));
                }
            }
            prev = Some((level, SleepSpec {
                power: s.power,
                down_delay: s.down_delay,
                up_delay: s.up_delay,
                down_power: s.down_power,
                up_power: s.up_power,
            }));
            levels[slot(level)] = prev.map(|(_, s)| s);
        }
        Ok(PowerTable {
            p_peak: c.p_peak,
            p_idle: c.p_idle,
            levels,
        })
    }

    pub fn level(&self, level: SleepLevel) -> Option<&SleepSpec> {
        self.levels[slot(level)].as_ref()
    }

    pub fn spec(&self, level: SleepLevel) -> &SleepSpec {
        self.level(level)
            .unwrap_or_else(|| panic!("sleep level {level} not configured"))
    }

    pub fn available(&self) -> impl Iterator<Item = SleepLevel> + '_ {
        SleepLevel::ALL.into_iter().filter(|l| self.level(*l).is_some())
    }

    /// Duration and power of the edge `from -> to`, if it is allowed.
    pub fn edge(&self, from: EcState, to: EcState) -> Option<(f64, f64)> {
        match (from, to) {
            (EcState::Active, EcState::Sleep(l)) => self.level(l).map(|s| (s.down_delay, s.down_power)),
            (EcState::Sleep(l), EcState::Active) => self.level(l).map(|s| (s.up_delay, s.up_power)),
            _ => None,
        }
    }

    pub fn state_power(&self, state: EcState, busy_fraction: f64) -> f64 {
        match state {
            EcState::Active => self.p_idle + busy_fraction * (self.p_peak - self.p_idle),
            EcState::Sleep(l) => self.spec(l).power,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcTransition {
    pub from: EcState,
    pub target: EcState,
    pub started: f64,
    pub completes_at: f64,
    pub power: f64,
}

/// Activity of one EC. During a transition `state` already holds the target.
#[derive(Debug, Clone, PartialEq)]
pub struct EcActivity {
    pub ec: EcId,
    pub state: EcState,
    pub in_transition: Option<EcTransition>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("EC {ec}: transition {from} -> {to} is not allowed")]
    Forbidden { ec: EcId, from: EcState, to: EcState },
    #[error("EC {ec} is already transitioning")]
    Locked { ec: EcId },
    #[error("EC {ec} has no transition completing at {now}")]
    NoTransition { ec: EcId, now: f64 },
    #[error("power segments overlap at t = {at}")]
    Overlap { at: f64 },
}

impl EcActivity {
    pub fn new(ec: EcId) -> Self {
        EcActivity {
            ec,
            state: EcState::Active,
            in_transition: None,
        }
    }

    /// Active and not transitioning.
    pub fn is_ready(&self) -> bool {
        self.state.is_active() && self.in_transition.is_none()
    }

    pub fn is_transitioning(&self) -> bool {
        self.in_transition.is_some()
    }

    pub fn begin_transition(
        &mut self,
        target: EcState,
        now: f64,
        table: &PowerTable,
    ) -> Result<f64, PowerError> {
        if self.in_transition.is_some() {
            return Err(PowerError::Locked { ec: self.ec });
        }
        let (delay, power) = table.edge(self.state, target).ok_or(PowerError::Forbidden {
            ec: self.ec,
            from: self.state,
            to: target,
        })?;
        let completes_at = now + delay;
        self.in_transition = Some(EcTransition {
            from: self.state,
            target,
            started: now,
            completes_at,
            power,
        });
        self.state = target;
        Ok(completes_at)
    }

    pub fn complete_transition(&mut self, now: f64) -> Result<EcTransition, PowerError> {
        match self.in_transition {
            Some(tr) if now + 1e-9 >= tr.completes_at => {
                self.in_transition = None;
                Ok(tr)
            }
            _ => Err(PowerError::NoTransition { ec: self.ec, now }),
        }
    }
}

/// Power drawn right now. Cores busy with user or lifecycle work both count.
pub fn instantaneous_power(
    activity: &EcActivity,
    busy_cores: usize,
    total_cores: usize,
    table: &PowerTable,
) -> f64 {
    if let Some(tr) = activity.in_transition {
        return tr.power;
    }
    let frac = if total_cores == 0 {
        0.0
    } else {
        busy_cores.min(total_cores) as f64 / total_cores as f64
    };
    table.state_power(activity.state, frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSegment {
    pub start: f64,
    pub end: f64,
    pub watts: f64,
}

/// Exact integral of a piecewise-constant power trace.
pub fn integrate_energy(segments: &[PowerSegment]) -> Result<f64, PowerError> {
    let mut sorted: Vec<&PowerSegment> = segments.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut energy = 0.0;
    let mut last_end = f64::NEG_INFINITY;
    for s in sorted {
        if s.start < last_end - 1e-12 {
            return Err(PowerError::Overlap { at: s.start });
        }
        energy += s.watts * (s.end - s.start);
        last_end = s.end;
    }
    Ok(energy)
}
