//! Declarative scenario configuration.
//!
//! A scenario is a single TOML document. Every section except `[power]` and
//! `[lifecycle]` has defaults matching the 25-EC reference grid, so a minimal
//! file only has to state the two hardware tables. Durations are seconds,
//! power is watts and rates are per second throughout.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading or validating a scenario.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// A two-component resource vector: CPU units and memory units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Resources {
    pub cpu: u32,
    pub mem: u32,
}

impl Resources {
    pub const ZERO: Resources = Resources { cpu: 0, mem: 0 };

    pub const fn new(cpu: u32, mem: u32) -> Self {
        Resources { cpu, mem }
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &Resources) -> bool {
        self.cpu <= other.cpu && self.mem <= other.mem
    }

    pub fn saturating_sub(&self, other: &Resources) -> Resources {
        Resources::new(
            self.cpu.saturating_sub(other.cpu),
            self.mem.saturating_sub(other.mem),
        )
    }
}

impl std::ops::Add for Resources {
    type Output = Resources;
    fn add(self, rhs: Resources) -> Resources {
        Resources::new(self.cpu + rhs.cpu, self.mem + rhs.mem)
    }
}

impl std::ops::AddAssign for Resources {
    fn add_assign(&mut self, rhs: Resources) {
        self.cpu += rhs.cpu;
        self.mem += rhs.mem;
    }
}

impl std::iter::Sum for Resources {
    fn sum<I: Iterator<Item = Resources>>(iter: I) -> Self {
        iter.fold(Resources::ZERO, |a, b| a + b)
    }
}

impl From<[u32; 2]> for Resources {
    fn from(v: [u32; 2]) -> Self {
        Resources::new(v[0], v[1])
    }
}

impl From<Resources> for [u32; 2] {
    fn from(r: Resources) -> Self {
        [r.cpu, r.mem]
    }
}

impl fmt::Display for Resources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.cpu, self.mem)
    }
}

/// Orchestration policies that the engine can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyVariant {
    /// Forecast-driven coverage with multi-state sleep and proactive lifecycle.
    Pnap,
    /// As `Pnap`, but user requests outrank lifecycle commands on EC cores.
    PnapP,
    /// Availability-first: offloading disabled.
    PnapSa,
    /// Conservative offloading with a utilisation margin.
    PnapT,
    /// Every EC stays active; services follow the forecast locally.
    AlwaysOn,
    /// Reactive single-frame coverage with one shallow sleep state.
    Sleepy,
    /// Per-tick optimum that assumes instantaneous transitions.
    Reactive,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 7] = [
        PolicyVariant::Pnap,
        PolicyVariant::PnapP,
        PolicyVariant::PnapSa,
        PolicyVariant::PnapT,
        PolicyVariant::AlwaysOn,
        PolicyVariant::Sleepy,
        PolicyVariant::Reactive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyVariant::Pnap => "pnap",
            PolicyVariant::PnapP => "pnap-p",
            PolicyVariant::PnapSa => "pnap-sa",
            PolicyVariant::PnapT => "pnap-t",
            PolicyVariant::AlwaysOn => "always-on",
            PolicyVariant::Sleepy => "sleepy",
            PolicyVariant::Reactive => "reactive",
        }
    }
}

impl fmt::Display for PolicyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyVariant {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyVariant::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ConfigError::invalid("policy.variant", format!("unknown policy `{s}`")))
    }
}

/// Sleep depths. `S2` is only used by the SLEEPY-like baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SleepLevel {
    S1,
    S2,
    S3,
    S4,
}

impl SleepLevel {
    pub const ALL: [SleepLevel; 4] = [SleepLevel::S1, SleepLevel::S2, SleepLevel::S3, SleepLevel::S4];

    pub fn as_str(&self) -> &'static str {
        match self {
            SleepLevel::S1 => "s1",
            SleepLevel::S2 => "s2",
            SleepLevel::S3 => "s3",
            SleepLevel::S4 => "s4",
        }
    }
}

impl fmt::Display for SleepLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceTimeLaw {
    Exponential,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastKind {
    Oracle,
    Persistence,
    Ewma,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    /// Side length of one square coverage cell, metres.
    pub cell_size: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rows: 5,
            cols: 5,
            cell_size: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Constant radio access delay.
    pub wireless_delay: f64,
    /// Per-link packet service rate of the M/D/1 link queue.
    pub link_service_rate: f64,
    /// Per-hop packet processing time.
    pub hop_proc_time: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            wireless_delay: 0.001,
            link_service_rate: 20_000.0,
            hop_proc_time: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcConfig {
    pub cores: usize,
    pub capacity: Resources,
    /// Per-core user request service rate.
    pub service_rate: f64,
    pub service_time: ServiceTimeLaw,
}

impl Default for EcConfig {
    fn default() -> Self {
        EcConfig {
            cores: 5,
            capacity: Resources::new(5, 6),
            service_rate: 2000.0,
            service_time: ServiceTimeLaw::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServicesConfig {
    pub count: usize,
    pub demand: Resources,
    /// Poisson request rate of each user towards its service.
    pub request_rate: f64,
}

impl Default for ServicesConfig {
    fn default() -> Self {
        ServicesConfig {
            count: 8,
            demand: Resources::new(1, 1),
            request_rate: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersConfig {
    pub count: usize,
}

impl Default for UsersConfig {
    fn default() -> Self {
        UsersConfig { count: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub alpha: f64,
    pub mean_speed: f64,
    /// Shared mean heading in radians; drawn per user when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_direction: Option<f64>,
    pub speed_sigma: f64,
    pub direction_sigma: f64,
    pub step_dt: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            alpha: 0.75,
            mean_speed: 1.4,
            mean_direction: None,
            speed_sigma: 0.3,
            direction_sigma: 0.3,
            step_dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleepStateConfig {
    pub power: f64,
    pub down_delay: f64,
    pub up_delay: f64,
    pub down_power: f64,
    pub up_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub p_peak: f64,
    pub p_idle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s1: Option<SleepStateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<SleepStateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s3: Option<SleepStateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s4: Option<SleepStateConfig>,
}

impl PowerConfig {
    /// Server power and ACPI transition figures of the reference hardware.
    pub fn reference() -> Self {
        PowerConfig {
            p_peak: 243.0,
            p_idle: 150.0,
            s1: Some(SleepStateConfig {
                power: 133.0,
                down_delay: 2.0,
                up_delay: 2.0,
                down_power: 140.0,
                up_power: 144.0,
            }),
            s2: None,
            s3: Some(SleepStateConfig {
                power: 97.0,
                down_delay: 4.0,
                up_delay: 10.0,
                down_power: 100.0,
                up_power: 128.0,
            }),
            s4: Some(SleepStateConfig {
                power: 49.0,
                down_delay: 9.0,
                up_delay: 48.0,
                down_power: 60.0,
                up_power: 95.0,
            }),
        }
    }

    pub fn level(&self, level: SleepLevel) -> Option<&SleepStateConfig> {
        match level {
            SleepLevel::S1 => self.s1.as_ref(),
            SleepLevel::S2 => self.s2.as_ref(),
            SleepLevel::S3 => self.s3.as_ref(),
            SleepLevel::S4 => self.s4.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifecycleConfig {
    pub t_start: f64,
    pub t_stop: f64,
    pub t_pause: f64,
    pub t_resume: f64,
}

impl LifecycleConfig {
    /// Container start/pause timings; stop mirrors start.
    pub fn reference() -> Self {
        LifecycleConfig {
            t_start: 0.510,
            t_stop: 0.510,
            t_pause: 0.096,
            t_resume: 0.096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub variant: PolicyVariant,
    /// Utilisation headroom required by the offloading capacity test.
    /// Defaults to 0 (0.3 for `pnap-t`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offload_margin: Option<f64>,
    /// Idle period after which `pnap-sa` lets an EC sleep. Defaults to the
    /// forecast horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sa_idle_threshold: Option<f64>,
    /// Slack added to every wake-up deadline.
    pub wake_margin: f64,
    /// Service-time allowance used by the reachability test. Defaults to
    /// three mean service times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_time_budget: Option<f64>,
    /// Sleep depths the forecast-driven policies may use.
    pub sleep_levels: Vec<SleepLevel>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            variant: PolicyVariant::Pnap,
            offload_margin: None,
            sa_idle_threshold: None,
            wake_margin: 0.5,
            service_time_budget: None,
            sleep_levels: vec![SleepLevel::S1, SleepLevel::S3, SleepLevel::S4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub kind: ForecastKind,
    pub horizon: usize,
    pub step_dt: f64,
    pub ewma_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            kind: ForecastKind::Oracle,
            horizon: 12,
            step_dt: 5.0,
            ewma_weight: 0.5,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub w_power: f64,
    pub w_violation: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            w_power: 1.0,
            w_violation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub t_max: Vec<f64>,
    pub policies: Vec<PolicyVariant>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            t_max: vec![0.003, 0.005, 0.007, 0.009, 0.011],
            policies: vec![
                PolicyVariant::Pnap,
                PolicyVariant::Sleepy,
                PolicyVariant::Reactive,
                PolicyVariant::AlwaysOn,
            ],
            seeds: vec![1, 2, 3],
        }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_t_max() -> f64 {
    0.007
}
fn default_sim_duration() -> f64 {
    3600.0
}
fn default_tick_dt() -> f64 {
    5.0
}
fn default_sleepy() -> SleepStateConfig {
    // Midway between S1 and S3; the baseline's own hardware figures are unknown.
    SleepStateConfig {
        power: 115.0,
        down_delay: 3.0,
        up_delay: 6.0,
        down_power: 120.0,
        up_power: 136.0,
    }
}

/// Full description of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// End-to-end latency limit applied to every service.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_sim_duration")]
    pub sim_duration: f64,
    /// Metrics ignore `[0, warmup)`.
    #[serde(default)]
    pub warmup: f64,
    /// Orchestrator period.
    #[serde(default = "default_tick_dt")]
    pub tick_dt: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub ec: EcConfig,
    #[serde(default)]
    pub services: ServicesConfig,
    #[serde(default)]
    pub users: UsersConfig,
    #[serde(default)]
    pub mobility: MobilityConfig,
    pub power: PowerConfig,
    pub lifecycle: LifecycleConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    /// Single sleep state of the SLEEPY-like baseline.
    #[serde(default = "default_sleepy")]
    pub sleepy: SleepStateConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ScenarioConfig {
    /// The 25-EC, 100-user, 8-service reference scenario.
    pub fn reference() -> Self {
        ScenarioConfig {
            seed: default_seed(),
            t_max: default_t_max(),
            sim_duration: default_sim_duration(),
            warmup: 0.0,
            tick_dt: default_tick_dt(),
            grid: GridConfig::default(),
            network: NetworkConfig::default(),
            ec: EcConfig::default(),
            services: ServicesConfig::default(),
            users: UsersConfig::default(),
            mobility: MobilityConfig::default(),
            power: PowerConfig::reference(),
            lifecycle: LifecycleConfig::reference(),
            policy: PolicyConfig::default(),
            sleepy: default_sleepy(),
            forecast: ForecastConfig::default(),
            objective: ObjectiveConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// Reads a TOML file, applies `key=value` overrides, then validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for raw in overrides {
            apply_override(&mut table, raw)?;
        }
        let cfg: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    /// Mean user service time per request.
    pub fn mean_service_time(&self) -> f64 {
        1.0 / self.ec.service_rate
    }

    /// Service-time allowance used in reachability and latency estimates.
    pub fn service_time_budget(&self) -> f64 {
        self.policy
            .service_time_budget
            .unwrap_or(3.0 / self.ec.service_rate)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be >= 0, got {v}")))
            }
        }
        fn fraction(field: &str, v: f64) -> Result<(), ConfigError> {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must lie in [0, 1), got {v}")))
            }
        }

        positive("t_max", self.t_max)?;
        positive("sim_duration", self.sim_duration)?;
        non_negative("warmup", self.warmup)?;
        if self.warmup >= self.sim_duration {
            return Err(ConfigError::invalid("warmup", "must be shorter than sim_duration"));
        }
        positive("tick_dt", self.tick_dt)?;

        if self.grid.rows == 0 {
            return Err(ConfigError::invalid("grid.rows", "must be >= 1"));
        }
        if self.grid.cols == 0 {
            return Err(ConfigError::invalid("grid.cols", "must be >= 1"));
        }
        positive("grid.cell_size", self.grid.cell_size)?;

        non_negative("network.wireless_delay", self.network.wireless_delay)?;
        positive("network.link_service_rate", self.network.link_service_rate)?;
        non_negative("network.hop_proc_time", self.network.hop_proc_time)?;

        if self.ec.cores == 0 {
            return Err(ConfigError::invalid("ec.cores", "must be >= 1"));
        }
        positive("ec.service_rate", self.ec.service_rate)?;

        if self.services.count == 0 {
            return Err(ConfigError::invalid("services.count", "must be >= 1"));
        }
        if !self.services.demand.fits_within(&self.ec.capacity) {
            return Err(ConfigError::invalid(
                "services.demand",
                format!(
                    "{} exceeds EC capacity {}",
                    self.services.demand, self.ec.capacity
                ),
            ));
        }
        positive("services.request_rate", self.services.request_rate)?;

        let m = &self.mobility;
        if !(0.0..=1.0).contains(&m.alpha) {
            return Err(ConfigError::invalid("mobility.alpha", "must lie in [0, 1]"));
        }
        non_negative("mobility.mean_speed", m.mean_speed)?;
        non_negative("mobility.speed_sigma", m.speed_sigma)?;
        non_negative("mobility.direction_sigma", m.direction_sigma)?;
        positive("mobility.step_dt", m.step_dt)?;

        crate::power::PowerTable::from_config(&self.power)?;
        crate::power::PowerTable::from_config(&self.power_with_sleepy())?;

        let l = &self.lifecycle;
        non_negative("lifecycle.t_start", l.t_start)?;
        non_negative("lifecycle.t_stop", l.t_stop)?;
        non_negative("lifecycle.t_pause", l.t_pause)?;
        non_negative("lifecycle.t_resume", l.t_resume)?;

        let p = &self.policy;
        if let Some(m) = p.offload_margin {
            fraction("policy.offload_margin", m)?;
        }
        if let Some(s) = p.sa_idle_threshold {
            non_negative("policy.sa_idle_threshold", s)?;
        }
        non_negative("policy.wake_margin", p.wake_margin)?;
        if let Some(b) = p.service_time_budget {
            non_negative("policy.service_time_budget", b)?;
        }
        for level in &p.sleep_levels {
            if self.power.level(*level).is_none() {
                return Err(ConfigError::invalid(
                    "policy.sleep_levels",
                    format!("{level} has no entry in [power]"),
                ));
            }
        }

        let f = &self.forecast;
        if f.horizon == 0 {
            return Err(ConfigError::invalid("forecast.horizon", "must be >= 1"));
        }
        positive("forecast.step_dt", f.step_dt)?;
        if !(f.ewma_weight > 0.0 && f.ewma_weight <= 1.0) {
            return Err(ConfigError::invalid("forecast.ewma_weight", "must lie in (0, 1]"));
        }
        if f.kind == ForecastKind::File && f.path.is_none() {
            return Err(ConfigError::invalid("forecast.path", "required when kind = \"file\""));
        }

        non_negative("objective.w_power", self.objective.w_power)?;
        non_negative("objective.w_violation", self.objective.w_violation)?;
        for t in &self.sweep.t_max {
            positive("sweep.t_max", *t)?;
        }
        Ok(())
    }

    /// The power table extended with the SLEEPY-like S2 state (unless the
    /// `[power]` section already defines one).
    pub fn power_with_sleepy(&self) -> PowerConfig {
        let mut p = self.power.clone();
        if p.s2.is_none() {
            p.s2 = Some(self.sleepy);
        }
        p
    }
}

/// Sets a dotted `key=value` path in a TOML table. Values are parsed as TOML
/// (numbers, booleans, arrays); anything unparsable is kept as a string.
pub fn apply_override(table: &mut toml::Table, raw: &str) -> Result<(), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(raw.to_string()));
    }
    let value = parse_override_value(value.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cursor = table;
    for part in parents {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::BadOverride(raw.to_string())),
        };
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [power]
        p_peak = 243.0
        p_idle = 150.0
        [power.s4]
        power = 49.0
        down_delay = 9.0
        up_delay = 48.0
        down_power = 60.0
        up_power = 95.0

        [lifecycle]
        t_start = 0.51
        t_stop = 0.51
        t_pause = 0.096
        t_resume = 0.096

        [policy]
        variant = "pnap"
        wake_margin = 0.5
        sleep_levels = ["s4"]
    "#;

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.grid.rows, 5);
        assert_eq!(cfg.users.count, 100);
        assert_eq!(cfg.ec.capacity, Resources::new(5, 6));
    }

    #[test]
    fn missing_power_table_is_named() {
        let err = ScenarioConfig::from_toml_str("[lifecycle]\nt_start=1\nt_stop=1\nt_pause=1\nt_resume=1\n", &[])
            .unwrap_err();
        assert!(err.to_string().contains("power"), "{err}");
    }

    #[test]
    fn override_sets_nested_and_top_level_keys() {
        let cfg = ScenarioConfig::from_toml_str(
            MINIMAL,
            &["t_max=0.005".into(), "grid.rows=3".into(), "policy.variant=sleepy".into()],
        )
        .unwrap();
        assert_eq!(cfg.t_max, 0.005);
        assert_eq!(cfg.grid.rows, 3);
        assert_eq!(cfg.policy.variant, PolicyVariant::Sleepy);
    }

    #[test]
    fn zero_link_rate_is_rejected() {
        let err = ScenarioConfig::from_toml_str(MINIMAL, &["network.link_service_rate=0.0".into()])
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "network.link_service_rate"));
    }

    #[test]
    fn zero_grid_dimension_is_rejected() {
        let err = ScenarioConfig::from_toml_str(MINIMAL, &["grid.cols=0".into()]).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "grid.cols"));
    }

    #[test]
    fn bad_override_syntax() {
        let err = ScenarioConfig::from_toml_str(MINIMAL, &["t_max".into()]).unwrap_err();
        assert!(matches!(err, ConfigError::BadOverride(_)));
    }

    #[test]
    fn reference_config_round_trips_through_toml() {
        let cfg = ScenarioConfig::reference();
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text, &[]).unwrap();
        assert_eq!(cfg, back);
    }
}
