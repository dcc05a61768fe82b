//! Orchestration policies. Every policy sees the same [`PlanView`] snapshot
//! on each tick and answers with [`PlanCommand`]s; the engine applies them
//! and rejects any that would break a power or lifecycle lock.

pub mod baselines;
pub mod coverage;
pub mod horizon;
pub mod ideal;
pub mod load;
pub mod lp;
pub mod pnap;

use serde::Serialize;

use crate::config::{ConfigError, PolicyVariant, Resources, ScenarioConfig, SleepLevel};
use crate::forecast::{Forecast, OriginLoad};
use crate::lifecycle::{LifecycleTable, ServiceState};
use crate::power::{EcState, PowerTable};
use crate::queueing::Class;
use crate::scenario::{EcId, ServiceId, Topology};

pub use coverage::{coverage, offload, CoverageResult};
pub use horizon::{aggregate_horizon, select_sleep_depth, HorizonPlan};
pub use load::{reachability_set, Capacity, Placement, Reach};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandKind {
    EcTransition { ec: EcId, target: EcState },
    ServiceTransition { ec: EcId, service: ServiceId, target: ServiceState },
    Associate { user: usize, ec: EcId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanCommand {
    pub issue_t: f64,
    #[serde(flatten)]
    pub kind: CommandKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcView {
    pub state: EcState,
    pub transitioning: bool,
    /// Lifecycle jobs queued or running at the EC.
    pub pending_lifecycle: usize,
    /// Users currently associated.
    pub associated: usize,
}

impl EcView {
    pub fn is_ready(&self) -> bool {
        self.state.is_active() && !self.transitioning
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceView {
    pub state: ServiceState,
    pub transitioning: bool,
    /// Nominal completion of the transition in progress.
    pub due: Option<f64>,
}

impl ServiceView {
    pub fn is_ready(&self) -> bool {
        self.state == ServiceState::Running && !self.transitioning
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserView {
    pub cell: EcId,
    pub service: ServiceId,
    pub associated: EcId,
}

/// What a policy gets to see.
#[derive(Debug, Clone, Copy)]
pub struct PlanView<'a> {
    pub now: f64,
    pub topology: &'a Topology,
    pub ecs: &'a [EcView],
    /// `services[e][s]`
    pub services: &'a [Vec<ServiceView>],
    pub users: &'a [UserView],
    pub link_loads: &'a [f64],
}

impl PlanView<'_> {
    /// Request rate per (cell, service) given the per-user rate.
    pub fn origin_load(&self, rate: f64) -> OriginLoad {
        let mut o = OriginLoad::zeros(self.topology.num_ecs(), self.topology.num_services());
        for u in self.users {
            o.add(u.cell, u.service, rate);
        }
        o
    }

    /// Can `e` serve `s` right now?
    pub fn serves(&self, e: EcId, s: ServiceId) -> bool {
        self.ecs[e].is_ready() && self.services[e][s].is_ready()
    }

    /// Should `e` serve `s` by now, going by the nominal transition times?
    /// Differs from [`serves`](Self::serves) when a start runs late.
    pub fn scheduled_to_serve(&self, e: EcId, s: ServiceId) -> bool {
        let v = self.services[e][s];
        self.ecs[e].is_ready() && v.state == ServiceState::Running && v.due.is_none_or(|d| d <= self.now)
    }
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    fn plan(&mut self, view: &PlanView, forecast: Option<&Forecast>) -> Vec<PlanCommand>;

    /// New association for a user who just changed cell, if any.
    fn on_handover(&mut self, view: &PlanView, user: usize) -> Option<EcId>;

    /// Queue class of lifecycle jobs. User requests take the other class.
    fn lifecycle_class(&self) -> Class {
        Class::High
    }

    fn uses_forecast(&self) -> bool {
        false
    }
}

/// Static parameters shared by the policies.
#[derive(Debug, Clone)]
pub struct PolicyKnobs {
    pub variant: PolicyVariant,
    pub t_max: f64,
    pub tick_dt: f64,
    pub wake_margin: f64,
    pub service_budget: f64,
    pub sa_idle_threshold: f64,
    pub sleep_levels: Vec<SleepLevel>,
    pub power: PowerTable,
    /// Includes the single state used by the SLEEPY-like baseline.
    pub sleepy_power: PowerTable,
    pub lifecycle: LifecycleTable,
    pub cores: usize,
    pub capacity: Capacity,
    pub rate_per_user: f64,
    pub horizon: usize,
    pub step_dt: f64,
}

impl PolicyKnobs {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        let variant = cfg.policy.variant;
        let margin = cfg.policy.offload_margin.unwrap_or(match variant {
            PolicyVariant::PnapT => 0.3,
            _ => 0.0,
        });
        if !(0.0..1.0).contains(&margin) {
            return Err(ConfigError::invalid("policy.offload_margin", "must be in [0, 1)"));
        }
        let power = PowerTable::from_config(&cfg.power)?;
        let mut levels: Vec<SleepLevel> = cfg
            .policy
            .sleep_levels
            .iter()
            .copied()
            .filter(|l| power.level(*l).is_some())
            .collect();
        levels.sort();
        levels.dedup();
        Ok(PolicyKnobs {
            variant,
            t_max: cfg.t_max,
            tick_dt: cfg.tick_dt,
            wake_margin: cfg.policy.wake_margin,
            service_budget: cfg.service_time_budget(),
            sa_idle_threshold: cfg
                .policy
                .sa_idle_threshold
                .unwrap_or(cfg.forecast.horizon as f64 * cfg.forecast.step_dt),
            sleep_levels: levels,
            sleepy_power: PowerTable::from_config(&cfg.power_with_sleepy())?,
            power,
            lifecycle: LifecycleTable::from(&cfg.lifecycle),
            cores: cfg.ec.cores,
            capacity: Capacity {
                resources: cfg.ec.capacity,
                demand: vec![cfg.services.demand; cfg.services.count],
                service_rate: cfg.ec.cores as f64 * cfg.ec.service_rate,
                margin,
            },
            rate_per_user: cfg.services.request_rate,
            horizon: cfg.forecast.horizon,
            step_dt: cfg.forecast.step_dt,
        })
    }

    pub fn offload_enabled(&self) -> bool {
        self.variant != PolicyVariant::PnapSa
    }

    pub fn demand(&self, s: ServiceId) -> Resources {
        self.capacity.demand[s]
    }

    pub fn reach(&self, view: &PlanView) -> Reach {
        reachability_set(view.topology, self.t_max, view.link_loads, self.service_budget)
    }
}

pub fn build_policy(knobs: PolicyKnobs) -> Box<dyn Policy> {
    match knobs.variant {
        PolicyVariant::Pnap | PolicyVariant::PnapP | PolicyVariant::PnapSa | PolicyVariant::PnapT => {
            Box::new(pnap::Pnap::new(knobs))
        }
        PolicyVariant::AlwaysOn => Box::new(pnap::Pnap::always_on(knobs)),
        PolicyVariant::Sleepy => Box::new(baselines::Sleepy::new(knobs)),
        PolicyVariant::Reactive => Box::new(baselines::Reactive::new(knobs)),
    }
}
