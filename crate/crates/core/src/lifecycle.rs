//! Service lifecycle: Stopped, Paused and Running, with timed, non-abortable
//! transitions and per-state resource footprints.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{LifecycleConfig, Resources};
use crate::scenario::{EcId, ServiceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceState {
    Stopped,
    Paused,
    Running,
}

impl ServiceState {
    pub const ALL: [ServiceState; 3] = [ServiceState::Stopped, ServiceState::Paused, ServiceState::Running];

    pub fn as_str(&self) -> &'static str {
        match self {
            ServiceState::Stopped => "stopped",
            ServiceState::Paused => "paused",
            ServiceState::Running => "running",
        }
    }
}

impl fmt::Display for ServiceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifecycleTable {
    pub t_start: f64,
    pub t_stop: f64,
    pub t_pause: f64,
    pub t_resume: f64,
}

impl From<&LifecycleConfig> for LifecycleTable {
    fn from(c: &LifecycleConfig) -> Self {
        LifecycleTable {
            t_start: c.t_start,
            t_stop: c.t_stop,
            t_pause: c.t_pause,
            t_resume: c.t_resume,
        }
    }
}

/// Time to go from `from` to `to`. Stopped and Paused are not adjacent, so
/// that edge costs the sum of the two legs through Running.
pub fn transition_time(from: ServiceState, to: ServiceState, table: &LifecycleTable) -> f64 {
    use ServiceState::*;
    match (from, to) {
        (a, b) if a == b => 0.0,
        (Stopped, Running) => table.t_start,
        (Running, Stopped) => table.t_stop,
        (Running, Paused) => table.t_pause,
        (Paused, Running) => table.t_resume,
        (Stopped, Paused) => table.t_start + table.t_pause,
        (Paused, Stopped) => table.t_resume + table.t_stop,
        _ => unreachable!(),
    }
}

/// Resources held by a service in `state`.
pub fn footprint(state: ServiceState, demand: Resources) -> Resources {
    match state {
        ServiceState::Stopped => Resources::ZERO,
        ServiceState::Paused => Resources::new(0, demand.mem),
        ServiceState::Running => demand,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LifecycleError {
    #[error("service {service} at EC {ec} is already transitioning")]
    Locked { ec: EcId, service: ServiceId },
    #[error("EC {ec} is not active")]
    EcNotActive { ec: EcId },
    #[error("service {service} at EC {ec} is already {state}")]
    NoChange {
        ec: EcId,
        service: ServiceId,
        state: ServiceState,
    },
    #[error("service {service} at EC {ec} completed at {now} before {due}")]
    Early {
        ec: EcId,
        service: ServiceId,
        now: f64,
        due: f64,
    },
    #[error("service {service} at EC {ec} has no transition in progress")]
    NotTransitioning { ec: EcId, service: ServiceId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: ServiceState,
    pub target: ServiceState,
    pub issued_at: f64,
    /// Earliest possible completion, `issued_at + transition_time`.
    pub due: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceInstance {
    pub ec_id: EcId,
    pub service_id: ServiceId,
    /// While a transition is in progress this already holds the target.
    pub state: ServiceState,
    pub in_transition: Option<Transition>,
}

impl ServiceInstance {
    pub fn new(ec_id: EcId, service_id: ServiceId) -> Self {
        ServiceInstance {
            ec_id,
            service_id,
            state: ServiceState::Stopped,
            in_transition: None,
        }
    }

    pub fn is_transitioning(&self) -> bool {
        self.in_transition.is_some()
    }

    /// Running and not mid-transition.
    pub fn is_ready(&self) -> bool {
        self.state == ServiceState::Running && self.in_transition.is_none()
    }

    /// Locks the instance into `target`. Returns the earliest completion
    /// time; the caller schedules the actual completion.
    pub fn begin_transition(
        &mut self,
        target: ServiceState,
        now: f64,
        ec_active: bool,
        table: &LifecycleTable,
    ) -> Result<f64, LifecycleError> {
        let (ec, service) = (self.ec_id, self.service_id);
        if self.in_transition.is_some() {
            return Err(LifecycleError::Locked { ec, service });
        }
        if !ec_active {
            return Err(LifecycleError::EcNotActive { ec });
        }
        if target == self.state {
            return Err(LifecycleError::NoChange {
                ec,
                service,
                state: target,
            });
        }
        let due = now + transition_time(self.state, target, table);
        self.in_transition = Some(Transition {
            from: self.state,
            target,
            issued_at: now,
            due,
        });
        self.state = target;
        Ok(due)
    }

    pub fn complete_transition(&mut self, now: f64) -> Result<Transition, LifecycleError> {
        let (ec, service) = (self.ec_id, self.service_id);
        let tr = self
            .in_transition
            .ok_or(LifecycleError::NotTransitioning { ec, service })?;
        // Completion times come from sums of floats; allow rounding noise.
        if now + 1e-9 < tr.due {
            return Err(LifecycleError::Early {
                ec,
                service,
                now,
                due: tr.due,
            });
        }
        self.in_transition = None;
        Ok(tr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ServiceState::*;

    fn table() -> LifecycleTable {
        LifecycleTable::from(&LifecycleConfig::reference())
    }

    #[test]
    fn reference_transition_times() {
        let t = table();
        assert_eq!(transition_time(Stopped, Running, &t), 0.510);
        assert_eq!(transition_time(Running, Paused, &t), 0.096);
        assert!((transition_time(Stopped, Paused, &t) - 0.606).abs() < 1e-12);
        assert_eq!(transition_time(Paused, Paused, &t), 0.0);
    }

    #[test]
    fn footprints() {
        let d = Resources::new(1, 1);
        assert_eq!(footprint(Running, d), Resources::new(1, 1));
        assert_eq!(footprint(Paused, d), Resources::new(0, 1));
        assert_eq!(footprint(Stopped, Resources::new(3, 4)), Resources::ZERO);
    }

    #[test]
    fn pause_completes_after_table_delay() {
        let mut s = ServiceInstance::new(0, 0);
        s.state = Running;
        let due = s.begin_transition(Paused, 10.0, true, &table()).unwrap();
        assert!((due - 10.096).abs() < 1e-12);
        assert_eq!(s.state, Paused);
        assert!(s.complete_transition(10.05).is_err());
        assert!(s.complete_transition(due).is_ok());
        assert!(!s.is_transitioning());
    }

    #[test]
    fn locked_instance_rejects() {
        let mut s = ServiceInstance::new(0, 0);
        s.begin_transition(Running, 0.0, true, &table()).unwrap();
        assert_eq!(
            s.begin_transition(Stopped, 0.1, true, &table()),
            Err(LifecycleError::Locked { ec: 0, service: 0 })
        );
    }

    #[test]
    fn sleeping_ec_rejects() {
        let mut s = ServiceInstance::new(3, 1);
        assert_eq!(
            s.begin_transition(Running, 0.0, false, &table()),
            Err(LifecycleError::EcNotActive { ec: 3 })
        );
        assert_eq!(s.state, Stopped);
    }
}
