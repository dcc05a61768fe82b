//! Comparison policies: a SLEEPY-like coverage heuristic with a single sleep
//! state, and a reactive policy that applies per-step optimal decisions as
//! if transitions were instantaneous.

use crate::config::SleepLevel;
use crate::forecast::Forecast;
use crate::power::EcState;
use crate::scenario::EcId;

use super::coverage::coverage;
use super::pnap::{associate_all, choose_association, current_placement, local_placement, service_commands, users_per_service};
use super::{CommandKind, PlanCommand, PlanView, Policy, PolicyKnobs};

fn ec_command(view: &PlanView, ec: EcId, target: EcState) -> PlanCommand {
    PlanCommand {
        issue_t: view.now,
        kind: CommandKind::EcTransition { ec, target },
    }
}

/// Consolidates the current load only and sleeps idle ECs in one state.
pub struct Sleepy {
    knobs: PolicyKnobs,
    last: Vec<Option<EcId>>,
}

impl Sleepy {
    pub const LEVEL: SleepLevel = SleepLevel::S2;

    pub fn new(knobs: PolicyKnobs) -> Self {
        Sleepy { knobs, last: Vec::new() }
    }
}

impl Policy for Sleepy {
    fn name(&self) -> &'static str {
        "sleepy"
    }

    fn plan(&mut self, view: &PlanView, _: Option<&Forecast>) -> Vec<PlanCommand> {
        let k = &self.knobs;
        let rs = k.reach(view);
        let active: Vec<bool> = view.ecs.iter().map(|v| v.is_ready()).collect();
        let cov = coverage(current_placement(view, &rs, k.rate_per_user), &rs, &k.capacity, &active, true);
        let assign = cov.placement.assignment();
        let covered: Vec<bool> = (0..view.ecs.len()).map(|e| cov.contains(e)).collect();
        let s_count = view.topology.num_services();
        let mut out = Vec::new();
        let assoc = associate_all(
            view,
            |u| {
                let uv = view.users[u];
                choose_association(view, &rs, u, assign[uv.cell * s_count + uv.service], &covered)
            },
            &mut out,
        );
        let users = users_per_service(view, &assoc);
        let mut sleeping_now = vec![false; view.ecs.len()];
        for (e, ec) in view.ecs.iter().enumerate() {
            if ec.transitioning {
                continue;
            }
            let has_users = users[e].iter().any(|&n| n > 0);
            match ec.state {
                EcState::Active => {
                    let busy = ec.pending_lifecycle > 0 || view.services[e].iter().any(|v| v.transitioning);
                    if !covered[e] && !has_users && !busy {
                        sleeping_now[e] = true;
                        out.push(ec_command(view, e, EcState::Sleep(Self::LEVEL)));
                    }
                }
                EcState::Sleep(_) => {
                    if covered[e] || has_users {
                        out.push(ec_command(view, e, EcState::Active));
                    }
                }
            }
        }
        for e in 0..view.ecs.len() {
            if view.ecs[e].is_ready() && !sleeping_now[e] {
                let need: Vec<f64> = (0..s_count)
                    .map(|s| if cov.placement.hosts(e, s) { 0.0 } else { f64::INFINITY })
                    .collect();
                service_commands(view, k, e, &need, &users[e], 0.0, &mut out);
            }
        }
        self.last = assign;
        out
    }

    fn on_handover(&mut self, view: &PlanView, user: usize) -> Option<EcId> {
        let u = view.users[user];
        let rs = self.knobs.reach(view);
        if view.serves(u.associated, u.service) && rs.contains(u.cell, u.associated) {
            return None;
        }
        let desired = self.last.get(u.cell * view.topology.num_services() + u.service).copied().flatten();
        let ec = choose_association(view, &rs, user, desired, &vec![false; view.ecs.len()]);
        (ec != u.associated).then_some(ec)
    }
}

/// Recomputes the cheapest cover of the present load every tick and jumps
/// straight to it: ECs outside it go to the deepest sleep state, users are
/// moved to their target whether or not it is ready yet.
pub struct Reactive {
    knobs: PolicyKnobs,
    last: Vec<Option<EcId>>,
}

impl Reactive {
    pub fn new(knobs: PolicyKnobs) -> Self {
        Reactive { knobs, last: Vec::new() }
    }

    fn target(&self, cell: EcId, s: usize, services: usize) -> EcId {
        self.last.get(cell * services + s).copied().flatten().unwrap_or(cell)
    }
}

impl Policy for Reactive {
    fn name(&self) -> &'static str {
        "reactive"
    }

    fn plan(&mut self, view: &PlanView, _: Option<&Forecast>) -> Vec<PlanCommand> {
        let k = &self.knobs;
        let rs = k.reach(view);
        let active: Vec<bool> = view.ecs.iter().map(|e| e.state.is_active()).collect();
        let cov = coverage(local_placement(view, k.rate_per_user), &rs, &k.capacity, &active, true);
        self.last = cov.placement.assignment();
        let s_count = view.topology.num_services();
        let mut out = Vec::new();
        let assoc = associate_all(view, |u| self.target(view.users[u].cell, view.users[u].service, s_count), &mut out);
        let users = users_per_service(view, &assoc);
        let deepest = k.sleep_levels.iter().copied().max();
        let mut sleeping_now = vec![false; view.ecs.len()];
        for (e, ec) in view.ecs.iter().enumerate() {
            if ec.transitioning {
                continue;
            }
            let wanted = cov.contains(e) || users[e].iter().any(|&n| n > 0);
            match ec.state {
                EcState::Active => {
                    let busy = ec.pending_lifecycle > 0 || view.services[e].iter().any(|v| v.transitioning);
                    if let (false, false, Some(d)) = (wanted, busy, deepest) {
                        sleeping_now[e] = true;
                        out.push(ec_command(view, e, EcState::Sleep(d)));
                    }
                }
                EcState::Sleep(_) if wanted => out.push(ec_command(view, e, EcState::Active)),
                EcState::Sleep(_) => {}
            }
        }
        for e in 0..view.ecs.len() {
            if view.ecs[e].is_ready() && !sleeping_now[e] {
                let need: Vec<f64> = (0..s_count)
                    .map(|s| if cov.placement.hosts(e, s) || users[e][s] > 0 { 0.0 } else { f64::INFINITY })
                    .collect();
                service_commands(view, k, e, &need, &users[e], 0.0, &mut out);
            }
        }
        out
    }

    fn on_handover(&mut self, view: &PlanView, user: usize) -> Option<EcId> {
        let u = view.users[user];
        let ec = self.target(u.cell, u.service, view.topology.num_services());
        (ec != u.associated).then_some(ec)
    }
}
