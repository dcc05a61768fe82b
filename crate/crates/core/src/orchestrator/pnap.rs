//! The proactive planner and the pieces of it the baselines reuse.

use crate::config::PolicyVariant;
use crate::forecast::{Forecast, LoadMatrix};
use crate::lifecycle::{footprint, transition_time, ServiceState};
use crate::power::EcState;
use crate::queueing::Class;
use crate::scenario::{EcId, ServiceId};

use super::horizon::{aggregate_horizon, sleep_round_trip, HorizonInputs, HorizonPlan};
use super::load::Reach;
use super::{CommandKind, PlanCommand, PlanView, Policy, PolicyKnobs};

/// Current load placed where it is served now: at the user's EC when that EC
/// can serve it within reach, otherwise at the user's cell.
pub fn current_placement(view: &PlanView, rs: &Reach, rate: f64) -> LoadMatrix {
    let (e, s) = (view.topology.num_ecs(), view.topology.num_services());
    let mut m = LoadMatrix::zeros(e, s);
    for u in view.users {
        let at = if view.serves(u.associated, u.service) && rs.contains(u.cell, u.associated) {
            u.associated
        } else {
            u.cell
        };
        m.add(at, u.cell, u.service, rate);
    }
    m
}

/// Current load with every origin served locally.
pub fn local_placement(view: &PlanView, rate: f64) -> LoadMatrix {
    view.origin_load(rate).to_matrix()
}

/// Picks a serving EC. The planned one is trusted once its service start is
/// due; otherwise only ECs that can serve right now are considered, falling
/// back to the current association when nothing can.
pub fn choose_association(
    view: &PlanView,
    rs: &Reach,
    user: usize,
    desired: Option<EcId>,
    preferred: &[bool],
) -> EcId {
    let u = view.users[user];
    let s = u.service;
    if let Some(d) = desired {
        if view.scheduled_to_serve(d, s) && rs.contains(u.cell, d) {
            return d;
        }
    }
    if view.serves(u.associated, s) && rs.contains(u.cell, u.associated) {
        return u.associated;
    }
    let e = view.topology.num_ecs();
    let reachable = (0..e)
        .filter(|&w| view.serves(w, s) && rs.contains(u.cell, w))
        .min_by_key(|&w| (!preferred[w], rs.distance(u.cell, w), w));
    if let Some(w) = reachable {
        return w;
    }
    (0..e)
        .filter(|&w| view.serves(w, s))
        .min_by_key(|&w| (view.topology.hops(u.cell, w), w))
        .unwrap_or(u.associated)
}

/// Associations for every user, emitting a command per change. Returns the
/// resulting association per user.
pub(crate) fn associate_all(
    view: &PlanView,
    mut pick: impl FnMut(usize) -> EcId,
    out: &mut Vec<PlanCommand>,
) -> Vec<EcId> {
    (0..view.users.len())
        .map(|u| {
            let ec = pick(u);
            if ec != view.users[u].associated {
                out.push(PlanCommand {
                    issue_t: view.now,
                    kind: CommandKind::Associate { user: u, ec },
                });
            }
            ec
        })
        .collect()
}

/// `[e][s]` users per service after reassignment.
pub(crate) fn users_per_service(view: &PlanView, assoc: &[EcId]) -> Vec<Vec<usize>> {
    let mut n = vec![vec![0; view.topology.num_services()]; view.topology.num_ecs()];
    for (u, &e) in assoc.iter().enumerate() {
        n[e][view.users[u].service] += 1;
    }
    n
}

/// Margin between a start's nominal completion and the moment it is needed.
pub const START_GUARD: f64 = 0.05;

/// Starts services at a ready EC whose need falls within their lead time,
/// pausing or stopping idle, unneeded services to make room.
pub(crate) fn service_commands(
    view: &PlanView,
    knobs: &PolicyKnobs,
    e: EcId,
    need: &[f64],
    users: &[usize],
    slack: f64,
    out: &mut Vec<PlanCommand>,
) {
    let svc = &view.services[e];
    let mut states: Vec<ServiceState> = svc.iter().map(|v| v.state).collect();
    let mut locked: Vec<bool> = svc.iter().map(|v| v.transitioning).collect();
    let held = |states: &[ServiceState]| {
        states
            .iter()
            .enumerate()
            .map(|(s, &st)| footprint(st, knobs.demand(s)))
            .sum::<crate::config::Resources>()
    };
    let mut pending = view.ecs[e].pending_lifecycle;
    let mut order: Vec<ServiceId> = (0..svc.len()).filter(|&s| need[s].is_finite()).collect();
    order.sort_by(|&a, &b| need[a].total_cmp(&need[b]).then(a.cmp(&b)));
    for s in order {
        if locked[s] || states[s] == ServiceState::Running {
            continue;
        }
        let queue_allowance = 2.0 * pending as f64 * knobs.lifecycle.t_start / knobs.cores.max(1) as f64;
        let lead = transition_time(states[s], ServiceState::Running, &knobs.lifecycle) + queue_allowance;
        if need[s] > lead + slack {
            continue;
        }
        // Make room.
        let cap = knobs.capacity.resources;
        loop {
            let mut after = states.clone();
            after[s] = ServiceState::Running;
            let total = held(&after);
            if total.fits_within(&cap) {
                break;
            }
            let idle = |v: usize| !locked[v] && v != s && users[v] == 0 && need[v].is_infinite();
            let target = if total.mem <= cap.mem {
                (0..svc.len())
                    .find(|&v| idle(v) && states[v] == ServiceState::Running)
                    .map(|v| (v, ServiceState::Paused))
            } else {
                None
            }
            .or_else(|| {
                (0..svc.len())
                    .filter(|&v| idle(v) && states[v] != ServiceState::Stopped)
                    .min_by_key(|&v| (states[v] == ServiceState::Running, v))
                    .map(|v| (v, ServiceState::Stopped))
            });
            let Some((v, st)) = target else { break };
            out.push(PlanCommand {
                issue_t: view.now,
                kind: CommandKind::ServiceTransition {
                    ec: e,
                    service: v,
                    target: st,
                },
            });
            states[v] = st;
            locked[v] = true;
            pending += 1;
        }
        let mut after = states.clone();
        after[s] = ServiceState::Running;
        if !held(&after).fits_within(&knobs.capacity.resources) {
            continue;
        }
        // Timed to finish just before the service is needed.
        let delay = (need[s] - lead - START_GUARD).max(0.0);
        out.push(PlanCommand {
            issue_t: view.now + delay,
            kind: CommandKind::ServiceTransition {
                ec: e,
                service: s,
                target: ServiceState::Running,
            },
        });
        states[s] = ServiceState::Running;
        locked[s] = true;
        pending += 1;
    }
}

/// PNap and its variants. With offloading and sleep disabled it doubles as
/// the always-on baseline.
pub struct Pnap {
    knobs: PolicyKnobs,
    always_on: bool,
    last: Option<(f64, HorizonPlan)>,
}

impl Pnap {
    pub fn new(knobs: PolicyKnobs) -> Self {
        Pnap {
            knobs,
            always_on: false,
            last: None,
        }
    }

    pub fn always_on(mut knobs: PolicyKnobs) -> Self {
        knobs.sleep_levels.clear();
        Pnap {
            knobs,
            always_on: true,
            last: None,
        }
    }

    fn offload(&self) -> bool {
        !self.always_on && self.knobs.offload_enabled()
    }

    /// Horizon coverage for the given snapshot and forecast.
    pub fn horizon(&self, view: &PlanView, rs: &Reach, forecast: Option<&Forecast>) -> HorizonPlan {
        let k = &self.knobs;
        let current = if self.offload() {
            current_placement(view, rs, k.rate_per_user)
        } else {
            local_placement(view, k.rate_per_user)
        };
        let active: Vec<bool> = view.ecs.iter().map(|v| v.is_ready()).collect();
        let in_use: Vec<bool> = view.ecs.iter().map(|v| v.associated > 0).collect();
        let frames = forecast.map_or(&[][..], |f| &f.frames[..]);
        aggregate_horizon(
            Some(current),
            frames,
            forecast.map_or(k.step_dt, |f| f.step_dt),
            HorizonInputs {
                rs,
                cap: &k.capacity,
                active: &active,
                offload: self.offload(),
                in_use: &in_use,
            },
        )
    }

    fn guard(&self) -> f64 {
        let k = &self.knobs;
        k.wake_margin + k.lifecycle.t_start + 2.0 * k.tick_dt
    }
}

impl Policy for Pnap {
    fn name(&self) -> &'static str {
        if self.always_on {
            PolicyVariant::AlwaysOn.as_str()
        } else {
            self.knobs.variant.as_str()
        }
    }

    fn plan(&mut self, view: &PlanView, forecast: Option<&Forecast>) -> Vec<PlanCommand> {
        let rs = self.knobs.reach(view);
        let plan = self.horizon(view, &rs, forecast);
        let k = &self.knobs;
        let s_count = view.topology.num_services();
        let mut out = Vec::new();

        let now_assign = plan.frames[0].placement.assignment();
        let assoc = associate_all(
            view,
            |u| {
                let uv = view.users[u];
                choose_association(view, &rs, u, now_assign[uv.cell * s_count + uv.service], &plan.keep)
            },
            &mut out,
        );
        let users = users_per_service(view, &assoc);

        let guard = self.guard();
        let deepest = k.sleep_levels.iter().copied().max();
        let mut sleeping_now = vec![false; view.ecs.len()];
        for (e, ec) in view.ecs.iter().enumerate() {
            if ec.transitioning {
                continue;
            }
            let has_users = users[e].iter().any(|&n| n > 0);
            let need = plan.need_time[e];
            let target = match ec.state {
                EcState::Active => {
                    let busy = has_users || ec.pending_lifecycle > 0 || view.services[e].iter().any(|v| v.transitioning);
                    let sa_hold = k.variant == PolicyVariant::PnapSa && need <= k.sa_idle_threshold;
                    if busy || sa_hold {
                        None
                    } else {
                        sleep_round_trip(need, &k.power, guard, &k.sleep_levels).map(EcState::Sleep)
                    }
                }
                EcState::Sleep(l) => {
                    let up = k.power.spec(l).up_delay;
                    let deepen = need.is_infinite() && deepest.is_some_and(|d| d > l);
                    (has_users || need <= up + guard || deepen).then_some(EcState::Active)
                }
            };
            if let Some(target) = target {
                sleeping_now[e] = !target.is_active();
                out.push(PlanCommand {
                    issue_t: view.now,
                    kind: CommandKind::EcTransition { ec: e, target },
                });
            }
        }

        for e in 0..view.ecs.len() {
            if view.ecs[e].is_ready() && !sleeping_now[e] {
                service_commands(view, k, e, &plan.service_need[e], &users[e], k.tick_dt, &mut out);
            }
        }
        self.last = Some((view.now, plan));
        out
    }

    fn on_handover(&mut self, view: &PlanView, user: usize) -> Option<EcId> {
        let u = view.users[user];
        let rs = self.knobs.reach(view);
        if view.serves(u.associated, u.service) && rs.contains(u.cell, u.associated) {
            return None;
        }
        let s_count = view.topology.num_services();
        let (desired, keep) = match &self.last {
            Some((t, plan)) => (plan.assignment_at(view.now - t)[u.cell * s_count + u.service], plan.keep.clone()),
            None => (None, vec![false; view.ecs.len()]),
        };
        let ec = choose_association(view, &rs, user, desired, &keep);
        (ec != u.associated).then_some(ec)
    }

    fn lifecycle_class(&self) -> Class {
        if self.knobs.variant == PolicyVariant::PnapP && !self.always_on {
            Class::Low
        } else {
            Class::High
        }
    }

    fn uses_forecast(&self) -> bool {
        true
    }
}
