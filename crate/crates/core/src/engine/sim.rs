//! The event loop.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::{ForecastKind, ScenarioConfig};
use crate::events::EventQueue;
use crate::forecast::{
    ingest_forecast_file, EwmaForecaster, FileForecaster, Forecaster, OracleForecaster, OriginLoad,
    PersistenceForecaster,
};
use crate::latency::{forwarding_latency, link_loads, Disruption, LatencySample, Verdict};
use crate::lifecycle::{footprint, transition_time, LifecycleTable, ServiceInstance, ServiceState};
use crate::mobility::Trajectory;
use crate::orchestrator::{build_policy, CommandKind, EcView, PlanCommand, PlanView, Policy, PolicyKnobs, ServiceView, UserView};
use crate::power::{instantaneous_power, EcActivity, PowerTable};
use crate::queueing::{sample_user_service_time, Class, Effects, EcQueue, Job};
use crate::scenario::{build_topology, EcId, ServiceId, Topology};

use super::metrics::{category, MetricsReport, Meter};
use super::trace::{TraceKind, Tracer};
use super::EngineError;

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival,
    Completion { ec: EcId, job: u64, token: u64 },
    Mobility { step: usize },
    Tick,
    EcDone { ec: EcId },
    /// A command planned for later; stale once a newer plan exists.
    Deferred { slot: usize, plan: u64 },
    End,
}

#[derive(Debug, Clone, Copy)]
enum Work {
    User {
        req: u64,
        user: usize,
        service: ServiceId,
        t_w: f64,
        t_f: f64,
    },
    Lifecycle,
}

const TAIL: usize = 32;
const HISTORY: usize = 256;

/// Piecewise power trace of one EC, averaged between flush points.
#[derive(Debug, Clone, Copy, Default)]
struct Segment {
    start: f64,
    last: f64,
    energy: f64,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    topo: Topology,
    policy: Box<dyn Policy>,
    forecaster: Option<Box<dyn Forecaster>>,
    traj: Arc<Trajectory>,
    power: PowerTable,
    life: LifecycleTable,
    ecs: Vec<EcActivity>,
    svc: Vec<Vec<ServiceInstance>>,
    queues: Vec<EcQueue<Work>>,
    pending_lifecycle: Vec<usize>,
    assoc: Vec<EcId>,
    cells: Vec<EcId>,
    loads: Vec<f64>,
    loads_dirty: bool,
    events: EventQueue<Event>,
    arrivals: ChaCha8Rng,
    service_times: ChaCha8Rng,
    meter: Meter,
    tracer: Tracer,
    segments: Vec<Segment>,
    history: Vec<OriginLoad>,
    next_job: u64,
    tail: VecDeque<(f64, Event)>,
    deferred: Vec<PlanCommand>,
    plan_no: u64,
    user_class: Class,
    life_class: Class,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mobility of a run, independent of the policy.
pub fn trajectory(cfg: &ScenarioConfig, topo: &Topology) -> Trajectory {
    Trajectory::generate(
        topo,
        &cfg.mobility,
        cfg.users.count,
        cfg.sim_duration,
        &mut rng(cfg.seed, 0),
        &mut rng(cfg.seed, 1),
    )
}

/// Origin load of the users' cells at step `k`.
pub fn origin_load_at(traj: &Trajectory, k: usize, ecs: usize, services: usize, rate: f64) -> OriginLoad {
    let mut o = OriginLoad::zeros(ecs, services);
    for (u, &q) in traj.cells[k].iter().enumerate() {
        o.add(q, traj.services[u], rate);
    }
    o
}

fn make_forecaster(cfg: &ScenarioConfig, traj: &Arc<Trajectory>, topo: &Topology) -> Result<Box<dyn Forecaster>, EngineError> {
    let f = &cfg.forecast;
    Ok(match f.kind {
        ForecastKind::Oracle => {
            let traj = Arc::clone(traj);
            let (e, s, rate) = (topo.num_ecs(), topo.num_services(), cfg.services.request_rate);
            Box::new(OracleForecaster::new(Arc::new(move |t| {
                origin_load_at(&traj, traj.step_at(t), e, s, rate)
            })))
        }
        ForecastKind::Persistence => Box::new(PersistenceForecaster),
        ForecastKind::Ewma => Box::new(EwmaForecaster { weight: f.ewma_weight }),
        ForecastKind::File => {
            let path = f
                .path
                .as_ref()
                .ok_or_else(|| crate::config::ConfigError::invalid("forecast.path", "required for kind = file"))?;
            Box::new(FileForecaster::new(ingest_forecast_file(path, topo.num_ecs(), topo.num_services())?))
        }
    })
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, tracer: Tracer) -> Result<Self, EngineError> {
        cfg.validate()?;
        let knobs = PolicyKnobs::from_config(cfg)?;
        let policy = build_policy(knobs);
        Self::with_policy(cfg, policy, tracer)
    }

    pub fn with_policy(cfg: &ScenarioConfig, policy: Box<dyn Policy>, tracer: Tracer) -> Result<Self, EngineError> {
        cfg.validate()?;
        let topo = build_topology(cfg)?;
        let traj = Arc::new(trajectory(cfg, &topo));
        let forecaster = if policy.uses_forecast() {
            Some(make_forecaster(cfg, &traj, &topo)?)
        } else {
            None
        };
        let (e_n, s_n) = (topo.num_ecs(), topo.num_services());
        let life_class = policy.lifecycle_class();
        let cells = traj.cells[0].clone();
        let mut sim = Simulation {
            power: PowerTable::from_config(&cfg.power_with_sleepy())?,
            life: LifecycleTable::from(&cfg.lifecycle),
            ecs: (0..e_n).map(EcActivity::new).collect(),
            svc: (0..e_n).map(|e| (0..s_n).map(|s| ServiceInstance::new(e, s)).collect()).collect(),
            queues: (0..e_n).map(|_| EcQueue::new(cfg.ec.cores)).collect(),
            pending_lifecycle: vec![0; e_n],
            assoc: cells.clone(),
            cells,
            loads: vec![0.0; topo.links.len()],
            loads_dirty: true,
            events: EventQueue::new(),
            arrivals: rng(cfg.seed, 2),
            service_times: rng(cfg.seed, 3),
            meter: Meter::new(e_n, cfg.warmup),
            tracer,
            segments: vec![Segment::default(); e_n],
            history: Vec::new(),
            next_job: 0,
            tail: VecDeque::with_capacity(TAIL),
            deferred: Vec::new(),
            plan_no: 0,
            user_class: match life_class {
                Class::High => Class::Low,
                Class::Low => Class::High,
            },
            life_class,
            cfg: cfg.clone(),
            topo,
            policy,
            forecaster,
            traj,
        };
        sim.warm_start();
        Ok(sim)
    }

    /// Services used by the initial users run at their cell's EC from the
    /// start, most used first, as far as resources allow.
    fn warm_start(&mut self) {
        let s_n = self.topo.num_services();
        for e in 0..self.topo.num_ecs() {
            let mut count = vec![0usize; s_n];
            for (u, &q) in self.cells.iter().enumerate() {
                if q == e {
                    count[self.traj.services[u]] += 1;
                }
            }
            let mut order: Vec<ServiceId> = (0..s_n).filter(|&s| count[s] > 0).collect();
            order.sort_by_key(|&s| (std::cmp::Reverse(count[s]), s));
            let mut held = crate::config::Resources::ZERO;
            for s in order {
                let d = self.cfg.services.demand;
                if (held + d).fits_within(&self.cfg.ec.capacity) {
                    held += d;
                    self.svc[e][s].state = ServiceState::Running;
                }
            }
        }
    }

    fn breach(&self, what: impl Into<String>) -> EngineError {
        let tail = self
            .tail
            .iter()
            .map(|(t, e)| format!("  {t:.6} {e:?}"))
            .collect::<Vec<_>>()
            .join("\n");
        EngineError::Invariant {
            t: self.events.now(),
            what: what.into(),
            tail,
        }
    }

    fn watts(&self, ec: EcId) -> f64 {
        instantaneous_power(&self.ecs[ec], self.queues[ec].busy_cores(), self.cfg.ec.cores, &self.power)
    }

    /// Closes the accounting interval of `ec` at `now`. Call before anything
    /// that changes its power draw.
    fn account(&mut self, ec: EcId, now: f64) {
        let w = self.watts(ec);
        let a = &self.ecs[ec];
        let cat = category(a.state, a.is_transitioning());
        self.meter.advance(ec, now, w, cat);
        let seg = &mut self.segments[ec];
        seg.energy += w * (now - seg.last);
        seg.last = now;
    }

    fn flush_segment(&mut self, ec: EcId, now: f64) {
        if !self.tracer.wants(TraceKind::Power) {
            return;
        }
        self.account(ec, now);
        let seg = self.segments[ec];
        if now > seg.start {
            let state = self.ecs[ec].state.to_string();
            self.tracer.power(ec, seg.start, now, seg.energy / (now - seg.start), &state);
        }
        self.segments[ec] = Segment {
            start: now,
            last: now,
            energy: 0.0,
        };
    }

    fn schedule_effects(&mut self, ec: EcId, fx: Effects) {
        for st in fx.started {
            self.events.schedule(
                st.finish_at,
                Event::Completion {
                    ec,
                    job: st.job_id,
                    token: st.token,
                },
            );
        }
    }

    fn refresh_loads(&mut self) {
        if self.loads_dirty {
            let rate = self.cfg.services.request_rate;
            self.loads = link_loads(&self.topo, self.cells.iter().zip(&self.assoc).map(|(&q, &e)| (q, e, rate)));
            self.loads_dirty = false;
        }
    }

    /// Drops queued user requests at `ec` matching `pred`; each one counts as
    /// a violation.
    fn drop_users(&mut self, ec: EcId, now: f64, mut pred: impl FnMut(ServiceId) -> bool) {
        self.account(ec, now);
        let (removed, fx) = self.queues[ec].remove_where(|j| matches!(j.payload, Work::User { service, .. } if pred(service)), now);
        for j in removed {
            self.meter.record(j.arrival, true, true);
        }
        self.schedule_effects(ec, fx);
    }

    pub fn run(mut self) -> Result<MetricsReport, EngineError> {
        let end = self.cfg.sim_duration;
        self.events.schedule(end, Event::End);
        self.events.schedule(0.0, Event::Tick);
        if self.traj.num_steps() > 1 && self.traj.step_dt < end {
            self.events.schedule(self.traj.step_dt, Event::Mobility { step: 1 });
        }
        if self.cfg.users.count > 0 {
            let t = self.next_arrival_gap();
            self.events.schedule(t, Event::Arrival);
        }
        if self.tracer.wants(TraceKind::Mobility) {
            self.trace_mobility(0, 0.0);
        }
        while let Some((t, ev)) = self.events.pop() {
            if self.tail.len() == TAIL {
                self.tail.pop_front();
            }
            self.tail.push_back((t, ev));
            match ev {
                Event::End => break,
                Event::Arrival => self.on_arrival(t)?,
                Event::Completion { ec, job, token } => self.on_completion(t, ec, job, token)?,
                Event::Mobility { step } => self.on_mobility(t, step)?,
                Event::Tick => self.on_tick(t)?,
                Event::Deferred { slot, plan } => {
                    if plan == self.plan_no {
                        let c = self.deferred[slot];
                        self.apply(t, c)?;
                    }
                }
                Event::EcDone { ec } => {
                    self.account(ec, t);
                    self.flush_segment(ec, t);
                    self.ecs[ec].complete_transition(t).map_err(|e| self.breach(e.to_string()))?;
                }
            }
        }
        for ec in 0..self.ecs.len() {
            self.account(ec, end);
            self.flush_segment(ec, end);
        }
        let report = self.meter.report(
            self.policy.name(),
            self.cfg.seed,
            self.cfg.t_max,
            end,
            self.power.p_peak,
            (self.cfg.objective.w_power, self.cfg.objective.w_violation),
        );
        self.tracer.finish()?;
        Ok(report)
    }

    fn next_arrival_gap(&mut self) -> f64 {
        let total = self.cfg.users.count as f64 * self.cfg.services.request_rate;
        Exp::new(total).expect("positive rate").sample(&mut self.arrivals)
    }

    fn on_arrival(&mut self, t: f64) -> Result<(), EngineError> {
        let gap = self.next_arrival_gap();
        self.events.schedule(t + gap, Event::Arrival);
        let u = self.arrivals.random_range(0..self.cfg.users.count);
        let demand = sample_user_service_time(&mut self.service_times, self.cfg.ec.service_rate, self.cfg.ec.service_time);
        let req = self.next_job;
        self.next_job += 1;
        self.refresh_loads();
        let (s, ec, cell) = (self.traj.services[u], self.assoc[u], self.cells[u]);
        let t_w = self.topo.wireless_delay;
        let path = self.topo.route(cell, ec).map_err(|e| self.breach(e.to_string()))?;
        let t_f = forwarding_latency(&self.topo, path, &self.loads);
        let ec_ready = self.ecs[ec].is_ready();
        let svc_ready = self.svc[ec][s].is_ready();
        let t_f = match t_f {
            Ok(v) if ec_ready && svc_ready => v,
            other => {
                let d = Disruption {
                    dropped: true,
                    service_transitioning: self.svc[ec][s].is_transitioning(),
                    ec_waking: self.ecs[ec].is_transitioning(),
                };
                self.meter.record(t, true, true);
                if self.tracer.wants(TraceKind::Latency) {
                    let sample = LatencySample::new(req, t_w, other.unwrap_or(f64::INFINITY), 0.0, self.cfg.t_max, d);
                    self.tracer.latency(t, u, ec, s, &sample);
                }
                return Ok(());
            }
        };
        self.account(ec, t);
        let job = Job::new(
            req,
            self.user_class,
            t,
            demand,
            Work::User {
                req,
                user: u,
                service: s,
                t_w,
                t_f,
            },
        );
        let fx = self.queues[ec].enqueue(job, t);
        self.schedule_effects(ec, fx);
        Ok(())
    }

    fn on_completion(&mut self, t: f64, ec: EcId, job: u64, token: u64) -> Result<(), EngineError> {
        self.account(ec, t);
        let Some((job, fx)) = self.queues[ec].complete(job, token, t) else {
            return Ok(());
        };
        self.schedule_effects(ec, fx);
        match job.payload {
            Work::User {
                req,
                user,
                service,
                t_w,
                t_f,
            } => {
                if !(self.ecs[ec].is_ready() && self.svc[ec][service].is_ready()) {
                    return Err(self.breach(format!("request served at EC {ec} while it or service {service} was not ready")));
                }
                let sample = LatencySample::new(req, t_w, t_f, t - job.arrival, self.cfg.t_max, Disruption::default());
                self.meter.record(job.arrival, sample.verdict == Verdict::Violated, false);
                if self.tracer.wants(TraceKind::Latency) {
                    self.tracer.latency(job.arrival, user, ec, service, &sample);
                }
            }
            Work::Lifecycle => {
                let s = self.lifecycle_service(ec, job.id)?;
                self.svc[ec][s].complete_transition(t).map_err(|e| self.breach(e.to_string()))?;
                self.pending_lifecycle[ec] -= 1;
            }
        }
        Ok(())
    }

    /// Lifecycle job ids encode the service in their low bits.
    fn lifecycle_service(&self, ec: EcId, id: u64) -> Result<ServiceId, EngineError> {
        let s = (id & 0xffff) as ServiceId;
        if s >= self.topo.num_services() {
            return Err(self.breach(format!("bad lifecycle job {id} at EC {ec}")));
        }
        Ok(s)
    }

    fn on_mobility(&mut self, t: f64, step: usize) -> Result<(), EngineError> {
        let next = &self.traj.cells[step];
        let moved: Vec<usize> = (0..next.len()).filter(|&u| next[u] != self.cells[u]).collect();
        self.cells = next.clone();
        self.loads_dirty = true;
        for u in moved {
            self.refresh_loads();
            let choice = {
                let snap = self.snapshot();
                let view = snap.view(t, &self.topo, &self.loads);
                self.policy.on_handover(&view, u)
            };
            if let Some(ec) = choice {
                self.apply(
                    t,
                    PlanCommand {
                        issue_t: t,
                        kind: CommandKind::Associate { user: u, ec },
                    },
                )?;
            }
        }
        if self.tracer.wants(TraceKind::Mobility) {
            self.trace_mobility(step, t);
        }
        let n = step + 1;
        let t_next = n as f64 * self.traj.step_dt;
        if n < self.traj.num_steps() && t_next < self.cfg.sim_duration {
            self.events.schedule(t_next, Event::Mobility { step: n });
        }
        Ok(())
    }

    fn trace_mobility(&mut self, step: usize, t: f64) {
        for u in 0..self.assoc.len() {
            let pos = self.traj.positions[step][u];
            self.tracer.mobility(t, u, pos, self.cells[u], self.assoc[u]);
        }
    }

    fn snapshot(&self) -> Snapshot {
        let mut associated = vec![0; self.ecs.len()];
        for &e in &self.assoc {
            associated[e] += 1;
        }
        Snapshot {
            ecs: self
                .ecs
                .iter()
                .enumerate()
                .map(|(e, a)| EcView {
                    state: a.state,
                    transitioning: a.is_transitioning(),
                    pending_lifecycle: self.pending_lifecycle[e],
                    associated: associated[e],
                })
                .collect(),
            services: self
                .svc
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|i| ServiceView {
                            state: i.state,
                            transitioning: i.is_transitioning(),
                            due: i.in_transition.as_ref().map(|t| t.due),
                        })
                        .collect()
                })
                .collect(),
            users: (0..self.assoc.len())
                .map(|u| UserView {
                    cell: self.cells[u],
                    service: self.traj.services[u],
                    associated: self.assoc[u],
                })
                .collect(),
        }
    }

    fn on_tick(&mut self, t: f64) -> Result<(), EngineError> {
        let (e_n, s_n) = (self.topo.num_ecs(), self.topo.num_services());
        let rate = self.cfg.services.request_rate;
        let mut observed = OriginLoad::zeros(e_n, s_n);
        for (u, &q) in self.cells.iter().enumerate() {
            observed.add(q, self.traj.services[u], rate);
        }
        if self.history.len() == HISTORY {
            self.history.remove(0);
        }
        self.history.push(observed);
        for ec in 0..e_n {
            self.flush_segment(ec, t);
        }
        self.refresh_loads();
        let forecast = match self.forecaster.as_mut() {
            Some(f) => Some(f.predict(t, &self.history, self.cfg.forecast.horizon, self.cfg.forecast.step_dt)?),
            None => None,
        };
        let commands = {
            let snap = self.snapshot();
            let view = snap.view(t, &self.topo, &self.loads);
            self.policy.plan(&view, forecast.as_ref())
        };
        self.plan_no += 1;
        self.deferred.clear();
        for c in commands {
            if c.issue_t > t {
                self.deferred.push(c);
                let slot = self.deferred.len() - 1;
                self.events.schedule(c.issue_t, Event::Deferred { slot, plan: self.plan_no });
            } else {
                self.apply(t, c)?;
            }
        }
        for (ec, q) in self.queues.iter().enumerate() {
            q.check().map_err(|e| self.breach(format!("EC {ec} queue: {e}")))?;
        }
        let next = t + self.cfg.tick_dt;
        if next < self.cfg.sim_duration {
            self.events.schedule(next, Event::Tick);
        }
        Ok(())
    }

    fn apply(&mut self, t: f64, c: PlanCommand) -> Result<(), EngineError> {
        if self.tracer.wants(TraceKind::Commands) {
            self.tracer.command(&c);
        }
        let e_n = self.ecs.len();
        match c.kind {
            CommandKind::Associate { user, ec } => {
                if ec >= e_n || user >= self.assoc.len() {
                    return Err(self.breach(format!("association of user {user} to EC {ec}")));
                }
                self.assoc[user] = ec;
                self.loads_dirty = true;
            }
            CommandKind::EcTransition { ec, target } => {
                if ec >= e_n {
                    return Err(self.breach(format!("no EC {ec}")));
                }
                let to_sleep = !target.is_active();
                if to_sleep && (self.pending_lifecycle[ec] > 0 || self.svc[ec].iter().any(|i| i.is_transitioning())) {
                    return Err(self.breach(format!("EC {ec} put to sleep during a service transition")));
                }
                self.account(ec, t);
                self.flush_segment(ec, t);
                let done = self.ecs[ec]
                    .begin_transition(target, t, &self.power)
                    .map_err(|e| self.breach(e.to_string()))?;
                if self.meter.counts(t) {
                    self.meter.ecs[ec].transitions += 1;
                }
                if to_sleep {
                    self.drop_users(ec, t, |_| true);
                }
                self.events.schedule(done, Event::EcDone { ec });
            }
            CommandKind::ServiceTransition { ec, service, target } => {
                if ec >= e_n || service >= self.topo.num_services() {
                    return Err(self.breach(format!("no service {service} at EC {ec}")));
                }
                let from = self.svc[ec][service].state;
                let ready = self.ecs[ec].is_ready();
                self.svc[ec][service]
                    .begin_transition(target, t, ready, &self.life)
                    .map_err(|e| self.breach(e.to_string()))?;
                let held: crate::config::Resources = self.svc[ec]
                    .iter()
                    .map(|i| footprint(i.state, self.cfg.services.demand))
                    .sum();
                if !held.fits_within(&self.cfg.ec.capacity) {
                    return Err(self.breach(format!("EC {ec} holds {held}, capacity {}", self.cfg.ec.capacity)));
                }
                if self.meter.counts(t) {
                    self.meter.service_transitions += 1;
                }
                if target != ServiceState::Running {
                    self.drop_users(ec, t, |s| s == service);
                }
                self.account(ec, t);
                let id = (self.next_job << 16) | service as u64;
                self.next_job += 1;
                let job = Job::new(id, self.life_class, t, transition_time(from, target, &self.life), Work::Lifecycle);
                self.pending_lifecycle[ec] += 1;
                let fx = self.queues[ec].enqueue(job, t);
                self.schedule_effects(ec, fx);
            }
        }
        Ok(())
    }
}

struct Snapshot {
    ecs: Vec<EcView>,
    services: Vec<Vec<ServiceView>>,
    users: Vec<UserView>,
}

impl Snapshot {
    fn view<'a>(&'a self, now: f64, topology: &'a Topology, link_loads: &'a [f64]) -> PlanView<'a> {
        PlanView {
            now,
            topology,
            ecs: &self.ecs,
            services: &self.services,
            users: &self.users,
            link_loads,
        }
    }
}
