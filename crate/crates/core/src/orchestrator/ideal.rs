//! Exhaustive optimum for tiny instances with instantaneous transitions.
//!
//! With zero transition delays the steps decouple, so each step is solved on
//! its own: enumerate the set of active ECs, then assign users depth-first.
//! A step costs `w_power * sum(P_e) + w_violation * sum(rate_u * dt * v_u)`,
//! where active ECs draw `p_idle` and the others the deepest sleep power.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::config::{PowerConfig, Resources, SleepLevel};
use crate::latency::path_estimate;
use crate::lifecycle::LifecycleTable;
use crate::power::{PowerTable, SleepSpec};
use crate::scenario::{EcId, Service, ServiceId, Topology};

use super::load::Reach;

pub const MAX_ECS: usize = 4;
pub const MAX_USERS: usize = 6;
pub const MAX_SERVICES: usize = 2;
pub const MAX_STEPS: usize = 20;

/// Served rate must stay this far below `c * mu_s`. Wide enough to survive
/// the default feasibility tolerance of MIP solvers reading the LP export.
pub const RATE_SLACK: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum IdealError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("no feasible assignment at step {0}")]
    Infeasible(usize),
}

/// A discretised scenario: users hop between cells at each step of `dt`.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub ecs: usize,
    pub hops: Vec<Vec<usize>>,
    pub services: usize,
    pub user_service: Vec<ServiceId>,
    /// `cells[t][u]`
    pub cells: Vec<Vec<EcId>>,
    pub rates: Vec<f64>,
    pub capacity: Resources,
    pub demand: Vec<Resources>,
    /// `c * mu_s`
    pub service_rate: f64,
    /// `[q][e]`: unloaded latency from cell `q` served at `e`, whole µs.
    pub latency_us: Vec<Vec<i64>>,
    pub t_max_us: i64,
    pub p_idle: f64,
    pub levels: Vec<(SleepLevel, SleepSpec)>,
    pub lifecycle: LifecycleTable,
    pub w_power: f64,
    pub w_violation: f64,
    pub dt: f64,
}

fn to_us(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

impl TinyInstance {
    /// Latencies are taken at zero link load.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topology: &Topology,
        t_max: f64,
        service_budget: f64,
        mu: f64,
        cells: Vec<Vec<EcId>>,
        user_service: Vec<ServiceId>,
        rates: Vec<f64>,
        power: &PowerTable,
        lifecycle: LifecycleTable,
        weights: (f64, f64),
        dt: f64,
    ) -> Self {
        let e = topology.num_ecs();
        let zero = vec![0.0; topology.links.len()];
        let latency_us = (0..e)
            .map(|q| {
                (0..e)
                    .map(|w| to_us(path_estimate(topology, q, w, &zero, service_budget).expect("unloaded")))
                    .collect()
            })
            .collect();
        let ec0 = &topology.ecs[0];
        TinyInstance {
            ecs: e,
            hops: (0..e).map(|a| (0..e).map(|b| topology.hops(a, b)).collect()).collect(),
            services: topology.num_services(),
            user_service,
            cells,
            rates,
            capacity: ec0.capacity,
            demand: topology.services.iter().map(|s| s.demand).collect(),
            service_rate: ec0.cores as f64 * mu,
            latency_us,
            t_max_us: to_us(t_max),
            p_idle: power.p_idle,
            levels: power.available().map(|l| (l, *power.spec(l))).collect(),
            lifecycle,
            w_power: weights.0,
            w_violation: weights.1,
            dt,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_service.len()
    }

    pub fn num_steps(&self) -> usize {
        self.cells.len()
    }

    pub fn sleep_power(&self) -> f64 {
        self.levels.iter().map(|(_, s)| s.power).fold(self.p_idle, f64::min)
    }

    pub fn reach(&self) -> Reach {
        Reach::from_fn(
            self.ecs,
            |q, w| self.latency_us[q][w] <= self.t_max_us,
            |q, w| self.hops[q][w],
        )
    }

    pub fn check_size(&self) -> Result<(), IdealError> {
        let too = |what: &str, n: usize, max: usize| {
            Err(IdealError::TooLarge(format!("{n} {what}, at most {max}")))
        };
        if self.ecs > MAX_ECS {
            return too("ECs", self.ecs, MAX_ECS);
        }
        if self.num_users() > MAX_USERS {
            return too("users", self.num_users(), MAX_USERS);
        }
        if self.services > MAX_SERVICES {
            return too("services", self.services, MAX_SERVICES);
        }
        if self.num_steps() > MAX_STEPS {
            return too("steps", self.num_steps(), MAX_STEPS);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub active: Vec<bool>,
    pub assign: Vec<EcId>,
    pub violated: Vec<bool>,
    /// `[e][s]`
    pub running: Vec<Vec<bool>>,
    pub cost: f64,
}

struct Search<'a> {
    inst: &'a TinyInstance,
    cells: &'a [EcId],
    active: Vec<EcId>,
    rate: Vec<f64>,
    hosted: Vec<u32>,
    assign: Vec<EcId>,
    best: Option<(f64, Vec<EcId>)>,
}

impl Search<'_> {
    fn resources(&self, mask: u32) -> Resources {
        (0..self.inst.services)
            .filter(|s| mask & (1 << s) != 0)
            .map(|s| self.inst.demand[s])
            .sum()
    }

    fn dfs(&mut self, u: usize, cost: f64) {
        if self.best.as_ref().is_some_and(|(b, _)| cost >= *b) {
            return;
        }
        let inst = self.inst;
        if u == inst.num_users() {
            self.best = Some((cost, self.assign.clone()));
            return;
        }
        let s = inst.user_service[u];
        let q = self.cells[u];
        for i in 0..self.active.len() {
            let e = self.active[i];
            let mask = self.hosted[e] | (1 << s);
            if !self.resources(mask).fits_within(&inst.capacity) {
                continue;
            }
            if self.rate[e] + inst.rates[u] > inst.service_rate - RATE_SLACK {
                continue;
            }
            let v = inst.latency_us[q][e] > inst.t_max_us;
            let add = if v { inst.w_violation * inst.rates[u] * inst.dt } else { 0.0 };
            let prev = self.hosted[e];
            self.hosted[e] = mask;
            self.rate[e] += inst.rates[u];
            self.assign[u] = e;
            self.dfs(u + 1, cost + add);
            self.rate[e] -= inst.rates[u];
            self.hosted[e] = prev;
        }
    }
}

/// Optimal decisions for one step given the users' cells.
pub fn solve_step(inst: &TinyInstance, cells: &[EcId]) -> Option<StepSolution> {
    let e = inst.ecs;
    let n = inst.num_users();
    let mut best: Option<(f64, u32, Vec<EcId>)> = None;
    for mask in 0u32..(1 << e) {
        if n > 0 && mask == 0 {
            continue;
        }
        let active: Vec<EcId> = (0..e).filter(|i| mask & (1 << i) != 0).collect();
        let power: f64 = (0..e)
            .map(|i| if mask & (1 << i) != 0 { inst.p_idle } else { inst.sleep_power() })
            .sum::<f64>()
            * inst.w_power
            * inst.dt;
        if best.as_ref().is_some_and(|(b, _, _)| power >= *b) {
            continue;
        }
        let mut search = Search {
            inst,
            cells,
            active,
            rate: vec![0.0; e],
            hosted: vec![0; e],
            assign: vec![0; n],
            best: best.as_ref().map(|(b, _, _)| (*b - power, Vec::new())),
        };
        search.dfs(0, 0.0);
        if let Some((c, a)) = search.best {
            if !a.is_empty() || n == 0 {
                let total = power + c;
                if best.as_ref().is_none_or(|(b, _, _)| total < *b) {
                    best = Some((total, mask, a));
                }
            }
        }
    }
    let (cost, mask, assign) = best?;
    let mut running = vec![vec![false; inst.services]; e];
    let mut violated = vec![false; n];
    for u in 0..n {
        running[assign[u]][inst.user_service[u]] = true;
        violated[u] = inst.latency_us[cells[u]][assign[u]] > inst.t_max_us;
    }
    Some(StepSolution {
        active: (0..e).map(|i| mask & (1 << i) != 0).collect(),
        assign,
        violated,
        running,
        cost,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealSchedule {
    pub steps: Vec<StepSolution>,
    /// Sum of step costs.
    pub objective: f64,
    /// Fraction of requests within the latency limit.
    pub availability: f64,
}

pub fn ideal_schedule(inst: &TinyInstance) -> Result<IdealSchedule, IdealError> {
    inst.check_size()?;
    let mut memo: HashMap<Vec<EcId>, StepSolution> = HashMap::new();
    let mut steps = Vec::with_capacity(inst.num_steps());
    for (t, cells) in inst.cells.iter().enumerate() {
        let sol = match memo.get(cells) {
            Some(s) => s.clone(),
            None => {
                let s = solve_step(inst, cells).ok_or(IdealError::Infeasible(t))?;
                memo.insert(cells.clone(), s.clone());
                s
            }
        };
        steps.push(sol);
    }
    let objective = steps.iter().map(|s| s.cost).sum();
    let total: f64 = inst.rates.iter().sum::<f64>() * steps.len() as f64;
    let bad: f64 = steps
        .iter()
        .flat_map(|s| s.violated.iter().enumerate().filter(|(_, v)| **v).map(|(u, _)| inst.rates[u]))
        .sum();
    Ok(IdealSchedule {
        steps,
        objective,
        availability: if total > 0.0 { 1.0 - bad / total } else { 1.0 },
    })
}

/// Random instance within the exhaustive-search caps. Every cell can serve
/// its own users, so a violation-free schedule always exists, and
/// violations are priced high enough never to pay off.
pub fn random_tiny<R: Rng + ?Sized>(rng: &mut R) -> TinyInstance {
    let shapes = [(1, 1), (1, 2), (1, 3), (2, 2), (1, 4)];
    let (rows, cols) = shapes[rng.random_range(0..shapes.len())];
    let n_services = rng.random_range(1..=MAX_SERVICES);
    let n_users = rng.random_range(0..=MAX_USERS);
    let steps = rng.random_range(1..=MAX_STEPS);
    let cores = rng.random_range(1..=2usize);

    let user_service: Vec<ServiceId> = (0..n_users).map(|_| rng.random_range(0..n_services)).collect();
    let rates: Vec<f64> = (0..n_users).map(|_| rng.random_range(1..=5u32) as f64).collect();
    let e = rows * cols;
    let probe = Topology::grid(rows, cols, 1.0, 1, Resources::new(1, 1), 20_000.0, 0.001, 0.001, Vec::new());
    let mut pos: Vec<EcId> = (0..n_users).map(|_| rng.random_range(0..e)).collect();
    let mut cells = Vec::with_capacity(steps);
    for _ in 0..steps {
        cells.push(pos.clone());
        for p in pos.iter_mut() {
            if rng.random_bool(0.3) {
                let nb: Vec<EcId> = probe.neighbors(*p).collect();
                if !nb.is_empty() {
                    *p = nb[rng.random_range(0..nb.len())];
                }
            }
        }
    }
    // Per-cell local load must fit strictly under c * mu.
    let mut peak = 0.0f64;
    for step in &cells {
        let mut local = vec![0.0; e];
        for (u, &q) in step.iter().enumerate() {
            local[q] += rates[u];
        }
        peak = local.into_iter().fold(peak, f64::max);
    }
    let cap_rate = peak + 1.0 + rng.random_range(0..=10u32) as f64;
    let mu = cap_rate / cores as f64;

    let services = (0..n_services)
        .map(|id| Service {
            id,
            demand: Resources::new(1, 1),
            latency_limit: 0.0,
            request_rate_per_user: 0.0,
        })
        .collect();
    let topo = Topology::grid(rows, cols, 1.0, cores, Resources::new(2, 2), 20_000.0, 0.001, 0.001, services);
    let budget = 0.0015;
    let zero = vec![0.0; topo.links.len()];
    let local = path_estimate(&topo, 0, 0, &zero, budget).unwrap();
    let hop = if e > 1 {
        path_estimate(&topo, 0, 1, &zero, budget).unwrap() - local
    } else {
        0.001
    };
    // Half a hop past some reach radius, so no latency sits on the limit.
    let radius = rng.random_range(0..=probe.diameter());
    let t_max = local + (radius as f64 + 0.5) * hop;
    let power = PowerTable::from_config(&PowerConfig::reference()).expect("reference table");
    TinyInstance::new(
        &topo,
        t_max,
        budget,
        mu,
        cells,
        user_service,
        rates,
        &power,
        LifecycleTable::from(&crate::config::LifecycleConfig::reference()),
        (1.0, 1000.0),
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(rows: usize, cols: usize, cells: Vec<Vec<EcId>>, services: Vec<ServiceId>, t_max_hops: f64) -> TinyInstance {
        let n_services = services.iter().max().map_or(1, |m| m + 1);
        let svc = (0..n_services)
            .map(|id| Service {
                id,
                demand: Resources::new(1, 1),
                latency_limit: 0.0,
                request_rate_per_user: 0.0,
            })
            .collect();
        let topo = Topology::grid(rows, cols, 1.0, 1, Resources::new(2, 2), 20_000.0, 0.001, 0.001, svc);
        let rates = vec![1.0; services.len()];
        let power = PowerTable::from_config(&PowerConfig::reference()).unwrap();
        // Local 2.5 ms, each hop 1.05 ms.
        TinyInstance::new(
            &topo,
            0.0025 + t_max_hops * 0.00105,
            0.0015,
            100.0,
            cells,
            services,
            rates,
            &power,
            LifecycleTable::from(&crate::config::LifecycleConfig::reference()),
            (1.0, 1000.0),
            1.0,
        )
    }

    #[test]
    fn single_user_single_ec() {
        let inst = instance(1, 1, vec![vec![0]; 3], vec![0], 0.5);
        let s = ideal_schedule(&inst).unwrap();
        assert!(s.steps.iter().all(|st| st.active == vec![true]));
        assert_eq!(s.objective, 3.0 * 150.0);
        assert_eq!(s.availability, 1.0);
    }

    #[test]
    fn one_server_suffices_for_two_cells() {
        let inst = instance(1, 2, vec![vec![0, 1]], vec![0, 0], 1.5);
        let s = ideal_schedule(&inst).unwrap();
        assert_eq!(s.steps[0].active.iter().filter(|a| **a).count(), 1);
        assert_eq!(s.objective, 150.0 + 49.0);
    }

    #[test]
    fn zero_users_sleep_everywhere() {
        let inst = instance(2, 2, vec![vec![]; 2], vec![], 0.5);
        let s = ideal_schedule(&inst).unwrap();
        assert_eq!(s.objective, 2.0 * 4.0 * 49.0);
    }

    #[test]
    fn tight_limit_keeps_both_cells_awake() {
        let inst = instance(1, 2, vec![vec![0, 1]], vec![0, 0], 0.5);
        let s = ideal_schedule(&inst).unwrap();
        assert_eq!(s.steps[0].active, vec![true, true]);
    }

    #[test]
    fn oversized_instance_is_refused() {
        let inst = instance(1, 1, vec![vec![0; 7]], vec![0; 7], 0.5);
        assert!(matches!(ideal_schedule(&inst), Err(IdealError::TooLarge(_))));
    }

    #[test]
    fn random_instances_are_violation_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inst = random_tiny(&mut rng);
            let s = ideal_schedule(&inst).unwrap();
            assert_eq!(s.availability, 1.0);
        }
    }
}
