//! Writes the time-indexed binary program as a CPLEX LP file.
//!
//! Products of binaries are linearised as `x >= a + b - 1`. The latency
//! constraint uses big-M with `M` the largest origin-to-server latency, in
//! whole microseconds. The objective sums over steps rather than averaging.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, ScenarioConfig};
use crate::lifecycle::{transition_time, ServiceState};
use crate::mobility::Trajectory;
use crate::power::PowerTable;
use crate::scenario::build_topology;

use super::ideal::{TinyInstance, RATE_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpMode {
    /// Transitions are instantaneous: the lock rows are left out.
    Ideal,
    /// Transitions hold their lock for their duration in steps. Everything
    /// starts Active with services Stopped.
    Timed,
}

const PSI: [ServiceState; 3] = [ServiceState::Stopped, ServiceState::Paused, ServiceState::Running];

fn psi_name(p: ServiceState) -> &'static str {
    match p {
        ServiceState::Stopped => "stop",
        ServiceState::Paused => "pause",
        ServiceState::Running => "run",
    }
}

/// Collects rows and wraps long expressions.
struct Writer {
    out: String,
    rows: usize,
}

impl Writer {
    fn expr(&mut self, terms: &[(f64, String)]) {
        let mut line_len = 0;
        for (i, (coef, var)) in terms.iter().enumerate() {
            let sign = if *coef < 0.0 { "-" } else { "+" };
            let mag = coef.abs();
            let term = if mag == 1.0 {
                format!(" {sign} {var}")
            } else {
                format!(" {sign} {mag} {var}")
            };
            let term = if i == 0 && *coef >= 0.0 { term[3..].to_string() } else { term };
            if line_len + term.len() > 200 {
                self.out.push_str("\n   ");
                line_len = 0;
            }
            line_len += term.len();
            self.out.push_str(&term);
        }
    }

    fn row(&mut self, terms: &[(f64, String)], op: &str, rhs: f64) {
        self.rows += 1;
        let _ = write!(self.out, " r{}: ", self.rows);
        self.expr(terms);
        let _ = writeln!(self.out, " {op} {rhs}");
    }
}

/// Counts rows of a model, for tests on its structure.
pub fn count_rows(model: &str) -> usize {
    model
        .lines()
        .filter(|l| l.trim_start().starts_with('r') && l.contains(':'))
        .count()
}

pub fn export_lp(inst: &TinyInstance, mode: LpMode) -> String {
    let (e_n, s_n, u_n, t_n) = (inst.ecs, inst.services, inst.num_users(), inst.num_steps());
    let sleep: Vec<String> = inst.levels.iter().map(|(l, _)| l.as_str().to_string()).collect();
    let phis: Vec<String> = std::iter::once("act".to_string()).chain(sleep.iter().cloned()).collect();
    let phi_power: Vec<f64> = std::iter::once(inst.p_idle).chain(inst.levels.iter().map(|(_, s)| s.power)).collect();

    let c = |u: usize, e: usize, t: usize| format!("c_u{u}_e{e}_t{t}");
    let z = |e: usize, s: usize, p: ServiceState, t: usize| format!("z_e{e}_s{s}_{}_t{t}", psi_name(p));
    let l = |e: usize, s: usize, p: ServiceState, t: usize| format!("l_e{e}_s{s}_{}_t{t}", psi_name(p));
    let st = |e: usize, p: &str, t: usize| format!("st_e{e}_{p}_t{t}");
    let q = |e: usize, p: &str, t: usize| format!("q_e{e}_{p}_t{t}");
    let v = |u: usize, t: usize| format!("v_u{u}_t{t}");

    let mut w = Writer {
        out: String::new(),
        rows: 0,
    };
    let _ = writeln!(
        w.out,
        "\\ {e_n} ECs, {s_n} services, {u_n} users, {t_n} steps of {} s, {}",
        inst.dt,
        if mode == LpMode::Ideal { "instantaneous transitions" } else { "timed transitions" }
    );
    w.out.push_str("Minimize\n obj: ");
    let mut obj = Vec::new();
    for t in 0..t_n {
        for e in 0..e_n {
            for (i, p) in phis.iter().enumerate() {
                obj.push((inst.w_power * phi_power[i] * inst.dt, st(e, p, t)));
            }
        }
        for u in 0..u_n {
            obj.push((inst.w_violation * inst.rates[u] * inst.dt, v(u, t)));
        }
    }
    if obj.is_empty() {
        w.out.push_str("0 dummy");
    } else {
        w.expr(&obj);
    }
    w.out.push_str("\nSubject To\n");

    let m_big = inst.latency_us.iter().flatten().copied().max().unwrap_or(0) as f64;
    let steps_of = |d: f64| (d / inst.dt).ceil() as usize;

    for t in 0..t_n {
        for u in 0..u_n {
            let su = inst.user_service[u];
            // Exactly one association.
            w.row(&(0..e_n).map(|e| (1.0, c(u, e, t))).collect::<Vec<_>>(), "=", 1.0);
            for e in 0..e_n {
                // Served only where the service runs on an active EC.
                w.row(&[(1.0, c(u, e, t)), (-1.0, z(e, su, ServiceState::Running, t))], "<=", 0.0);
                w.row(&[(1.0, c(u, e, t)), (-1.0, st(e, "act", t))], "<=", 0.0);
                // Transition in progress voids the request.
                w.row(&[(1.0, c(u, e, t)), (1.0, l(e, su, ServiceState::Running, t)), (-1.0, v(u, t))], "<=", 1.0);
                w.row(&[(1.0, c(u, e, t)), (1.0, q(e, "act", t)), (-1.0, v(u, t))], "<=", 1.0);
            }
            // Latency limit.
            let q_cell = inst.cells[t][u];
            let mut terms: Vec<(f64, String)> =
                (0..e_n).map(|e| (inst.latency_us[q_cell][e] as f64, c(u, e, t))).collect();
            terms.push((-m_big, v(u, t)));
            w.row(&terms, "<=", inst.t_max_us as f64);
        }
        for e in 0..e_n {
            for s in 0..s_n {
                w.row(&PSI.iter().map(|&p| (1.0, z(e, s, p, t))).collect::<Vec<_>>(), "=", 1.0);
                for p in PSI {
                    w.row(&[(1.0, z(e, s, p, t)), (-1.0, l(e, s, p, t))], ">=", 0.0);
                }
            }
            w.row(&phis.iter().map(|p| (1.0, st(e, p, t))).collect::<Vec<_>>(), "=", 1.0);
            for p in &phis {
                w.row(&[(1.0, st(e, p, t)), (-1.0, q(e, p, t))], ">=", 0.0);
            }
            // Resources: CPU for running, memory for running or paused.
            let cpu: Vec<_> = (0..s_n)
                .map(|s| (inst.demand[s].cpu as f64, z(e, s, ServiceState::Running, t)))
                .filter(|(k, _)| *k != 0.0)
                .collect();
            if !cpu.is_empty() {
                w.row(&cpu, "<=", inst.capacity.cpu as f64);
            }
            let mem: Vec<_> = (0..s_n)
                .flat_map(|s| {
                    [ServiceState::Running, ServiceState::Paused]
                        .map(|p| (inst.demand[s].mem as f64, z(e, s, p, t)))
                })
                .filter(|(k, _)| *k != 0.0)
                .collect();
            if !mem.is_empty() {
                w.row(&mem, "<=", inst.capacity.mem as f64);
            }
            // Utilisation strictly below one.
            if u_n > 0 {
                let load: Vec<_> = (0..u_n).map(|u| (inst.rates[u], c(u, e, t))).collect();
                w.row(&load, "<=", inst.service_rate - RATE_SLACK);
            }
            // A sleeping EC freezes its services.
            let has_prev = t > 0 || mode == LpMode::Timed;
            if has_prev {
                for s in 0..s_n {
                    for p in PSI {
                        let mut up = vec![(1.0, z(e, s, p, t))];
                        let mut down = vec![(-1.0, z(e, s, p, t))];
                        let mut rhs_up = 1.0;
                        let mut rhs_down = 1.0;
                        if t > 0 {
                            up.push((-1.0, z(e, s, p, t - 1)));
                            down.push((1.0, z(e, s, p, t - 1)));
                        } else if p == ServiceState::Stopped {
                            rhs_up += 1.0;
                            rhs_down -= 1.0;
                        }
                        for ph in &sleep {
                            up.push((1.0, st(e, ph, t)));
                            down.push((1.0, st(e, ph, t)));
                        }
                        w.row(&up, "<=", rhs_up);
                        w.row(&down, "<=", rhs_down);
                    }
                }
            }
            if mode == LpMode::Timed {
                // Service locks.
                for s in 0..s_n {
                    for from in PSI {
                        for to in PSI {
                            if from == to {
                                continue;
                            }
                            let d = steps_of(transition_time(from, to, &inst.lifecycle));
                            for delta in 0..d.max(1) {
                                if t + delta >= t_n {
                                    break;
                                }
                                let mut terms = vec![(1.0, l(e, s, to, t + delta)), (-1.0, z(e, s, to, t))];
                                let rhs = if t > 0 {
                                    terms.push((-1.0, z(e, s, from, t - 1)));
                                    -1.0
                                } else if from == ServiceState::Stopped {
                                    0.0
                                } else {
                                    continue;
                                };
                                w.row(&terms, ">=", rhs);
                            }
                        }
                    }
                }
                // EC locks, only between Active and a sleep state.
                for (i, (_, spec)) in inst.levels.iter().enumerate() {
                    let ph = &sleep[i];
                    for (from, to, delay) in [("act", ph.as_str(), spec.down_delay), (ph.as_str(), "act", spec.up_delay)] {
                        for delta in 0..steps_of(delay).max(1) {
                            if t + delta >= t_n {
                                break;
                            }
                            let mut terms = vec![(1.0, q(e, to, t + delta)), (-1.0, st(e, to, t))];
                            let rhs = if t > 0 {
                                terms.push((-1.0, st(e, from, t - 1)));
                                -1.0
                            } else if from == "act" {
                                0.0
                            } else {
                                continue;
                            };
                            w.row(&terms, ">=", rhs);
                        }
                    }
                }
            }
        }
    }

    w.out.push_str("Binary\n");
    let mut names = Vec::new();
    for t in 0..t_n {
        for u in 0..u_n {
            names.extend((0..e_n).map(|e| c(u, e, t)));
            names.push(v(u, t));
        }
        for e in 0..e_n {
            for s in 0..s_n {
                for p in PSI {
                    names.push(z(e, s, p, t));
                    names.push(l(e, s, p, t));
                }
            }
            for p in &phis {
                names.push(st(e, p, t));
                names.push(q(e, p, t));
            }
        }
    }
    for chunk in names.chunks(8) {
        let _ = writeln!(w.out, " {}", chunk.join(" "));
    }
    w.out.push_str("End\n");
    w.out
}

/// Discretises a scenario into `steps` steps of `tick_dt`, using the
/// scenario's own mobility trace.
pub fn from_scenario(cfg: &ScenarioConfig, steps: usize) -> Result<TinyInstance, ConfigError> {
    if steps == 0 {
        return Err(ConfigError::invalid("steps", "must be >= 1"));
    }
    cfg.validate()?;
    let topo = build_topology(cfg)?;
    let duration = steps as f64 * cfg.tick_dt;
    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    init.set_stream(0);
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise.set_stream(1);
    let traj = Trajectory::generate(&topo, &cfg.mobility, cfg.users.count, duration, &mut init, &mut noise);
    let cells = (0..steps).map(|k| traj.cells_at(k as f64 * cfg.tick_dt).to_vec()).collect();
    let power = PowerTable::from_config(&cfg.power)?;
    Ok(TinyInstance::new(
        &topo,
        cfg.t_max,
        cfg.service_time_budget(),
        cfg.ec.service_rate,
        cells,
        traj.services.clone(),
        vec![cfg.services.request_rate; cfg.users.count],
        &power,
        (&cfg.lifecycle).into(),
        (cfg.objective.w_power, cfg.objective.w_violation),
        cfg.tick_dt,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(steps: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::reference();
        cfg.grid.rows = 1;
        cfg.grid.cols = 1;
        cfg.users.count = 1;
        cfg.services.count = 1;
        cfg.sim_duration = steps as f64 * cfg.tick_dt;
        cfg
    }

    #[test]
    fn one_ec_one_user_has_association_row() {
        let inst = from_scenario(&tiny(1), 1).unwrap();
        let m = export_lp(&inst, LpMode::Ideal);
        assert!(m.contains(": c_u0_e0_t0 = 1\n"), "{m}");
        assert!(m.starts_with("\\"));
        assert!(m.trim_end().ends_with("End"));
    }

    #[test]
    fn zero_steps_is_an_error() {
        assert!(from_scenario(&tiny(1), 0).is_err());
    }

    #[test]
    fn rows_grow_linearly_in_steps() {
        let cfg = tiny(8);
        let rows: Vec<usize> = [2, 4, 6]
            .iter()
            .map(|&t| count_rows(&export_lp(&from_scenario(&cfg, t).unwrap(), LpMode::Ideal)))
            .collect();
        assert_eq!(rows[2] - rows[1], rows[1] - rows[0]);
    }

    #[test]
    fn output_is_stable() {
        let cfg = tiny(3);
        let a = export_lp(&from_scenario(&cfg, 3).unwrap(), LpMode::Timed);
        let b = export_lp(&from_scenario(&cfg, 3).unwrap(), LpMode::Timed);
        assert_eq!(a, b);
    }
}
