//! Gauss-Markov user mobility and handover detection.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::MobilityConfig;
use crate::scenario::{EcId, ServiceId, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityParams {
    pub alpha: f64,
    pub mean_speed: f64,
    pub speed_sigma: f64,
    pub direction_sigma: f64,
    pub step_dt: f64,
}

impl From<&MobilityConfig> for MobilityParams {
    fn from(c: &MobilityConfig) -> Self {
        MobilityParams {
            alpha: c.alpha,
            mean_speed: c.mean_speed,
            speed_sigma: c.speed_sigma,
            direction_sigma: c.direction_sigma,
            step_dt: c.step_dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: usize,
    pub position: (f64, f64),
    pub speed: f64,
    pub direction: f64,
    /// Heading the direction process reverts to. Mirrored on reflection.
    pub mean_direction: f64,
    pub service_id: ServiceId,
    pub associated_ec: EcId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Handover {
    pub user: usize,
    pub from: EcId,
    pub to: EcId,
}

/// One Gauss-Markov step followed by reflection at the arena border.
///
/// Two standard normals are always drawn so the stream position does not
/// depend on the parameters.
pub fn step_user<R: Rng + ?Sized>(
    user: &User,
    params: &MobilityParams,
    arena: (f64, f64),
    rng: &mut R,
) -> User {
    let a = params.alpha;
    let k = (1.0 - a * a).max(0.0).sqrt();
    let n1: f64 = StandardNormal.sample(rng);
    let n2: f64 = StandardNormal.sample(rng);
    let speed = (a * user.speed + (1.0 - a) * params.mean_speed + k * params.speed_sigma * n1).max(0.0);
    let direction =
        a * user.direction + (1.0 - a) * user.mean_direction + k * params.direction_sigma * n2;

    let mut next = user.clone();
    next.speed = speed;
    next.direction = direction;
    let (mut x, mut y) = user.position;
    x += speed * params.step_dt * direction.cos();
    y += speed * params.step_dt * direction.sin();
    let (w, h) = arena;
    if let Some(rx) = reflect(x, w) {
        x = rx;
        next.direction = PI - next.direction;
        next.mean_direction = PI - next.mean_direction;
    }
    if let Some(ry) = reflect(y, h) {
        y = ry;
        next.direction = -next.direction;
        next.mean_direction = -next.mean_direction;
    }
    next.position = (x, y);
    next
}

/// Folds `v` back into `[0, len]`; `None` when no reflection happened.
fn reflect(v: f64, len: f64) -> Option<f64> {
    if (0.0..=len).contains(&v) {
        return None;
    }
    let period = 2.0 * len;
    let m = v.rem_euclid(period);
    Some(if m > len { period - m } else { m })
}

/// Covering EC of the user's position.
pub fn locate(topology: &Topology, user: &User) -> EcId {
    topology.locate(user.position.0, user.position.1)
}

/// Precomputed mobility of all users. Mobility is independent of the
/// orchestration policy, so the whole run is generated up front; the oracle
/// forecaster reads the future from it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub step_dt: f64,
    pub services: Vec<ServiceId>,
    /// `positions[k][u]` at time `k * step_dt`.
    pub positions: Vec<Vec<(f64, f64)>>,
    /// `cells[k][u]`: covering EC at step `k`.
    pub cells: Vec<Vec<EcId>>,
}

impl Trajectory {
    /// Places `n_users` uniformly in the arena and steps them until `duration`.
    /// `init_rng` draws positions, headings and services; `step_rng` draws
    /// the per-step noise.
    #[allow(clippy::too_many_arguments)]
    pub fn generate<R1: Rng, R2: Rng>(
        topology: &Topology,
        cfg: &MobilityConfig,
        n_users: usize,
        duration: f64,
        init_rng: &mut R1,
        step_rng: &mut R2,
    ) -> Trajectory {
        let params = MobilityParams::from(cfg);
        let arena = topology.arena();
        let n_services = topology.num_services().max(1);
        let mut users: Vec<User> = (0..n_users)
            .map(|id| {
                let position = (init_rng.random::<f64>() * arena.0, init_rng.random::<f64>() * arena.1);
                let heading = init_rng.random::<f64>() * 2.0 * PI;
                let mean_direction = cfg.mean_direction.unwrap_or(heading);
                let service_id = init_rng.random_range(0..n_services);
                let mut u = User {
                    id,
                    position,
                    speed: params.mean_speed,
                    direction: heading,
                    mean_direction,
                    service_id,
                    associated_ec: 0,
                };
                u.associated_ec = locate(topology, &u);
                u
            })
            .collect();

        let steps = (duration / params.step_dt).ceil() as usize;
        let mut positions = Vec::with_capacity(steps + 1);
        let mut cells = Vec::with_capacity(steps + 1);
        positions.push(users.iter().map(|u| u.position).collect());
        cells.push(users.iter().map(|u| locate(topology, u)).collect());
        for _ in 0..steps {
            for u in users.iter_mut() {
                *u = step_user(u, &params, arena, step_rng);
            }
            positions.push(users.iter().map(|u| u.position).collect::<Vec<_>>());
            cells.push(users.iter().map(|u| locate(topology, u)).collect::<Vec<_>>());
        }
        Trajectory {
            step_dt: params.step_dt,
            services: users.iter().map(|u| u.service_id).collect(),
            positions,
            cells,
        }
    }

    pub fn num_users(&self) -> usize {
        self.services.len()
    }

    pub fn num_steps(&self) -> usize {
        self.cells.len()
    }

    /// Index of the last step at or before `t`.
    pub fn step_at(&self, t: f64) -> usize {
        let k = (t / self.step_dt + 1e-9).floor().max(0.0) as usize;
        k.min(self.cells.len() - 1)
    }

    pub fn cells_at(&self, t: f64) -> &[EcId] {
        &self.cells[self.step_at(t)]
    }

    /// Handovers between step `k - 1` and step `k`.
    pub fn handovers(&self, k: usize) -> Vec<Handover> {
        if k == 0 || k >= self.cells.len() {
            return Vec::new();
        }
        let (prev, cur) = (&self.cells[k - 1], &self.cells[k]);
        prev.iter()
            .zip(cur)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(user, (&from, &to))| Handover { user, from, to })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Resources;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn user(pos: (f64, f64), speed: f64, dir: f64) -> User {
        User {
            id: 0,
            position: pos,
            speed,
            direction: dir,
            mean_direction: 0.3,
            service_id: 0,
            associated_ec: 0,
        }
    }

    fn params(alpha: f64, sigma: f64) -> MobilityParams {
        MobilityParams {
            alpha,
            mean_speed: 1.4,
            speed_sigma: sigma,
            direction_sigma: sigma,
            step_dt: 1.0,
        }
    }

    #[test]
    fn full_memory_keeps_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = user((50.0, 50.0), 3.0, 1.0);
        let n = step_user(&u, &params(1.0, 0.0), (1000.0, 1000.0), &mut rng);
        assert_eq!((n.speed, n.direction), (3.0, 1.0));
        let d = ((n.position.0 - 50.0).powi(2) + (n.position.1 - 50.0).powi(2)).sqrt();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn memoryless_snaps_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = user((50.0, 50.0), 3.0, 1.0);
        let n = step_user(&u, &params(0.0, 0.0), (1000.0, 1000.0), &mut rng);
        assert_eq!((n.speed, n.direction), (1.4, 0.3));
    }

    #[test]
    fn reflection_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = user((99.0, 50.0), 5.0, 0.0);
        let n = step_user(&u, &params(1.0, 0.0), (100.0, 100.0), &mut rng);
        assert!((n.position.0 - 96.0).abs() < 1e-9);
        assert!((n.direction - PI).abs() < 1e-12);
    }

    #[test]
    fn long_run_mean_speed() {
        for alpha in [0.3, 0.7] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let p = params(alpha, 0.3);
            let mut u = user((500.0, 500.0), 1.4, 0.0);
            let n = 200_000;
            let mut sum = 0.0;
            for _ in 0..n {
                u = step_user(&u, &p, (1000.0, 1000.0), &mut rng);
                sum += u.speed;
            }
            let mean = sum / n as f64;
            assert!((mean / 1.4 - 1.0).abs() < 0.02, "alpha {alpha}: {mean}");
        }
    }

    fn topo() -> Topology {
        Topology::grid(5, 5, 200.0, 5, Resources::new(5, 6), 1.0, 0.0, 0.0, vec![])
    }

    #[test]
    fn trajectory_replays_with_same_seed() {
        let t = topo();
        let cfg = MobilityConfig::default();
        let gen = |s| {
            Trajectory::generate(
                &t,
                &cfg,
                20,
                300.0,
                &mut ChaCha8Rng::seed_from_u64(s),
                &mut ChaCha8Rng::seed_from_u64(s + 100),
            )
        };
        assert_eq!(gen(3).positions, gen(3).positions);
        assert_ne!(gen(3).positions, gen(4).positions);
    }

    #[test]
    fn stationary_users_never_hand_over() {
        let t = topo();
        let cfg = MobilityConfig {
            alpha: 1.0,
            mean_speed: 0.0,
            speed_sigma: 0.0,
            direction_sigma: 0.0,
            ..MobilityConfig::default()
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let tr = Trajectory::generate(&t, &cfg, 10, 100.0, &mut r1, &mut r2);
        tr.positions.iter().for_each(|p| assert_eq!(p, &tr.positions[0]));
        assert!((1..tr.cells.len()).all(|k| tr.handovers(k).is_empty()));
    }

    #[test]
    fn crossing_a_border_gives_one_handover() {
        let t = topo();
        let p = params(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut u = user((150.0, 100.0), 20.0, 0.0);
        let mut events = 0;
        let mut prev = locate(&t, &u);
        for _ in 0..4 {
            u = step_user(&u, &p, t.arena(), &mut rng);
            let cur = locate(&t, &u);
            if cur != prev {
                events += 1;
                assert_eq!((prev, cur), (0, 1));
            }
            prev = cur;
        }
        assert_eq!(events, 1);
    }
}
