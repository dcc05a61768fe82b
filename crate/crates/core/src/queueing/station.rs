//! Standalone single-EC simulation of the priority queue under Poisson load.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{sample_user_service_time, Class, EcQueue, Job};
use crate::config::ServiceTimeLaw;
use crate::events::EventQueue;

#[derive(Debug, Clone)]
pub struct StationParams {
    pub cores: usize,
    /// Poisson arrival rate and service law of each class; a zero rate
    /// disables the class.
    pub low_rate: f64,
    pub low_mu: f64,
    pub low_law: ServiceTimeLaw,
    pub high_rate: f64,
    pub high_mu: f64,
    pub high_law: ServiceTimeLaw,
    /// Arrivals to simulate after warm-up, counted on the low class (or the
    /// high class when the low one is disabled).
    pub requests: usize,
    /// Requests of either class discarded at the start.
    pub warmup: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassStats {
    pub count: usize,
    /// Time not spent on a core: queueing plus preempted intervals.
    pub mean_wait: f64,
    pub mean_sojourn: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StationStats {
    pub low: ClassStats,
    pub high: ClassStats,
    pub preemptions: usize,
}

enum Ev {
    Arrival(Class),
    Done(u64, u64),
}

pub fn simulate_station(p: &StationParams) -> StationStats {
    let mut arrivals_rng = ChaCha8Rng::seed_from_u64(p.seed);
    arrivals_rng.set_stream(1);
    let mut service_rng = ChaCha8Rng::seed_from_u64(p.seed);
    service_rng.set_stream(2);

    let mut queue: EcQueue<()> = EcQueue::new(p.cores);
    let mut events = EventQueue::new();
    let gap = |rate: f64, rng: &mut ChaCha8Rng| Exp::new(rate).unwrap().sample(rng);
    if p.low_rate > 0.0 {
        events.schedule(gap(p.low_rate, &mut arrivals_rng), Ev::Arrival(Class::Low));
    }
    if p.high_rate > 0.0 {
        events.schedule(gap(p.high_rate, &mut arrivals_rng), Ev::Arrival(Class::High));
    }

    let mut next_id = 0u64;
    let mut sums = [(0usize, 0.0f64, 0.0f64); 2];
    let mut preemptions = 0;
    let counted = if p.low_rate > 0.0 { Class::Low } else { Class::High };
    let mut arrived = 0usize;

    while let Some((now, ev)) = events.pop() {
        let fx = match ev {
            Ev::Arrival(class) => {
                let (rate, mu, law) = match class {
                    Class::Low => (p.low_rate, p.low_mu, p.low_law),
                    Class::High => (p.high_rate, p.high_mu, p.high_law),
                };
                if class == counted {
                    arrived += 1;
                }
                if arrived < p.warmup + p.requests {
                    events.schedule(now + gap(rate, &mut arrivals_rng), Ev::Arrival(class));
                }
                let demand = sample_user_service_time(&mut service_rng, mu, law);
                let id = next_id;
                next_id += 1;
                queue.enqueue(Job::new(id, class, now, demand, ()), now)
            }
            Ev::Done(id, token) => match queue.complete(id, token, now) {
                Some((job, fx)) => {
                    if job.id as usize >= p.warmup {
                        let s = &mut sums[job.class.idx()];
                        let sojourn = now - job.arrival;
                        s.0 += 1;
                        s.1 += sojourn - job.demand;
                        s.2 += sojourn;
                    }
                    fx
                }
                None => continue,
            },
        };
        preemptions += fx.preempted.len();
        for s in fx.started {
            events.schedule(s.finish_at, Ev::Done(s.job_id, s.token));
        }
    }

    let stats = |(n, w, s): (usize, f64, f64)| ClassStats {
        count: n,
        mean_wait: if n > 0 { w / n as f64 } else { 0.0 },
        mean_sojourn: if n > 0 { s / n as f64 } else { 0.0 },
    };
    StationStats {
        high: stats(sums[0]),
        low: stats(sums[1]),
        preemptions,
    }
}
