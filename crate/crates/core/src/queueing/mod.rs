//! Multi-core preemptive-resume priority queue of one EC.
//!
//! Two classes share `c` cores. Within a class service is FIFO. A high-class
//! arrival that finds every core busy evicts the most recently started
//! low-class job, which goes back to the head of its queue with the time it
//! still needs.

pub mod station;

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

pub use station::{simulate_station, ClassStats, StationParams, StationStats};

use crate::config::ServiceTimeLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    High,
    Low,
}

impl Class {
    fn idx(self) -> usize {
        match self {
            Class::High => 0,
            Class::Low => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job<T> {
    pub id: u64,
    pub class: Class,
    pub arrival: f64,
    pub demand: f64,
    pub remaining: f64,
    /// Core time received so far.
    pub served: f64,
    pub payload: T,
}

impl<T> Job<T> {
    pub fn new(id: u64, class: Class, arrival: f64, demand: f64, payload: T) -> Self {
        Job {
            id,
            class,
            arrival,
            demand,
            remaining: demand,
            served: 0.0,
            payload,
        }
    }
}

#[derive(Debug, Clone)]
struct Running<T> {
    job: Job<T>,
    core: usize,
    started: f64,
    token: u64,
}

/// A job put on a core. Its completion is due at `finish_at` unless the
/// token is invalidated by a preemption first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Started {
    pub job_id: u64,
    pub core: usize,
    pub token: u64,
    pub finish_at: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Effects {
    pub started: Vec<Started>,
    pub preempted: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct QueueCounts {
    pub h_wait: usize,
    pub l_wait: usize,
    pub h_run: usize,
    pub l_run: usize,
}

#[derive(Debug, Clone)]
pub struct EcQueue<T> {
    cores: usize,
    waiting: [VecDeque<Job<T>>; 2],
    running: Vec<Running<T>>,
    free: Vec<bool>,
    next_token: u64,
}

impl<T> EcQueue<T> {
    pub fn new(cores: usize) -> Self {
        assert!(cores >= 1);
        EcQueue {
            cores,
            waiting: [VecDeque::new(), VecDeque::new()],
            running: Vec::with_capacity(cores),
            free: vec![true; cores],
            next_token: 0,
        }
    }

    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn busy_cores(&self) -> usize {
        self.running.len()
    }

    pub fn counts(&self) -> QueueCounts {
        let run = |c: Class| self.running.iter().filter(|r| r.job.class == c).count();
        QueueCounts {
            h_wait: self.waiting[0].len(),
            l_wait: self.waiting[1].len(),
            h_run: run(Class::High),
            l_run: run(Class::Low),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.running.is_empty() && self.waiting.iter().all(VecDeque::is_empty)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job<T>> {
        self.running
            .iter()
            .map(|r| &r.job)
            .chain(self.waiting.iter().flatten())
    }

    fn start(&mut self, mut job: Job<T>, now: f64, fx: &mut Effects) {
        let core = self.free.iter().position(|f| *f).expect("a free core");
        self.free[core] = false;
        let token = self.next_token;
        self.next_token += 1;
        if job.remaining < 0.0 {
            job.remaining = 0.0;
        }
        fx.started.push(Started {
            job_id: job.id,
            core,
            token,
            finish_at: now + job.remaining,
        });
        self.running.push(Running {
            job,
            core,
            started: now,
            token,
        });
    }

    fn stop_running(&mut self, idx: usize, now: f64) -> Job<T> {
        let r = self.running.swap_remove(idx);
        self.free[r.core] = true;
        let mut job = r.job;
        let ran = now - r.started;
        job.served += ran;
        job.remaining = (job.remaining - ran).max(0.0);
        job
    }

    fn fill(&mut self, now: f64, fx: &mut Effects) {
        while self.running.len() < self.cores {
            let next = self.waiting[0]
                .pop_front()
                .or_else(|| self.waiting[1].pop_front());
            match next {
                Some(job) => self.start(job, now, fx),
                None => break,
            }
        }
    }

    pub fn enqueue(&mut self, job: Job<T>, now: f64) -> Effects {
        let mut fx = Effects::default();
        if self.running.len() < self.cores {
            self.start(job, now, &mut fx);
            return fx;
        }
        if job.class == Class::High {
            let victim = self
                .running
                .iter()
                .enumerate()
                .filter(|(_, r)| r.job.class == Class::Low)
                .max_by(|(_, a), (_, b)| a.started.total_cmp(&b.started).then(a.token.cmp(&b.token)))
                .map(|(i, _)| i);
            if let Some(i) = victim {
                let evicted = self.stop_running(i, now);
                fx.preempted.push(evicted.id);
                self.waiting[1].push_front(evicted);
                self.start(job, now, &mut fx);
                return fx;
            }
        }
        self.waiting[job.class.idx()].push_back(job);
        fx
    }

    /// Finishes a running job. Returns `None` for a stale token, i.e. a
    /// completion scheduled before the job was preempted or removed.
    pub fn complete(&mut self, job_id: u64, token: u64, now: f64) -> Option<(Job<T>, Effects)> {
        let idx = self
            .running
            .iter()
            .position(|r| r.job.id == job_id && r.token == token)?;
        let job = self.stop_running(idx, now);
        let mut fx = Effects::default();
        self.fill(now, &mut fx);
        Some((job, fx))
    }

    /// Removes every job matching `pred`, running or waiting.
    pub fn remove_where<F: FnMut(&Job<T>) -> bool>(
        &mut self,
        mut pred: F,
        now: f64,
    ) -> (Vec<Job<T>>, Effects) {
        let mut removed = Vec::new();
        let mut i = 0;
        while i < self.running.len() {
            if pred(&self.running[i].job) {
                removed.push(self.stop_running(i, now));
            } else {
                i += 1;
            }
        }
        for q in &mut self.waiting {
            let mut keep = VecDeque::with_capacity(q.len());
            for job in q.drain(..) {
                if pred(&job) {
                    removed.push(job);
                } else {
                    keep.push_back(job);
                }
            }
            *q = keep;
        }
        let mut fx = Effects::default();
        self.fill(now, &mut fx);
        (removed, fx)
    }

    /// Structural invariants; returns a description of the first breach.
    pub fn check(&self) -> Result<(), String> {
        let c = self.counts();
        if c.h_run + c.l_run > self.cores {
            return Err(format!("{} jobs on {} cores", c.h_run + c.l_run, self.cores));
        }
        if self.running.len() < self.cores && c.h_wait + c.l_wait > 0 {
            return Err("idle core with waiting jobs".into());
        }
        if c.l_run > 0 && c.h_wait > 0 {
            return Err("low job running while high job waits".into());
        }
        if self.free.iter().filter(|f| !**f).count() != self.running.len() {
            return Err("core map out of sync".into());
        }
        Ok(())
    }
}

/// One user request service time.
pub fn sample_user_service_time<R: Rng + ?Sized>(rng: &mut R, mu_s: f64, law: ServiceTimeLaw) -> f64 {
    match law {
        ServiceTimeLaw::Exponential => Exp::new(mu_s).expect("mu_s > 0").sample(rng),
        ServiceTimeLaw::Deterministic => 1.0 / mu_s,
    }
}
