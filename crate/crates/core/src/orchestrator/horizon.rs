//! Coverage over a forecast window and the choice of sleep depth.

use crate::config::SleepLevel;
use crate::forecast::{LoadMatrix, OriginLoad};
use crate::power::{EcState, PowerTable};
use crate::scenario::EcId;

use super::coverage::{coverage, CoverageResult};
use super::load::{Capacity, Reach};

#[derive(Debug, Clone)]
pub struct HorizonPlan {
    pub step_dt: f64,
    /// Per-frame coverage. Frame 0 is the current load when one was given.
    pub frames: Vec<CoverageResult>,
    /// Time offset of each frame from now.
    pub offsets: Vec<f64>,
    pub keep: Vec<bool>,
    /// Seconds until each EC is first needed, infinite if never.
    pub need_time: Vec<f64>,
    /// `[e][s]`: seconds until `e` first serves `s`.
    pub service_need: Vec<Vec<f64>>,
}

impl HorizonPlan {
    pub fn keep_set(&self) -> Vec<EcId> {
        (0..self.keep.len()).filter(|&e| self.keep[e]).collect()
    }

    /// Serving EC per `q * S + s` in the frame closest to `offset`.
    pub fn assignment_at(&self, offset: f64) -> Vec<Option<EcId>> {
        let i = self
            .offsets
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - offset).abs().total_cmp(&(b.1 - offset).abs()))
            .map_or(0, |(i, _)| i);
        self.frames[i].placement.assignment()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HorizonInputs<'a> {
    pub rs: &'a Reach,
    pub cap: &'a Capacity,
    /// Ready ECs; frames after the first use the previous frame's cover.
    pub active: &'a [bool],
    pub offload: bool,
    /// ECs with users attached right now.
    pub in_use: &'a [bool],
}

/// Runs coverage on the current placement (if any) and on every forecast
/// frame, seeding each frame with the previous frame's assignment.
pub fn aggregate_horizon(
    current: Option<LoadMatrix>,
    forecast: &[OriginLoad],
    step_dt: f64,
    inp: HorizonInputs,
) -> HorizonPlan {
    let e = inp.rs.len();
    let s = inp.cap.demand.len();
    let mut frames = Vec::new();
    let mut offsets = Vec::new();
    if let Some(m) = current {
        frames.push(coverage(m, inp.rs, inp.cap, inp.active, inp.offload));
        offsets.push(0.0);
    }
    for (k, origins) in forecast.iter().enumerate() {
        let (hint, active) = match frames.last() {
            Some(prev) => {
                let set: Vec<bool> = (0..e).map(|n| prev.contains(n)).collect();
                (prev.placement.assignment(), set)
            }
            None => (vec![None; e * s], inp.active.to_vec()),
        };
        let mut m = LoadMatrix::zeros(e, s);
        for q in 0..e {
            for sv in 0..s {
                let v = origins.get(q, sv);
                if v > 0.0 {
                    m.add(hint[q * s + sv].unwrap_or(q), q, sv, v);
                }
            }
        }
        frames.push(coverage(m, inp.rs, inp.cap, &active, inp.offload));
        offsets.push((k + 1) as f64 * step_dt);
    }

    let mut need_time = vec![f64::INFINITY; e];
    let mut service_need = vec![vec![f64::INFINITY; s]; e];
    for (f, &t) in frames.iter().zip(&offsets) {
        for &n in &f.set {
            need_time[n] = need_time[n].min(t);
            for sv in 0..s {
                if f.placement.hosts(n, sv) {
                    service_need[n][sv] = service_need[n][sv].min(t);
                }
            }
        }
    }
    for n in 0..e {
        if inp.in_use[n] {
            need_time[n] = 0.0;
        }
    }
    let keep = need_time.iter().map(|t| t.is_finite()).collect();
    HorizonPlan {
        step_dt,
        frames,
        offsets,
        keep,
        need_time,
        service_need,
    }
}

/// Deepest allowed level whose wake-up plus `wake_margin` fits before
/// `need`. Stays active if none fits; never-needed ECs go deepest.
pub fn select_sleep_depth(need: f64, table: &PowerTable, wake_margin: f64, levels: &[SleepLevel]) -> EcState {
    let usable = levels.iter().copied().filter(|l| table.level(*l).is_some());
    if need.is_infinite() {
        return usable.max().map_or(EcState::Active, EcState::Sleep);
    }
    usable
        .filter(|l| table.spec(*l).up_delay + wake_margin <= need)
        .max()
        .map_or(EcState::Active, EcState::Sleep)
}

/// Like [`select_sleep_depth`] but the EC must also finish going down
/// before it starts waking.
pub fn sleep_round_trip(need: f64, table: &PowerTable, guard: f64, levels: &[SleepLevel]) -> Option<SleepLevel> {
    let usable = levels.iter().copied().filter(|l| table.level(*l).is_some());
    if need.is_infinite() {
        return usable.max();
    }
    usable
        .filter(|l| {
            let sp = table.spec(*l);
            sp.down_delay + sp.up_delay + guard <= need
        })
        .max()
}
