//! Coordinate-wise hill climbing of pass parameters.
//!
//! Each parameter is a positive scale factor. A sweep tries `p * (1 + step)`
//! and `p * (1 - step)` for every parameter in turn and keeps the first
//! trial that improves the objective; a sweep without improvement halves the
//! step. Only improving moves are accepted, so the objective never drops.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, HitId, ParticleId, NOISE};
use crate::geometry::Detector;

use super::{run_with, PassConfig, RunOptions, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneOptions {
    pub initial_step: f64,
    /// Upper bound on parameter trials (one trial = one parameter probed).
    pub max_iters: usize,
    /// Stop once the relative step falls below this.
    pub min_step: f64,
    /// Names from [`PARAMETERS`] to tune; empty tunes all of them.
    pub parameters: Vec<String>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            initial_step: 0.5,
            max_iters: 50,
            min_step: 1e-3,
            parameters: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after each accepted move, starting with the initial value.
    pub history: Vec<f64>,
}

/// Maximizes `objective` starting from `initial`.
pub fn hill_climb(initial: &[f64], mut objective: impl FnMut(&[f64]) -> f64, opts: &TuneOptions) -> TuneResult {
    let mut params = initial.to_vec();
    let mut best = objective(&params);
    let mut history = vec![best];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    // last successful direction per parameter, tried first next time
    let mut sign = vec![1.0; params.len()];
    while iterations < opts.max_iters && step >= opts.min_step && !params.is_empty() {
        let mut improved = false;
        for i in 0..params.len() {
            if iterations >= opts.max_iters {
                break;
            }
            iterations += 1;
            for s in [sign[i], -sign[i]] {
                let mut trial = params.clone();
                trial[i] *= 1.0 + s * step;
                let v = objective(&trial);
                if v > best {
                    params = trial;
                    best = v;
                    sign[i] = s;
                    history.push(v);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    TuneResult {
        params,
        value: best,
        iterations,
        history,
    }
}

/// Weights of the tuning criterion `w_n * matched - w_p * wrong`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionWeights {
    pub matched: f64,
    pub wrong: f64,
}

impl Default for CriterionWeights {
    fn default() -> Self {
        CriterionWeights {
            matched: 1.0,
            wrong: 0.2,
        }
    }
}

/// Names of the tuned quantities, in parameter order.
pub const PARAMETERS: [&str; 7] = [
    "window_l2.dphi",
    "window_l2.dt",
    "window_l3.dphi",
    "window_l3.dt",
    "prolongation scale",
    "pickup scale",
    "z_residual_cut",
];

/// `pass` with its parameters multiplied by `scale` (see [`PARAMETERS`]).
pub fn scaled_pass(pass: &PassConfig, scale: &[f64]) -> PassConfig {
    let mut p = pass.clone();
    p.window_l2 = p.window_l2.scaled(scale[0], scale[1]);
    p.window_l3 = p.window_l3.scaled(scale[2], scale[3]);
    for w in &mut p.prolong_windows {
        w.dphi = (w.dphi * scale[4]).min(std::f64::consts::TAU);
        w.dt *= scale[4];
    }
    p.default_prolong_mm *= scale[4];
    p.pickup_window = p.pickup_window.scaled(scale[5], scale[5]);
    p.z_residual_cut *= scale[6];
    p
}

/// Track-level counts of one pass over one event.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PassScore {
    pub matched: usize,
    pub wrong_hits: usize,
}

/// A track is matched when one particle holds more than half of its hits and
/// the track holds more than half of that particle's hits. Every hit not
/// belonging to a track's majority particle is wrong.
pub fn score_tracks(event: &Event, tracks: &[Vec<HitId>]) -> PassScore {
    let truth: HashMap<HitId, ParticleId> = event.truth.iter().map(|t| (t.hit_id, t.particle_id)).collect();
    let mut per_particle: HashMap<ParticleId, usize> = HashMap::new();
    for t in &event.truth {
        *per_particle.entry(t.particle_id).or_default() += 1;
    }
    let mut s = PassScore::default();
    for hits in tracks {
        let mut count: HashMap<ParticleId, usize> = HashMap::new();
        for h in hits {
            let pid = truth.get(h).copied().unwrap_or(NOISE);
            if pid != NOISE {
                *count.entry(pid).or_default() += 1;
            }
        }
        // majority particle; ties go to the smaller id
        let Some((&pid, &n)) = count.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            s.wrong_hits += hits.len();
            continue;
        };
        s.wrong_hits += hits.len() - n;
        if 2 * n > hits.len() && 2 * n > per_particle[&pid] {
            s.matched += 1;
        }
    }
    s
}

fn criterion(events: &[Event], detector: &Detector, pass: &PassConfig, w: &CriterionWeights) -> f64 {
    let schedule = Schedule {
        passes: vec![pass.clone()],
    };
    let opts = RunOptions { workers: 1 };
    events
        .iter()
        .map(|e| {
            let out = run_with(e, detector, &schedule, &opts);
            let tracks: Vec<Vec<HitId>> = out.tracks.into_iter().map(|t| t.hit_ids).collect();
            let s = score_tracks(e, &tracks);
            w.matched * s.matched as f64 - w.wrong * s.wrong_hits as f64
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassTuning {
    pub pass: PassConfig,
    pub result: TuneResult,
}

/// Tunes one pass on training events with truth.
pub fn tune_pass(
    pass: &PassConfig,
    events: &[Event],
    detector: &Detector,
    weights: &CriterionWeights,
    opts: &TuneOptions,
) -> Result<PassTuning> {
    if events.is_empty() {
        return Err(Error::validation("tuning needs at least one training event"));
    }
    if let Some(e) = events.iter().find(|e| !e.has_truth() && !e.hits.is_empty()) {
        return Err(Error::validation(format!("training event {} has no truth", e.event_id)));
    }
    pass.validate_for(detector)?;
    tune_pass_with(pass, |p| criterion(events, detector, p, weights), opts)
}

/// Tunes one pass against an arbitrary objective of the scaled pass.
pub fn tune_pass_with(
    pass: &PassConfig,
    mut objective: impl FnMut(&PassConfig) -> f64,
    opts: &TuneOptions,
) -> Result<PassTuning> {
    let active: Vec<usize> = if opts.parameters.is_empty() {
        (0..PARAMETERS.len()).collect()
    } else {
        opts.parameters
            .iter()
            .map(|name| {
                PARAMETERS
                    .iter()
                    .position(|p| p == name)
                    .ok_or_else(|| Error::validation(format!("unknown tuning parameter {name:?}")))
            })
            .collect::<Result<_>>()?
    };
    let expand = |sub: &[f64]| {
        let mut full = [1.0; PARAMETERS.len()];
        for (&i, &v) in active.iter().zip(sub) {
            full[i] = v;
        }
        full
    };
    let mut result = hill_climb(&vec![1.0; active.len()], |s| objective(&scaled_pass(pass, &expand(s))), opts);
    result.params = expand(&result.params).to_vec();
    Ok(PassTuning {
        pass: scaled_pass(pass, &result.params),
        result,
    })
}

/// `event` without the hits in `gone`.
fn without(event: &Event, gone: &HashSet<HitId>) -> Event {
    Event {
        event_id: event.event_id,
        hits: event.hits.iter().filter(|h| !gone.contains(&h.hit_id)).cloned().collect(),
        particles: event.particles.clone(),
        truth: event.truth.iter().filter(|t| !gone.contains(&t.hit_id)).cloned().collect(),
    }
}

/// Tunes every pass in order. Each pass is trained on the hits left over by
/// the already tuned passes before it.
pub fn tune_schedule(
    schedule: &Schedule,
    events: &[Event],
    detector: &Detector,
    weights: &CriterionWeights,
    opts: &TuneOptions,
) -> Result<(Schedule, Vec<TuneResult>)> {
    schedule.validate_for(detector)?;
    let mut remaining: Vec<Event> = events.to_vec();
    let mut passes = Vec::new();
    let mut results = Vec::new();
    for pass in &schedule.passes {
        let tuned = tune_pass(pass, &remaining, detector, weights, opts)?;
        let single = Schedule {
            passes: vec![tuned.pass.clone()],
        };
        remaining = remaining
            .iter()
            .map(|e| {
                let out = run_with(e, detector, &single, &RunOptions { workers: 1 });
                let gone: HashSet<HitId> = out.tracks.iter().flat_map(|t| t.hit_ids.iter().copied()).collect();
                without(e, &gone)
            })
            .collect();
        passes.push(tuned.pass);
        results.push(tuned.result);
    }
    Ok((Schedule { passes }, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_detector;

    /// Found tracks saturate with the window while fakes grow linearly:
    /// `n (1 - exp(-w / s)) - k w`, maximal at `w = s ln(n / (s k))`.
    fn landscape(w: f64) -> f64 {
        let (n, s, k) = (100.0, 2.0, 5.0);
        n * (1.0 - (-w / s).exp()) - k * w
    }

    #[test]
    fn fixed_point_stays() {
        let r = hill_climb(&[3.0], |p| -(p[0] - 3.0).powi(2), &TuneOptions::default());
        assert_eq!(r.params, vec![3.0]);
        assert_eq!(r.history.len(), 1);
    }

    #[test]
    fn finds_window_optimum() {
        let opt = 2.0 * (100.0f64 / 10.0).ln();
        let r = hill_climb(&[1.0], |p| landscape(p[0]), &TuneOptions::default());
        assert!(r.iterations <= 50);
        assert!((r.params[0] / opt - 1.0).abs() < 0.05, "{} vs {opt}", r.params[0]);
    }

    #[test]
    fn accepted_steps_never_worsen() {
        let r = hill_climb(
            &[0.3, 4.0],
            |p| landscape(p[0]) - (p[1] - 1.5).powi(2),
            &TuneOptions::default(),
        );
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn tune_pass_on_toy_objective() {
        let pass = Schedule::default_for(&default_detector()).passes[0].clone();
        let target = pass.z_residual_cut * 2.0;
        let opts = TuneOptions {
            parameters: vec!["z_residual_cut".into()],
            ..Default::default()
        };
        let t = tune_pass_with(&pass, |p| -(p.z_residual_cut - target).powi(2), &opts).unwrap();
        assert!((t.pass.z_residual_cut / target - 1.0).abs() < 0.05);
        assert_eq!(t.pass.window_l2, pass.window_l2);
        let bad = TuneOptions {
            parameters: vec!["nope".into()],
            ..Default::default()
        };
        assert!(tune_pass_with(&pass, |_| 0.0, &bad).is_err());
    }

    #[test]
    fn empty_training_set_rejected() {
        let det = default_detector();
        let pass = Schedule::default_for(&det).passes[0].clone();
        assert!(tune_pass(&pass, &[], &det, &CriterionWeights::default(), &TuneOptions::default()).is_err());
    }

    #[test]
    fn track_scoring() {
        use crate::event::TruthLink;
        let mut ev = Event {
            event_id: 1,
            ..Default::default()
        };
        for (h, p) in [(1, 1), (2, 1), (3, 1), (4, 2), (5, 2), (6, 0)] {
            ev.truth.push(TruthLink {
                hit_id: h,
                particle_id: p,
                weight: 1.0,
            });
        }
        let s = score_tracks(&ev, &[vec![1, 2, 4], vec![5, 6]]);
        // track 1: particle 1 holds 2 of 3 and 2 of its 3 hits -> matched, 1 wrong
        // track 2: particle 2 holds 1 of 2, not a strict majority -> unmatched,
        //          the noise hit is wrong
        assert_eq!(s, PassScore { matched: 1, wrong_hits: 2 });
    }
}
