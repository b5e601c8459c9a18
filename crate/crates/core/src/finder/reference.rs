//! Gridless reference finder: every base-layer triplet is enumerated and
//! tested against the same windows, prolongation scans whole layers, and
//! selection rescans all candidates each round. Meant for small events.

use crate::event::{Event, HitId};
use crate::geometry::Detector;
use crate::grid::GridHit;

use super::tracklet::{accept, line_window, SpinePoint, Tracklet, ORIGIN};
use super::{pass_candidates, run_passes, select_naive, PassConfig, PassStats, RunOutput, ScanSource, Schedule};

fn brute_tracklets(seed: &GridHit, pass: &PassConfig, detector: &Detector, layers: &[Vec<GridHit>]) -> Vec<Tracklet> {
    let Some(base) = pass
        .base_layers
        .iter()
        .map(|k| detector.index_of(*k))
        .collect::<Option<Vec<_>>>()
    else {
        return Vec::new();
    };
    let first = SpinePoint::from_hit(seed, base[0]);
    let mut out = Vec::new();
    if pass.use_origin_seed {
        let origin = SpinePoint {
            pos: ORIGIN,
            hit: None,
            layer: usize::MAX,
            field: seed.field,
        };
        let Some(w3) = line_window(ORIGIN, first.pos, detector, base[1], pass.window_l3) else {
            return out;
        };
        for h3 in &layers[base[1]] {
            if w3.contains(h3.phi, h3.t) {
                out.extend(accept(origin, first, SpinePoint::from_hit(h3, base[1]), pass));
            }
        }
        return out;
    }
    let Some(w2) = line_window(ORIGIN, first.pos, detector, base[1], pass.window_l2) else {
        return out;
    };
    for h2 in &layers[base[1]] {
        for h3 in &layers[base[2]] {
            if !w2.contains(h2.phi, h2.t) {
                continue;
            }
            let second = SpinePoint::from_hit(h2, base[1]);
            let Some(w3) = line_window(first.pos, second.pos, detector, base[2], pass.window_l3) else {
                continue;
            };
            if w3.contains(h3.phi, h3.t) {
                out.extend(accept(first, second, SpinePoint::from_hit(h3, base[2]), pass));
            }
        }
    }
    out
}

fn reference_pass(detector: &Detector, pass: &PassConfig, layers: Vec<Vec<GridHit>>) -> (PassStats, Vec<Vec<HitId>>) {
    let source = ScanSource::new(layers.clone());
    let (n_tracklets, candidates) =
        pass_candidates(detector, pass, &source, |seed, _| brute_tracklets(seed, pass, detector, &layers));
    let n_candidates = candidates.len();
    let accepted = select_naive(candidates, pass);
    (
        PassStats {
            tracklets: n_tracklets,
            candidates: n_candidates,
            accepted: accepted.len(),
            assigned_hits: accepted.iter().map(Vec::len).sum(),
        },
        accepted,
    )
}

/// Runs `schedule` without grids on a single thread.
pub fn run_reference(event: &Event, detector: &Detector, schedule: &Schedule) -> RunOutput {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    pool.install(|| run_passes(event, detector, &schedule.passes, reference_pass))
}
