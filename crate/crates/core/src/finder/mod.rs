//! Multi-pass combinatorial track finder.
//!
//! Every pass rebuilds the layer grids from the hits still unassigned, seeds
//! tracklets on its base layers, grows each tracklet layer by layer along a
//! three-hit helix, and greedily accepts the best candidates. Accepted hits
//! are gone for the following passes.

mod config;
mod prolong;
pub mod reference;
mod select;
mod tracklet;
pub mod tune;

use std::collections::HashMap;

use rayon::prelude::*;

pub use config::{mm_window, LayerWindow, PassConfig, Schedule, Tightness, WindowSize};
pub use prolong::TrackCandidate;
pub use select::{select, select_naive};
pub use tracklet::Tracklet;

use crate::event::{Event, HitId, Solution, TrackId};
use crate::geometry::{Detector, FieldVariant};
use crate::grid::{GridHit, LayerGrid, Window};

/// Access to the hits of each layer for one pass.
pub trait HitSource: Sync {
    /// All hits of `layer`, sorted by hit id.
    fn layer_hits(&self, layer: usize) -> &[GridHit];
    /// Appends the hits of `layer` inside `window`, in no particular order.
    fn query(&self, layer: usize, window: &Window, out: &mut Vec<GridHit>);
}

/// Grids get at most this many cells per hit; sparse layers would otherwise
/// spend more time clearing cells than scanning hits.
const CELLS_PER_HIT: usize = 4;
const MIN_CELLS: usize = 256;

/// Grid-backed source used by the finder.
pub struct GridSource {
    layers: Vec<Vec<GridHit>>,
    grids: Vec<LayerGrid>,
}

impl GridSource {
    /// Builds one grid per layer with cells of at least `cells[layer]`.
    pub fn build(detector: &Detector, layers: Vec<Vec<GridHit>>, cells: &[WindowSize]) -> Self {
        let grids = layers
            .par_iter()
            .enumerate()
            .map(|(i, hits)| {
                let c = cells[i];
                let limit = CELLS_PER_HIT * hits.len().max(MIN_CELLS / CELLS_PER_HIT);
                LayerGrid::build_limited(hits, (c.dphi, c.dt), detector.layer(i).t_range(), limit)
            })
            .collect();
        GridSource { layers, grids }
    }
}

impl HitSource for GridSource {
    fn layer_hits(&self, layer: usize) -> &[GridHit] {
        &self.layers[layer]
    }

    fn query(&self, layer: usize, window: &Window, out: &mut Vec<GridHit>) {
        self.grids[layer].query_within(window, out);
    }
}

/// Linear scan over each layer. Slow; used as a reference.
pub struct ScanSource {
    layers: Vec<Vec<GridHit>>,
}

impl ScanSource {
    pub fn new(layers: Vec<Vec<GridHit>>) -> Self {
        ScanSource { layers }
    }
}

impl HitSource for ScanSource {
    fn layer_hits(&self, layer: usize) -> &[GridHit] {
        &self.layers[layer]
    }

    fn query(&self, layer: usize, w: &Window, out: &mut Vec<GridHit>) {
        out.extend(self.layers[layer].iter().filter(|h| w.contains(h.phi, h.t)).copied());
    }
}

/// One accepted track.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: TrackId,
    /// Sorted.
    pub hit_ids: Vec<HitId>,
    pub pass_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PassStats {
    pub tracklets: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub assigned_hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub solution: Solution,
    pub tracks: Vec<Track>,
    pub passes: Vec<PassStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 2 }
    }
}

/// Hits of an event grouped by detector layer with their surface
/// coordinates and field values. Hits on unknown layers are dropped.
pub fn layer_hits(event: &Event, detector: &Detector) -> Vec<Vec<GridHit>> {
    let mut layers = vec![Vec::new(); detector.len()];
    for (i, h) in event.hits.iter().enumerate() {
        let Some(li) = detector.layer_of_hit(h) else { continue };
        let surface = detector.layer(li);
        let (phi, t) = surface.coords_of(h.position());
        let field = FieldVariant::ALL.map(|v| detector.field_by_index(li, t, v));
        layers[li].push(GridHit {
            phi,
            t,
            x: h.x,
            y: h.y,
            z: h.z,
            hit_id: h.hit_id,
            field,
            source: i as u32,
        });
    }
    for l in &mut layers {
        l.sort_by_key(|h| h.hit_id);
    }
    layers
}

/// Per-layer cell sizes large enough for every window `pass` queries.
pub fn cell_sizes(detector: &Detector, pass: &PassConfig) -> Vec<WindowSize> {
    let mut cells: Vec<WindowSize> = pass
        .prolong_table(detector)
        .into_iter()
        .map(|w| w.max(pass.pickup_window))
        .collect();
    let base: Vec<usize> = pass.base_layers.iter().filter_map(|k| detector.index_of(*k)).collect();
    let n = base.len();
    if n >= 2 {
        cells[base[n - 1]] = cells[base[n - 1]].max(pass.window_l3);
    }
    if n == 3 {
        cells[base[1]] = cells[base[1]].max(pass.window_l2);
    }
    cells
}

/// Tracklets and their prolongations for one pass, in seed-hit order.
pub(crate) fn pass_candidates<S: HitSource>(
    detector: &Detector,
    pass: &PassConfig,
    source: &S,
    tracklets: impl Fn(&GridHit, &mut Vec<GridHit>) -> Vec<Tracklet> + Sync,
) -> (usize, Vec<TrackCandidate>) {
    let Some(first) = pass.base_layers.first().and_then(|k| detector.index_of(*k)) else {
        return (0, Vec::new());
    };
    let prolong_windows = pass.prolong_table(detector);
    let cells = cell_sizes(detector, pass);
    let lookup = prolong::Lookup {
        pass,
        detector,
        windows: &prolong_windows,
        cells: &cells,
        source,
    };
    let per_seed: Vec<(usize, Vec<TrackCandidate>)> = source
        .layer_hits(first)
        .par_iter()
        .map_init(Vec::new, |buf, seed| {
            let ts = tracklets(seed, buf);
            let mut out = Vec::new();
            for t in &ts {
                out.extend(prolong::prolong(t, &lookup, buf));
            }
            (ts.len(), out)
        })
        .collect();
    let n_tracklets = per_seed.iter().map(|(n, _)| n).sum();
    (n_tracklets, per_seed.into_iter().flat_map(|(_, c)| c).collect())
}

fn run_pass(
    detector: &Detector,
    pass: &PassConfig,
    layers: Vec<Vec<GridHit>>,
) -> (PassStats, Vec<Vec<HitId>>) {
    let source = GridSource::build(detector, layers, &cell_sizes(detector, pass));
    let (n_tracklets, candidates) = pass_candidates(detector, pass, &source, |seed, buf| {
        tracklet::construct(seed, pass, detector, &source, buf)
    });
    let n_candidates = candidates.len();
    let accepted = select(candidates, pass);
    let stats = PassStats {
        tracklets: n_tracklets,
        candidates: n_candidates,
        accepted: accepted.len(),
        assigned_hits: accepted.iter().map(Vec::len).sum(),
    };
    (stats, accepted)
}

/// Runs every pass of `schedule` with one worker per available core capped
/// at two.
pub fn run(event: &Event, detector: &Detector, schedule: &Schedule) -> Solution {
    run_with(event, detector, schedule, &RunOptions::default()).solution
}

/// Runs the schedule with an explicit worker count. The result does not
/// depend on the number of workers. Builds a thread pool per call; use
/// [`Finder`] to reuse one across events.
pub fn run_with(event: &Event, detector: &Detector, schedule: &Schedule, opts: &RunOptions) -> RunOutput {
    Finder::new(detector, schedule, opts).run(event)
}

/// A detector, schedule and worker pool ready to process many events.
pub struct Finder<'a> {
    detector: &'a Detector,
    schedule: &'a Schedule,
    pool: rayon::ThreadPool,
}

impl<'a> Finder<'a> {
    pub fn new(detector: &'a Detector, schedule: &'a Schedule, opts: &RunOptions) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers.max(1))
            .build()
            .expect("thread pool");
        Finder {
            detector,
            schedule,
            pool,
        }
    }

    pub fn run(&self, event: &Event) -> RunOutput {
        self.pool
            .install(|| run_passes(event, self.detector, &self.schedule.passes, run_pass))
    }
}

/// Pass loop shared with the reference finder.
pub(crate) fn run_passes(
    event: &Event,
    detector: &Detector,
    passes: &[PassConfig],
    run_one: impl Fn(&Detector, &PassConfig, Vec<Vec<GridHit>>) -> (PassStats, Vec<Vec<HitId>>),
) -> RunOutput {
    let all = layer_hits(event, detector);
    let mut taken: HashMap<HitId, TrackId> = HashMap::new();
    let mut tracks = Vec::new();
    let mut stats = Vec::new();
    for (pi, pass) in passes.iter().enumerate() {
        let alive: Vec<Vec<GridHit>> = all
            .iter()
            .map(|l| l.iter().filter(|h| !taken.contains_key(&h.hit_id)).copied().collect())
            .collect();
        let (s, accepted) = run_one(detector, pass, alive);
        for hits in accepted {
            let id = tracks.len() as TrackId + 1;
            for &h in &hits {
                let prev = taken.insert(h, id);
                debug_assert!(prev.is_none(), "hit {h} assigned twice");
            }
            tracks.push(Track {
                track_id: id,
                hit_ids: hits,
                pass_index: pi,
            });
        }
        stats.push(s);
    }
    let mut solution = Solution::unassigned(event);
    for (h, t) in taken {
        solution.assignment.insert(h, t);
    }
    RunOutput {
        solution,
        tracks,
        passes: stats,
    }
}

#[cfg(test)]
mod tests;
