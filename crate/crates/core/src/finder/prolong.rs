//! Growing a tracklet into track candidates.
//!
//! The next layer is always the unvisited layer the current helix crosses
//! first. In each layer window the closest hit extends the candidate, hits
//! sitting on the refitted trajectory within the pickup window join it as
//! duplicates, and the remaining in-window hits may start new branches. The
//! branches are explored depth first from an explicit stack.

use crate::event::HitId;
use crate::geometry::{wrap_delta_phi, Detector, SurfaceKind};
use crate::grid::{GridHit, Window};
use crate::helix::{fit_three_hits, CrossingKind, Direction, ThreeHitHelix};

use super::tracklet::{SpinePoint, Tracklet};
use super::{HitSource, PassConfig, WindowSize};

const SEED: usize = 0;
const INWARD: usize = 1;
const OUTWARD: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackCandidate {
    pub hit_ids: Vec<HitId>,
    /// Distance of each hit from the trajectory it was matched to, mm.
    pub deviations: Vec<f64>,
    pub n_missing: usize,
}

impl TrackCandidate {
    pub fn len(&self) -> usize {
        self.hit_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hit_ids.is_empty()
    }

    pub fn mean_deviation(&self) -> f64 {
        if self.deviations.is_empty() {
            0.0
        } else {
            self.deviations.iter().sum::<f64>() / self.deviations.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
struct State {
    /// Distinct-layer points in order of motion, possibly starting at the origin.
    spine: Vec<SpinePoint>,
    hits: Vec<HitId>,
    deviations: Vec<f64>,
    visited: Vec<bool>,
    missing: usize,
    total_missing: usize,
    direction: Direction,
}

/// Helix used to step in `direction` and the arc to step from.
fn stepping_helix(spine: &[SpinePoint], direction: Direction) -> Option<(ThreeHitHelix, f64)> {
    let n = spine.len();
    match direction {
        Direction::Outward => {
            let [a, b, c] = [&spine[n - 3], &spine[n - 2], &spine[n - 1]];
            let h = fit_three_hits(a.pos, b.pos, c.pos, b.field[SEED]).ok()?;
            let s = h.hit_arcs()[2];
            Some((h.with_field(c.field[OUTWARD], s), s))
        }
        Direction::Inward => {
            let [a, b, c] = [&spine[0], &spine[1], &spine[2]];
            let h = fit_three_hits(a.pos, b.pos, c.pos, b.field[SEED]).ok()?;
            // step from the innermost real hit
            let (first, field) = if a.hit.is_some() { (0, a.field) } else { (1, b.field) };
            let s = h.hit_arcs()[first];
            Some((h.with_field(field[INWARD], s), s))
        }
    }
}

fn deviation(helix: &ThreeHitHelix, hit: &GridHit, detector: &Detector, layer: usize, near: f64) -> Option<f64> {
    let (dphi, dt) = helix.residual(hit.position(), detector.layer(layer), near)?;
    Some((hit.r() * dphi).hypot(dt))
}

struct Ranked {
    hit: GridHit,
    dev: f64,
}

/// What a pass needs to look hits up.
pub(crate) struct Lookup<'a, S> {
    pub pass: &'a PassConfig,
    pub detector: &'a Detector,
    /// Prolongation window per layer.
    pub windows: &'a [WindowSize],
    /// Grid cell size per layer, the largest window a single query may use.
    pub cells: &'a [WindowSize],
    pub source: &'a S,
}

/// Hits of `layer` lying on `helix` within the pickup window, up to
/// `pickup_depth` off the surface of `anchor`, sorted by hit id.
///
/// The trajectory's trace on the layer coordinates is sampled across the
/// depth band, and one cell-sized query is made per sample, spaced closely
/// enough that the queries cover the band.
fn pickup<S: HitSource>(
    lk: &Lookup<S>,
    helix: &ThreeHitHelix,
    near: f64,
    layer: usize,
    anchor: [f64; 3],
    buf: &mut Vec<GridHit>,
) -> Vec<(HitId, f64)> {
    let surface = lk.detector.layer(layer);
    let depth = lk.pass.pickup_depth;
    let win = lk.pass.pickup_window;
    let anchor_r = anchor[0].hypot(anchor[1]);
    let shifted = |o: f64| match surface.kind {
        SurfaceKind::Cylinder { .. } => {
            let k = (anchor_r + o) / anchor_r;
            [anchor[0] * k, anchor[1] * k, anchor[2]]
        }
        SurfaceKind::Disk { .. } => [anchor[0], anchor[1], anchor[2] + o],
    };
    let trace = |o: f64| {
        let p = shifted(o);
        let (dphi, dt) = helix.residual(p, surface, near)?;
        let (phi, t) = surface.coords_of(p);
        Some((phi - dphi, t - dt))
    };
    let cell = lk.cells[layer];
    let n = match (trace(-depth), trace(depth)) {
        (Some(a), Some(b)) if depth > 0.0 => {
            let slack_phi = (cell.dphi - win.dphi).max(1e-3 * cell.dphi);
            let slack_t = (cell.dt - win.dt).max(1e-3 * cell.dt);
            let steps = (wrap_delta_phi(b.0 - a.0).abs() / slack_phi).max((b.1 - a.1).abs() / slack_t);
            (steps.ceil() as usize).clamp(1, MAX_PICKUP_QUERIES)
        }
        _ => 0,
    };
    buf.clear();
    for k in 0..=n {
        let o = if n == 0 { 0.0 } else { depth * (2.0 * k as f64 / n as f64 - 1.0) };
        let Some((phi, t)) = trace(o) else { continue };
        lk.source.query(
            layer,
            &Window {
                phi,
                t,
                dphi: cell.dphi,
                dt: cell.dt,
            },
            buf,
        );
    }
    buf.sort_by_key(|h| h.hit_id);
    buf.dedup_by_key(|h| h.hit_id);
    let mut out = Vec::new();
    for h in buf.iter() {
        let off = match surface.kind {
            SurfaceKind::Cylinder { .. } => h.r() - anchor_r,
            SurfaceKind::Disk { .. } => h.z - anchor[2],
        };
        if off.abs() > depth {
            continue;
        }
        let Some((dphi, dt)) = helix.residual(h.position(), surface, near) else {
            continue;
        };
        if dphi.abs() < 0.5 * win.dphi && dt.abs() < 0.5 * win.dt {
            out.push((h.hit_id, (h.r() * dphi).hypot(dt)));
        }
    }
    out
}

const MAX_PICKUP_QUERIES: usize = 32;

fn add_pickups(st: &mut State, found: &[(HitId, f64)]) -> Vec<HitId> {
    let mut picked = Vec::new();
    for &(id, dev) in found {
        if !st.hits.contains(&id) {
            st.hits.push(id);
            st.deviations.push(dev);
            picked.push(id);
        }
    }
    picked
}

/// Takes `chosen` on `layer`, refits, and picks up further hits lying on
/// the new trajectory. Returns the ids picked up.
fn take<S: HitSource>(
    st: &mut State,
    chosen: &Ranked,
    layer: usize,
    lk: &Lookup<S>,
    buf: &mut Vec<GridHit>,
) -> Vec<HitId> {
    let point = SpinePoint::from_hit(&chosen.hit, layer);
    match st.direction {
        Direction::Outward => st.spine.push(point),
        Direction::Inward => st.spine.insert(0, point),
    }
    st.hits.push(chosen.hit.hit_id);
    st.deviations.push(chosen.dev);
    // the chosen hit is the pivot of the refitted helix
    let Some((helix, near)) = stepping_helix(&st.spine, st.direction) else {
        return Vec::new();
    };
    let found = pickup(lk, &helix, near, layer, chosen.hit.position(), buf);
    add_pickups(st, &found)
}

/// Ends the current direction. Returns `false` when the candidate is complete.
fn turn_around(st: &mut State, pass: &PassConfig) -> bool {
    if st.direction == Direction::Outward && pass.inward {
        st.direction = Direction::Inward;
        st.missing = 0;
        true
    } else {
        false
    }
}

/// Candidates grown from `tracklet`, at most `1 + max_branches` of them.
pub(crate) fn prolong<S: HitSource>(tracklet: &Tracklet, lk: &Lookup<S>, buf: &mut Vec<GridHit>) -> Vec<TrackCandidate> {
    let (pass, detector) = (lk.pass, lk.detector);
    let mut visited = vec![false; detector.len()];
    for p in &tracklet.spine {
        if p.hit.is_some() {
            visited[p.layer] = true;
        }
    }
    let mut start = State {
        spine: tracklet.spine.to_vec(),
        hits: tracklet.hit_ids(),
        deviations: tracklet.deviations.clone(),
        visited,
        missing: 0,
        total_missing: 0,
        direction: Direction::Outward,
    };
    if let Some(helix) = tracklet.helix() {
        let arcs = helix.hit_arcs();
        for (p, s) in tracklet.spine.iter().zip(arcs) {
            if p.hit.is_some() {
                let found = pickup(lk, &helix, s, p.layer, p.pos, buf);
                add_pickups(&mut start, &found);
            }
        }
    }
    let mut branches_left = pass.max_branches;
    let mut stack = vec![start];
    let mut done = Vec::new();
    while let Some(mut st) = stack.pop() {
        loop {
            let Some((helix, from)) = stepping_helix(&st.spine, st.direction) else {
                if turn_around(&mut st, pass) {
                    continue;
                }
                break;
            };
            let next = (0..detector.len())
                .filter(|&l| !st.visited[l])
                .filter_map(|l| {
                    helix
                        .extrapolate_from(from, detector.layer(l), st.direction, pass.edge_margin)
                        .map(|c| (l, c))
                })
                .min_by(|a, b| {
                    let da = (a.1.s - from).abs();
                    let db = (b.1.s - from).abs();
                    da.total_cmp(&db).then(a.0.cmp(&b.0))
                });
            let Some((layer, crossing)) = next else {
                if turn_around(&mut st, pass) {
                    continue;
                }
                break;
            };
            st.visited[layer] = true;
            let w = lk.windows[layer];
            buf.clear();
            lk.source.query(
                layer,
                &Window {
                    phi: crossing.phi,
                    t: crossing.t,
                    dphi: w.dphi,
                    dt: w.dt,
                },
                buf,
            );
            let mut ranked: Vec<(f64, Ranked)> = buf
                .iter()
                .filter_map(|h| {
                    let (dphi, dt) = helix.residual(h.position(), detector.layer(layer), crossing.s)?;
                    let metric = (dphi / w.dphi).powi(2) + (dt / w.dt).powi(2);
                    let dev = deviation(&helix, h, detector, layer, crossing.s)?;
                    Some((metric, Ranked { hit: *h, dev }))
                })
                .collect();
            if ranked.is_empty() {
                if crossing.kind == CrossingKind::Interior {
                    st.missing += 1;
                    st.total_missing += 1;
                    if st.missing > pass.max_missing_layers && !turn_around(&mut st, pass) {
                        break;
                    }
                }
                continue;
            }
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.hit.hit_id.cmp(&b.1.hit.hit_id)));
            let ranked: Vec<Ranked> = ranked.into_iter().map(|(_, r)| r).collect();
            let base = st.clone();
            let picked = take(&mut st, &ranked[0], layer, lk, buf);
            for alt in &ranked[1..] {
                if branches_left == 0 {
                    break;
                }
                if picked.contains(&alt.hit.hit_id) {
                    continue;
                }
                branches_left -= 1;
                let mut b = base.clone();
                take(&mut b, alt, layer, lk, buf);
                stack.push(b);
            }
        }
        if st.hits.len() >= pass.min_hits {
            done.push(TrackCandidate {
                hit_ids: st.hits,
                deviations: st.deviations,
                n_missing: st.total_missing,
            });
        }
    }
    done
}
