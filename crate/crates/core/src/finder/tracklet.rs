//! Seeding: tracklets of three points on the base layers.

use crate::event::HitId;
use crate::geometry::Detector;
use crate::grid::{GridHit, Window};
use crate::helix::{fit_three_hits, line_intersect, z_residual, Point, ThreeHitHelix};

use super::{HitSource, PassConfig};

pub(crate) const ORIGIN: Point = [0.0, 0.0, 0.0];
const SEED: usize = 0;

/// A point of a tracklet spine: a hit, or the origin pseudo-hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SpinePoint {
    pub pos: Point,
    /// `None` for the origin.
    pub hit: Option<HitId>,
    pub layer: usize,
    /// Seed, inward and outward field at this point.
    pub field: [f64; 3],
}

impl SpinePoint {
    pub fn from_hit(h: &GridHit, layer: usize) -> Self {
        SpinePoint {
            pos: h.position(),
            hit: Some(h.hit_id),
            layer,
            field: h.field,
        }
    }

    fn origin(field: [f64; 3]) -> Self {
        SpinePoint {
            pos: ORIGIN,
            hit: None,
            layer: usize::MAX,
            field,
        }
    }
}

/// Three seed points in order of motion, with the deviations of the real
/// hits among them.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub(crate) spine: [SpinePoint; 3],
    pub(crate) deviations: Vec<f64>,
}

impl Tracklet {
    pub fn hit_ids(&self) -> Vec<HitId> {
        self.spine.iter().filter_map(|p| p.hit).collect()
    }

    pub fn uses_origin(&self) -> bool {
        self.spine[0].hit.is_none()
    }

    pub fn helix(&self) -> Option<ThreeHitHelix> {
        let [a, b, c] = &self.spine;
        fit_three_hits(a.pos, b.pos, c.pos, b.field[SEED]).ok()
    }
}

/// Centered window of size `w` around where the line `from -> through`
/// meets `layer`.
pub(crate) fn line_window(
    from: Point,
    through: Point,
    detector: &Detector,
    layer: usize,
    w: super::WindowSize,
) -> Option<Window> {
    let (phi, t, _) = line_intersect(from, through, detector.layer(layer))?;
    Some(Window {
        phi,
        t,
        dphi: w.dphi,
        dt: w.dt,
    })
}

/// Builds the tracklet for seed points `a, b, c` if it passes the z cut.
/// `a` is the origin in origin-seeded passes.
pub(crate) fn accept(a: SpinePoint, b: SpinePoint, c: SpinePoint, pass: &PassConfig) -> Option<Tracklet> {
    let helix = fit_three_hits(a.pos, b.pos, c.pos, b.field[SEED]).ok()?;
    let dz = z_residual(&helix, a.pos);
    if !(dz <= pass.z_residual_cut) {
        return None;
    }
    let mut deviations = Vec::with_capacity(3);
    if a.hit.is_some() {
        deviations.push(dz);
    }
    deviations.extend([0.0, 0.0]);
    Some(Tracklet {
        spine: [a, b, c],
        deviations,
    })
}

fn sorted(buf: &mut Vec<GridHit>) -> Vec<GridHit> {
    let mut v = std::mem::take(buf);
    v.sort_by_key(|h| h.hit_id);
    v
}

/// All tracklets whose first hit is `seed` (a hit on the first base layer).
pub(crate) fn construct<S: HitSource>(
    seed: &GridHit,
    pass: &PassConfig,
    detector: &Detector,
    source: &S,
    buf: &mut Vec<GridHit>,
) -> Vec<Tracklet> {
    let base: Vec<usize> = match pass
        .base_layers
        .iter()
        .map(|k| detector.index_of(*k))
        .collect::<Option<Vec<_>>>()
    {
        Some(b) => b,
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    let first = SpinePoint::from_hit(seed, base[0]);
    if pass.use_origin_seed {
        let origin = SpinePoint::origin(seed.field);
        let l3 = base[1];
        let Some(w3) = line_window(ORIGIN, first.pos, detector, l3, pass.window_l3) else {
            return out;
        };
        buf.clear();
        source.query(l3, &w3, buf);
        for h3 in sorted(buf) {
            out.extend(accept(origin, first, SpinePoint::from_hit(&h3, l3), pass));
        }
        return out;
    }
    let (l2, l3) = (base[1], base[2]);
    let Some(w2) = line_window(ORIGIN, first.pos, detector, l2, pass.window_l2) else {
        return out;
    };
    buf.clear();
    source.query(l2, &w2, buf);
    for h2 in sorted(buf) {
        let second = SpinePoint::from_hit(&h2, l2);
        let Some(w3) = line_window(first.pos, second.pos, detector, l3, pass.window_l3) else {
            continue;
        };
        buf.clear();
        source.query(l3, &w3, buf);
        for h3 in sorted(buf) {
            out.extend(accept(first, second, SpinePoint::from_hit(&h3, l3), pass));
        }
    }
    out
}
