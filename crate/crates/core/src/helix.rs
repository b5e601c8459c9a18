//! Local trajectory model: straight-line projections for seeding and the
//! three-hit helix used for prolongation.
//!
//! A helix is parameterized by its signed transverse arc length `s` (mm),
//! measured along the direction of motion from a reference point. In the
//! transverse plane it is a circle (or a line in the zero-curvature limit);
//! `z` is linear in `s`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::event::normalize_phi;
use crate::geometry::{LayerSurface, SurfaceKind};

/// Below this curvature (1/mm) the straight-line formulas are used.
pub const STRAIGHT_LINE_CURVATURE: f64 = 1e-7;

/// pT [GeV] = 0.3 * Bz [T] * R [m].
pub const GEV_PER_TESLA_METER: f64 = 0.3;

/// Hits closer than this in the transverse plane count as coincident, mm.
const COINCIDENT: f64 = 1e-9;

/// Default distance from a layer edge within which a crossing is "near edge".
pub const EDGE_MARGIN: f64 = 10.0;

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub q: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outward,
    Inward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingKind {
    Interior,
    NearEdge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub phi: f64,
    pub t: f64,
    pub kind: CrossingKind,
    /// Arc-length coordinate of the crossing on the helix.
    pub s: f64,
    pub point: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Circle {
        cx: f64,
        cy: f64,
        radius: f64,
        /// Azimuth about the center at the reference point.
        alpha_ref: f64,
        /// +1 counter-clockwise, -1 clockwise.
        turn: f64,
    },
    Line {
        /// Unit transverse direction of motion.
        dx: f64,
        dy: f64,
    },
}

/// Helix through three hits: exact through all three in the transverse plane
/// and through the second and third in `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeHitHelix {
    shape: Shape,
    /// Point where `s == s_ref`.
    reference: Point,
    s_ref: f64,
    dz_ds: f64,
    /// Arc coordinates of the three construction hits.
    s_hits: [f64; 3],
    bz: f64,
}

impl ThreeHitHelix {
    pub fn is_straight(&self) -> bool {
        matches!(self.shape, Shape::Line { .. })
    }

    /// Circle center, or `None` for the straight-line limit.
    pub fn center(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Circle { cx, cy, .. } => Some((cx, cy)),
            Shape::Line { .. } => None,
        }
    }

    /// Transverse radius in mm; infinite for a straight line.
    pub fn radius(&self) -> f64 {
        match self.shape {
            Shape::Circle { radius, .. } => radius,
            Shape::Line { .. } => f64::INFINITY,
        }
    }

    /// +1 counter-clockwise, -1 clockwise, 0 straight.
    pub fn turn(&self) -> i8 {
        match self.shape {
            Shape::Circle { turn, .. } => turn as i8,
            Shape::Line { .. } => 0,
        }
    }

    pub fn dz_ds(&self) -> f64 {
        self.dz_ds
    }

    /// `z` advance per radian of turning, mm/rad. Infinite for a line.
    pub fn dz_dphi(&self) -> f64 {
        self.dz_ds * self.radius()
    }

    pub fn bz(&self) -> f64 {
        self.bz
    }

    pub fn hit_arcs(&self) -> [f64; 3] {
        self.s_hits
    }

    /// Signed curvature, 1/mm, positive for counter-clockwise motion.
    pub fn curvature(&self) -> f64 {
        match self.shape {
            Shape::Circle { radius, turn, .. } => turn / radius,
            Shape::Line { .. } => 0.0,
        }
    }

    pub fn position(&self, s: f64) -> Point {
        let ds = s - self.s_ref;
        let z = self.reference[2] + self.dz_ds * ds;
        match self.shape {
            Shape::Circle {
                cx,
                cy,
                radius,
                alpha_ref,
                turn,
            } => {
                let a = alpha_ref + turn * ds / radius;
                [cx + radius * a.cos(), cy + radius * a.sin(), z]
            }
            Shape::Line { dx, dy } => [self.reference[0] + ds * dx, self.reference[1] + ds * dy, z],
        }
    }

    /// Unit transverse direction of motion at `s`.
    pub fn direction(&self, s: f64) -> (f64, f64) {
        match self.shape {
            Shape::Circle {
                radius,
                alpha_ref,
                turn,
                ..
            } => {
                let a = alpha_ref + turn * (s - self.s_ref) / radius;
                (-turn * a.sin(), turn * a.cos())
            }
            Shape::Line { dx, dy } => (dx, dy),
        }
    }

    /// Whether the transverse distance from the beam axis grows at `s`.
    fn is_outgoing(&self, s: f64) -> bool {
        let p = self.position(s);
        let (dx, dy) = self.direction(s);
        p[0] * dx + p[1] * dy > 0.0
    }

    /// Arc coordinate of the point on the trajectory whose transverse
    /// projection is closest to `p`, choosing the turn nearest to `near`.
    pub fn arc_of(&self, p: Point, near: f64) -> f64 {
        match self.shape {
            Shape::Circle {
                cx,
                cy,
                radius,
                alpha_ref,
                turn,
            } => {
                let a = (p[1] - cy).atan2(p[0] - cx);
                self.nearest_arc(turn * (a - alpha_ref) * radius, radius, near)
            }
            Shape::Line { dx, dy } => {
                self.s_ref + (p[0] - self.reference[0]) * dx + (p[1] - self.reference[1]) * dy
            }
        }
    }

    /// Lifts an arc offset known modulo one turn to the copy nearest `near`.
    fn nearest_arc(&self, offset: f64, radius: f64, near: f64) -> f64 {
        let period = 2.0 * PI * radius;
        let base = self.s_ref + offset;
        base + ((near - base) / period).round() * period
    }

    /// All arc coordinates within half a turn of `near` where the trajectory
    /// meets the cylinder of radius `rho`.
    fn cylinder_arcs(&self, rho: f64, near: f64) -> Vec<f64> {
        match self.shape {
            Shape::Circle {
                cx,
                cy,
                radius,
                alpha_ref,
                turn,
            } => {
                let d = cx.hypot(cy);
                if d < COINCIDENT {
                    return Vec::new();
                }
                let k = (rho * rho - d * d - radius * radius) / (2.0 * radius * d);
                if !(-1.0..=1.0).contains(&k) {
                    return Vec::new();
                }
                let gamma = cy.atan2(cx);
                let w = k.acos();
                [gamma + w, gamma - w]
                    .into_iter()
                    .flat_map(|a| {
                        let s = self.nearest_arc(turn * (a - alpha_ref) * radius, radius, near);
                        let period = 2.0 * PI * radius;
                        [s - period, s, s + period]
                    })
                    .collect()
            }
            Shape::Line { dx, dy } => {
                let (px, py) = (self.reference[0], self.reference[1]);
                let b = px * dx + py * dy;
                let disc = b * b - (px * px + py * py - rho * rho);
                if disc < 0.0 {
                    return Vec::new();
                }
                let r = disc.sqrt();
                vec![self.s_ref - b + r, self.s_ref - b - r]
            }
        }
    }

    fn plane_arc(&self, z: f64) -> Option<f64> {
        if self.dz_ds == 0.0 {
            return None;
        }
        Some(self.s_ref + (z - self.reference[2]) / self.dz_ds)
    }

    fn half_turn(&self) -> f64 {
        PI * self.radius()
    }

    /// First crossing with `surface` going `direction` from arc `from`.
    ///
    /// Only crossings on the outgoing branch (distance from the beam axis
    /// increasing along the motion) and within half a turn are considered.
    /// Crossings outside the surface bounds by more than `edge_margin` are
    /// ignored; those within `edge_margin` of an edge are `NearEdge`.
    pub fn extrapolate_from(
        &self,
        from: f64,
        surface: &LayerSurface,
        direction: Direction,
        edge_margin: f64,
    ) -> Option<Crossing> {
        const EPS: f64 = 1e-9;
        let half = self.half_turn();
        let in_range = |s: f64| match direction {
            Direction::Outward => s > from + EPS && s - from < half,
            Direction::Inward => s < from - EPS && from - s < half,
        };
        let candidates = match surface.kind {
            SurfaceKind::Cylinder { radius, .. } => self.cylinder_arcs(radius, from),
            SurfaceKind::Disk { z, .. } => self.plane_arc(z).into_iter().collect(),
        };
        let s = candidates
            .into_iter()
            .filter(|&s| in_range(s) && self.is_outgoing(s))
            .min_by(|a, b| (a - from).abs().partial_cmp(&(b - from).abs()).unwrap())?;
        let point = self.position(s);
        let (phi, t) = surface.coords_of(point);
        let (lo, hi) = surface.t_range();
        if t < lo - edge_margin || t > hi + edge_margin {
            return None;
        }
        let kind = if t >= lo + edge_margin && t <= hi - edge_margin {
            CrossingKind::Interior
        } else {
            CrossingKind::NearEdge
        };
        Some(Crossing {
            phi,
            t,
            kind,
            s,
            point,
        })
    }

    /// First crossing outward from the third hit or inward from the first.
    pub fn extrapolate(&self, surface: &LayerSurface, direction: Direction) -> Option<Crossing> {
        let from = match direction {
            Direction::Outward => self.s_hits[2],
            Direction::Inward => self.s_hits[0],
        };
        self.extrapolate_from(from, surface, direction, EDGE_MARGIN)
    }

    /// Difference `(dphi, dt)` between a measured point and the trajectory,
    /// taken on the surface through the point parallel to `surface` (a
    /// cylinder of the point's radius, or the plane of the point's `z`).
    /// `near` selects the turn. `None` if the trajectory never reaches it.
    pub fn residual(&self, p: Point, surface: &LayerSurface, near: f64) -> Option<(f64, f64)> {
        let s = match surface.kind {
            SurfaceKind::Cylinder { .. } => {
                let rho = p[0].hypot(p[1]);
                self.cylinder_arcs(rho, near)
                    .into_iter()
                    .min_by(|a, b| (a - near).abs().partial_cmp(&(b - near).abs()).unwrap())?
            }
            SurfaceKind::Disk { .. } => self.plane_arc(p[2])?,
        };
        let q = self.position(s);
        let (phi_p, t_p) = surface.coords_of(p);
        let (phi_q, t_q) = surface.coords_of(q);
        Some((crate::geometry::wrap_delta_phi(phi_p - phi_q), t_p - t_q))
    }

    /// Same helix with its transverse radius rescaled for field `bz`, keeping
    /// position and direction of motion at arc `pivot`.
    pub fn with_field(&self, bz: f64, pivot: f64) -> ThreeHitHelix {
        if bz == self.bz || self.is_straight() || bz == 0.0 {
            return *self;
        }
        let Shape::Circle { radius, turn, .. } = self.shape else {
            unreachable!()
        };
        let p = self.position(pivot);
        let (dx, dy) = self.direction(pivot);
        let new_radius = radius * (self.bz / bz).abs();
        let new_turn = if (self.bz > 0.0) == (bz > 0.0) { turn } else { -turn };
        // center sits to the left of the motion for counter-clockwise turning
        let cx = p[0] - new_turn * new_radius * dy;
        let cy = p[1] + new_turn * new_radius * dx;
        ThreeHitHelix {
            shape: Shape::Circle {
                cx,
                cy,
                radius: new_radius,
                alpha_ref: (p[1] - cy).atan2(p[0] - cx),
                turn: new_turn,
            },
            reference: p,
            s_ref: pivot,
            dz_ds: self.dz_ds,
            s_hits: self.s_hits,
            bz,
        }
    }
}

/// Helix through `h1, h2, h3` (in order of motion). `bz` only enters the
/// momentum and charge estimates.
pub fn fit_three_hits(h1: Point, h2: Point, h3: Point, bz: f64) -> Result<ThreeHitHelix> {
    let (ax, ay) = (h1[0] - h2[0], h1[1] - h2[1]);
    let (bx, by) = (h3[0] - h2[0], h3[1] - h2[1]);
    let la = ax.hypot(ay);
    let lb = bx.hypot(by);
    let lab = (ax - bx).hypot(ay - by);
    if la < COINCIDENT || lb < COINCIDENT || lab < COINCIDENT {
        return Err(Error::Degenerate("two hits coincide in the transverse plane".into()));
    }
    let cross = ax * by - ay * bx;
    let curvature = 2.0 * cross.abs() / (la * lb * lab);

    if curvature < STRAIGHT_LINE_CURVATURE {
        let (dx, dy) = ((h3[0] - h1[0]) / lab, (h3[1] - h1[1]) / lab);
        let s1 = ax * dx + ay * dy;
        let s3 = bx * dx + by * dy;
        return Ok(ThreeHitHelix {
            shape: Shape::Line { dx, dy },
            reference: h2,
            s_ref: 0.0,
            dz_ds: (h3[2] - h2[2]) / s3,
            s_hits: [s1, 0.0, s3],
            bz,
        });
    }

    // turning sense of h1 -> h2 -> h3
    let turn = if cross < 0.0 { 1.0 } else { -1.0 };
    let d = 2.0 * cross;
    let ux = (by * la * la - ay * lb * lb) / d;
    let uy = (ax * lb * lb - bx * la * la) / d;
    let (cx, cy) = (h2[0] + ux, h2[1] + uy);
    let radius = ux.hypot(uy);
    let angle = |p: Point| (p[1] - cy).atan2(p[0] - cx);
    let (a1, a2, a3) = (angle(h1), angle(h2), angle(h3));
    let two_pi = 2.0 * PI;
    let s3 = radius * (turn * (a3 - a2)).rem_euclid(two_pi);
    let s1 = -radius * (turn * (a2 - a1)).rem_euclid(two_pi);
    Ok(ThreeHitHelix {
        shape: Shape::Circle {
            cx,
            cy,
            radius,
            alpha_ref: a2,
            turn,
        },
        reference: h2,
        s_ref: 0.0,
        dz_ds: (h3[2] - h2[2]) / s3,
        s_hits: [s1, 0.0, s3],
        bz,
    })
}

/// `|z_helix - z|` at the transverse position of `h1`.
pub fn z_residual(helix: &ThreeHitHelix, h1: Point) -> f64 {
    let s = helix.arc_of(h1, helix.s_hits[0]);
    (helix.position(s)[2] - h1[2]).abs()
}

/// Transverse momentum and the state at the third hit.
///
/// In the straight-line limit pT is `+inf` and the state's momentum holds the
/// unit direction of motion instead.
pub fn momentum_from_helix(helix: &ThreeHitHelix, bz: f64) -> (f64, TrajectoryState) {
    let s = helix.s_hits[2];
    let p = helix.position(s);
    let (dx, dy) = helix.direction(s);
    let turn = helix.turn();
    // positive charges turn clockwise in a field along +z
    let q = if turn == 0 || bz == 0.0 {
        1
    } else if (turn > 0) == (bz > 0.0) {
        -1
    } else {
        1
    };
    let pt = if helix.is_straight() {
        f64::INFINITY
    } else {
        GEV_PER_TESLA_METER * bz.abs() * helix.radius() * 1e-3
    };
    let scale = if pt.is_finite() { pt } else { 1.0 };
    (
        pt,
        TrajectoryState {
            x: p[0],
            y: p[1],
            z: p[2],
            px: scale * dx,
            py: scale * dy,
            pz: scale * helix.dz_ds,
            q,
        },
    )
}

/// Intersection of the ray `from -> through` with the surface, ignoring the
/// surface bounds. Returns `(phi, t, distance parameter)`; the parameter is 1
/// at `through`.
pub fn line_intersect(from: Point, through: Point, surface: &LayerSurface) -> Option<(f64, f64, f64)> {
    let d = [through[0] - from[0], through[1] - from[1], through[2] - from[2]];
    let lambda = match surface.kind {
        SurfaceKind::Cylinder { radius, .. } => {
            let a = d[0] * d[0] + d[1] * d[1];
            if a == 0.0 {
                return None;
            }
            let b = from[0] * d[0] + from[1] * d[1];
            let c = from[0] * from[0] + from[1] * from[1] - radius * radius;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return None;
            }
            let r = disc.sqrt();
            let l1 = (-b - r) / a;
            let l2 = (-b + r) / a;
            if l1 > 0.0 {
                l1
            } else if l2 > 0.0 {
                l2
            } else {
                return None;
            }
        }
        SurfaceKind::Disk { z, .. } => {
            if d[2] == 0.0 {
                return None;
            }
            let l = (z - from[2]) / d[2];
            if l <= 0.0 {
                return None;
            }
            l
        }
    };
    let p = [from[0] + lambda * d[0], from[1] + lambda * d[1], from[2] + lambda * d[2]];
    let (phi, t) = surface.coords_of(p);
    Some((normalize_phi(phi), t, lambda))
}

/// Projects the straight line `from -> through` onto `surface`. `None` when
/// the forward ray misses the surface or lands outside its bounds.
pub fn line_project(from: Point, through: Point, surface: &LayerSurface) -> Option<(f64, f64)> {
    let (phi, t, _) = line_intersect(from, through, surface)?;
    surface.contains_t(t, 0.0).then_some((phi, t))
}
