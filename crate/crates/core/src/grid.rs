//! Per-layer `(phi, t)` search grid.
//!
//! The grid is two flat arrays: `cells` holds `(first, count)` ranges into
//! `hits`, which stores hit copies ordered by cell. Around the interior there
//! is one column on each side holding copies of the opposite edge column with
//! `phi` shifted by `2 pi`, and outside that a ring of empty border cells, so
//! a window query never branches on the seam and never leaves the array.
//!
//! ```text
//!   col:  0      1        2 .. n_phi+1    n_phi+2     n_phi+3
//!         border overlap  interior        overlap     border
//! ```
//!
//! Cells are half-open in both coordinates and at least as large as any
//! window queried, so a window touches at most two columns and two rows.

use std::f64::consts::{PI, TAU};

use crate::event::HitId;

/// Upper bound on interior cells per layer. Beyond it cells are enlarged.
pub const MAX_CELLS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHit {
    pub phi: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub hit_id: HitId,
    /// Field for the seed, inward and outward variants, Tesla.
    pub field: [f64; 3],
    /// Position of the hit in the caller's source array.
    pub source: u32,
}

impl GridHit {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn r(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Axis-aligned `(phi, t)` window of full widths `dphi`, `dt` around a center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub phi: f64,
    pub t: f64,
    pub dphi: f64,
    pub dt: f64,
}

impl Window {
    /// Whether a stored `(phi, t)` lies in `[c - w/2, c + w/2)` on both axes.
    #[inline]
    pub fn contains_stored(&self, phi: f64, t: f64) -> bool {
        let (hp, ht) = (0.5 * self.dphi, 0.5 * self.dt);
        phi >= self.phi - hp && phi < self.phi + hp && t >= self.t - ht && t < self.t + ht
    }

    /// Same test for an unshifted hit: also tries the copies at `phi +- 2 pi`,
    /// exactly as they are stored in the overlap columns.
    #[inline]
    pub fn contains(&self, phi: f64, t: f64) -> bool {
        self.contains_stored(phi, t) || self.contains_stored(phi - TAU, t) || self.contains_stored(phi + TAU, t)
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrid {
    dphi: f64,
    dt: f64,
    n_phi: usize,
    n_t: usize,
    t_min: f64,
    cells: Vec<(u32, u32)>,
    hits: Vec<GridHit>,
    n_source: usize,
}

impl LayerGrid {
    /// Builds a grid whose cells are at least `cell` = `(dphi, dt)` wide and
    /// whose `t` extent covers `t_range` and every hit.
    ///
    /// Two passes over the hits (count, scatter) and two over the cells
    /// (prefix offsets, overlap fill).
    pub fn build(hits: &[GridHit], cell: (f64, f64), t_range: (f64, f64)) -> LayerGrid {
        Self::build_limited(hits, cell, t_range, MAX_CELLS)
    }

    /// Like [`build`](Self::build), with cells enlarged further until there
    /// are at most `max_cells` interior cells.
    pub fn build_limited(hits: &[GridHit], cell: (f64, f64), t_range: (f64, f64), max_cells: usize) -> LayerGrid {
        assert!(cell.0 > 0.0 && cell.1 > 0.0, "cell size must be positive");
        let (mut lo, mut hi) = t_range;
        for h in hits {
            lo = lo.min(h.t);
            hi = hi.max(h.t);
        }
        if !(hi > lo) {
            hi = lo + cell.1;
        }
        let mut n_phi = ((TAU / cell.0).floor() as usize).max(1);
        let mut n_t = (((hi - lo) / cell.1).floor() as usize).max(1);
        while n_phi * n_t > max_cells.clamp(1, MAX_CELLS) && n_phi * n_t > 1 {
            if n_phi >= n_t {
                n_phi = (n_phi / 2).max(1);
            } else {
                n_t = (n_t / 2).max(1);
            }
        }
        let mut grid = LayerGrid {
            dphi: TAU / n_phi as f64,
            dt: (hi - lo) / n_t as f64,
            n_phi,
            n_t,
            t_min: lo,
            cells: vec![(0, 0); (n_phi + 4) * (n_t + 2)],
            hits: Vec::new(),
            n_source: hits.len(),
        };
        grid.fill(hits);
        grid
    }

    fn rows(&self) -> usize {
        self.n_t + 2
    }

    /// Interior column of `phi`, 0-based; `phi = pi` lands in the last one.
    fn col_of(&self, phi: f64) -> usize {
        (((phi + PI) / self.dphi).floor() as isize).clamp(0, self.n_phi as isize - 1) as usize
    }

    fn row_of(&self, t: f64) -> usize {
        (((t - self.t_min) / self.dt).floor() as isize).clamp(0, self.n_t as isize - 1) as usize
    }

    /// Flat cell index of interior `(col, row)` (0-based interior coordinates).
    fn cell_index(&self, col: usize, row: usize) -> usize {
        (col + 2) * self.rows() + row + 1
    }

    fn fill(&mut self, hits: &[GridHit]) {
        let rows = self.rows();
        let last = self.n_phi - 1;
        // counting pass; edge columns also count their overlap copies
        let mut keys = Vec::with_capacity(hits.len());
        for h in hits {
            let (c, r) = (self.col_of(h.phi), self.row_of(h.t));
            let k = self.cell_index(c, r);
            self.cells[k].1 += 1;
            keys.push(k);
            if c == last {
                self.cells[rows + r + 1].1 += 1;
            }
            if c == 0 {
                self.cells[(self.n_phi + 2) * rows + r + 1].1 += 1;
            }
        }
        // prefix offsets
        let mut next = 0u32;
        for cell in &mut self.cells {
            cell.0 = next;
            next += cell.1;
        }
        // scatter
        let placeholder = GridHit {
            phi: 0.0,
            t: 0.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
            hit_id: 0,
            field: [0.0; 3],
            source: 0,
        };
        self.hits = vec![placeholder; next as usize];
        let mut cursor: Vec<u32> = self.cells.iter().map(|c| c.0).collect();
        for (h, &k) in hits.iter().zip(&keys) {
            self.hits[cursor[k] as usize] = *h;
            cursor[k] += 1;
        }
        // overlap fill, copying from the interior edge columns
        for r in 0..self.n_t {
            for (from, to, shift) in [(last, 1, -TAU), (0, self.n_phi + 2, TAU)] {
                let src = self.cell_index(from, r);
                let dst = to * rows + r + 1;
                let (first, count) = self.cells[src];
                let out = self.cells[dst].0 as usize;
                for i in 0..count as usize {
                    let mut h = self.hits[first as usize + i];
                    h.phi += shift;
                    self.hits[out + i] = h;
                }
            }
        }
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (self.dphi, self.dt)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_phi, self.n_t)
    }

    /// Number of distinct hits the grid was built from.
    pub fn len(&self) -> usize {
        self.n_source
    }

    pub fn is_empty(&self) -> bool {
        self.n_source == 0
    }

    /// Hit count of interior cell `(col, row)`.
    pub fn cell_count(&self, col: usize, row: usize) -> usize {
        self.cells[self.cell_index(col, row)].1 as usize
    }

    /// Every source hit once, in cell order.
    pub fn hits(&self) -> impl Iterator<Item = &GridHit> {
        (0..self.n_phi).flat_map(move |c| {
            let a = self.cells[self.cell_index(c, 0)].0 as usize;
            let b = {
                let (f, n) = self.cells[self.cell_index(c, self.n_t - 1)];
                (f + n) as usize
            };
            self.hits[a..b].iter()
        })
    }

    /// Query with a window equal to the cell size.
    pub fn query(&self, phi: f64, t: f64) -> Vec<GridHit> {
        let mut out = Vec::new();
        self.query_within(
            &Window {
                phi,
                t,
                dphi: self.dphi,
                dt: self.dt,
            },
            &mut out,
        );
        out
    }

    /// Appends to `out` the hits inside `w`. `w.phi` must be in `(-pi, pi]`
    /// and the widths must not exceed the cell size.
    pub fn query_within(&self, w: &Window, out: &mut Vec<GridHit>) {
        debug_assert!(w.dphi <= self.dphi * (1.0 + 1e-12) && w.dt <= self.dt * (1.0 + 1e-12));
        let rows = self.rows() as isize;
        // columns relative to the interior, may be -1 or n_phi (overlap)
        let c0 = ((w.phi - 0.5 * w.dphi + PI) / self.dphi).floor() as isize;
        let c1 = ((w.phi + 0.5 * w.dphi + PI) / self.dphi).floor() as isize;
        let clamp_c = |c: isize| c.clamp(-2, self.n_phi as isize + 1);
        let r0 = ((w.t - 0.5 * w.dt - self.t_min) / self.dt).floor() as isize;
        let r1 = ((w.t + 0.5 * w.dt - self.t_min) / self.dt).floor() as isize;
        let clamp_r = |r: isize| r.clamp(-1, self.n_t as isize);
        let (r0, r1) = (clamp_r(r0), clamp_r(r1));
        for c in clamp_c(c0)..=clamp_c(c1) {
            let base = (c + 2) * rows;
            let (first, _) = self.cells[(base + r0 + 1) as usize];
            let (last_first, last_count) = self.cells[(base + r1 + 1) as usize];
            // rows of one column are contiguous in `hits`
            for h in &self.hits[first as usize..(last_first + last_count) as usize] {
                if w.contains_stored(h.phi, h.t) {
                    out.push(*h);
                }
            }
        }
    }
}

/// Hits whose mask entry is `true`, in their original order.
pub fn retain(hits: &[GridHit], alive: &[bool]) -> Vec<GridHit> {
    assert_eq!(hits.len(), alive.len(), "mask length must match hit count");
    hits.iter().zip(alive).filter(|(_, a)| **a).map(|(h, _)| *h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn hit(id: u64, phi: f64, t: f64) -> GridHit {
        GridHit {
            phi,
            t,
            x: phi.cos(),
            y: phi.sin(),
            z: t,
            hit_id: id,
            field: [2.0; 3],
            source: id as u32,
        }
    }

    fn random_hits(rng: &mut ChaCha8Rng, n: usize, t_range: (f64, f64)) -> Vec<GridHit> {
        (0..n)
            .map(|i| {
                let phi = crate::event::normalize_phi(rng.random_range(-PI..PI));
                hit(i as u64 + 1, phi, rng.random_range(t_range.0..t_range.1))
            })
            .collect()
    }

    /// Linear scan with the wrap done on the difference instead of on copies.
    fn oracle(hits: &[GridHit], w: &Window) -> BTreeSet<u64> {
        hits.iter()
            .filter(|h| {
                let d = crate::geometry::wrap_delta_phi(h.phi - w.phi);
                let dt = h.t - w.t;
                d >= -0.5 * w.dphi && d < 0.5 * w.dphi && dt >= -0.5 * w.dt && dt < 0.5 * w.dt
            })
            .map(|h| h.hit_id)
            .collect()
    }

    fn ids(v: &[GridHit]) -> BTreeSet<u64> {
        v.iter().map(|h| h.hit_id).collect()
    }

    #[test]
    fn empty_grid() {
        let g = LayerGrid::build(&[], (0.1, 10.0), (-100.0, 100.0));
        assert!(g.cells.iter().all(|c| c.1 == 0));
        assert!(g.query(0.0, 0.0).is_empty());
        assert!(g.is_empty());
    }

    #[test]
    fn single_hit_single_cell() {
        let g = LayerGrid::build(&[hit(1, 0.05, 3.0)], (0.1, 10.0), (-100.0, 100.0));
        let (n_phi, n_t) = g.shape();
        let (c, r) = (g.col_of(0.05), g.row_of(3.0));
        for col in 0..n_phi {
            for row in 0..n_t {
                assert_eq!(g.cell_count(col, row), usize::from((col, row) == (c, r)));
            }
        }
        assert_eq!(g.cells[g.cell_index(c, r)], (0, 1));
        assert_eq!(ids(&g.query(0.05, 3.0)), BTreeSet::from([1]));
    }

    #[test]
    fn cells_not_smaller_than_request() {
        let g = LayerGrid::build(&[], (0.3, 7.0), (0.0, 100.0));
        let (dp, dt) = g.cell_size();
        assert!(dp >= 0.3 && dt >= 7.0);
        assert_eq!(g.shape(), (20, 14));
    }

    #[test]
    fn histogram_matches_direct_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hits = random_hits(&mut rng, 10_000, (-500.0, 500.0));
        let g = LayerGrid::build(&hits, (0.05, 20.0), (-500.0, 500.0));
        let (n_phi, n_t) = g.shape();
        let (dp, dt) = g.cell_size();
        let mut direct = vec![0usize; n_phi * n_t];
        for h in &hits {
            let c = (((h.phi + PI) / dp) as usize).min(n_phi - 1);
            let r = (((h.t + 500.0) / dt) as usize).min(n_t - 1);
            direct[c * n_t + r] += 1;
        }
        let mut total = 0;
        for c in 0..n_phi {
            for r in 0..n_t {
                assert_eq!(g.cell_count(c, r), direct[c * n_t + r]);
                total += g.cell_count(c, r);
            }
        }
        assert_eq!(total, hits.len());
        assert_eq!(g.hits().count(), hits.len());
    }

    #[test]
    fn phi_pi_goes_to_last_column() {
        let g = LayerGrid::build(&[hit(1, PI, 0.0)], (0.1, 10.0), (-10.0, 10.0));
        assert_eq!(g.col_of(PI), g.shape().0 - 1);
        assert_eq!(ids(&g.query(-PI + 0.01, 0.0)), BTreeSet::from([1]));
        assert_eq!(ids(&g.query(PI, 0.0)), BTreeSet::from([1]));
    }

    #[test]
    fn randomized_against_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let hits = random_hits(&mut rng, 1000, (-300.0, 300.0));
        let g = LayerGrid::build(&hits, (0.2, 40.0), (-300.0, 300.0));
        let (cp, ct) = g.cell_size();
        let mut buf = Vec::new();
        for i in 0..2000 {
            let phi = if i % 4 == 0 {
                // straddle the seam
                let e = rng.random_range(0.0..0.5 * cp);
                if i % 8 == 0 { PI - e } else { -PI + e + 1e-12 }
            } else {
                rng.random_range(-PI..PI) + 1e-12
            };
            let w = Window {
                phi,
                t: rng.random_range(-350.0..350.0),
                dphi: rng.random_range(0.0..=cp),
                dt: rng.random_range(0.0..=ct),
            };
            buf.clear();
            g.query_within(&w, &mut buf);
            assert_eq!(buf.len(), ids(&buf).len(), "duplicate ids");
            assert_eq!(ids(&buf), oracle(&hits, &w));
        }
    }

    #[test]
    fn retain_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = random_hits(&mut rng, 300, (0.0, 100.0));
        assert_eq!(retain(&hits, &vec![true; 300]), hits);
        assert!(retain(&hits, &vec![false; 300]).is_empty());
        let mask: Vec<bool> = (0..300).map(|_| rng.random_bool(0.5)).collect();
        let kept = retain(&hits, &mask);
        let g = LayerGrid::build(&kept, (0.3, 10.0), (0.0, 100.0));
        for _ in 0..200 {
            let w = Window {
                phi: rng.random_range(-PI..PI),
                t: rng.random_range(0.0..100.0),
                dphi: 0.3,
                dt: 10.0,
            };
            let mut out = Vec::new();
            g.query_within(&w, &mut out);
            assert_eq!(ids(&out), oracle(&kept, &w));
        }
    }

    #[test]
    fn tiny_phi_count() {
        // one interior column: both overlap columns hold the whole layer
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hits = random_hits(&mut rng, 100, (0.0, 10.0));
        let g = LayerGrid::build(&hits, (4.0, 10.0), (0.0, 10.0));
        assert_eq!(g.shape().0, 1);
        for _ in 0..100 {
            let w = Window {
                phi: rng.random_range(-PI..PI),
                t: 5.0,
                dphi: 4.0,
                dt: 10.0,
            };
            let mut out = Vec::new();
            g.query_within(&w, &mut out);
            assert_eq!(out.len(), ids(&out).len());
            assert_eq!(ids(&out), oracle(&hits, &w));
        }
    }

    proptest::proptest! {
        #[test]
        fn query_equals_scan(
            seed in 0u64..10_000,
            n in 0usize..200,
            cp in 0.01f64..1.0,
            ct in 1.0f64..50.0,
            phi in -PI..PI,
            t in -120.0f64..120.0,
            fp in 0.0f64..=1.0,
            ft in 0.0f64..=1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hits = random_hits(&mut rng, n, (-100.0, 100.0));
            let g = LayerGrid::build(&hits, (cp, ct), (-100.0, 100.0));
            let (gp, gt) = g.cell_size();
            let w = Window { phi: crate::event::normalize_phi(phi), t, dphi: fp * gp, dt: ft * gt };
            let mut out = Vec::new();
            g.query_within(&w, &mut out);
            proptest::prop_assert_eq!(out.len(), ids(&out).len());
            proptest::prop_assert_eq!(ids(&out), oracle(&hits, &w));
        }
    }
}
