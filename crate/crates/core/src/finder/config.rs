//! Pass parameters and the pass schedule, with TOML round-tripping.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Detector, LayerKey, LayerSurface, SurfaceKind};
use crate::helix::GEV_PER_TESLA_METER;

/// Full widths of a search window: `dphi` in rad, `dt` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSize {
    pub dphi: f64,
    pub dt: f64,
}

impl WindowSize {
    pub const fn new(dphi: f64, dt: f64) -> Self {
        WindowSize { dphi, dt }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.dphi > 0.0 && self.dphi <= TAU && self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation(format!(
                "{what}: window ({}, {}) needs 0 < dphi <= 2 pi and 0 < dt < inf",
                self.dphi, self.dt
            )));
        }
        Ok(())
    }

    pub fn max(self, other: WindowSize) -> WindowSize {
        WindowSize::new(self.dphi.max(other.dphi), self.dt.max(other.dt))
    }

    pub fn scaled(self, kphi: f64, kt: f64) -> WindowSize {
        WindowSize::new((self.dphi * kphi).min(TAU), self.dt * kt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerWindow {
    pub layer: LayerKey,
    pub dphi: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassConfig {
    #[serde(default)]
    pub name: String,
    /// Two layers when seeding from the origin, three otherwise.
    pub base_layers: Vec<LayerKey>,
    #[serde(default)]
    pub use_origin_seed: bool,
    /// Window on the second base layer around the origin-to-hit1 line.
    /// Unused when seeding from the origin.
    pub window_l2: WindowSize,
    /// Window on the last base layer around the line through the two
    /// previous seed points.
    pub window_l3: WindowSize,
    /// Per-layer prolongation windows. Layers not listed use
    /// `default_prolong_mm` in both coordinates.
    #[serde(default)]
    pub prolong_windows: Vec<LayerWindow>,
    #[serde(default = "default_prolong_mm")]
    pub default_prolong_mm: f64,
    pub pickup_window: WindowSize,
    /// Hits up to this far off a taken hit's surface (radially on cylinders,
    /// along z on disks) can be picked up, mm.
    #[serde(default = "default_pickup_depth")]
    pub pickup_depth: f64,
    /// mm
    pub z_residual_cut: f64,
    #[serde(default = "default_max_missing")]
    pub max_missing_layers: usize,
    #[serde(default = "default_min_hits")]
    pub min_hits: usize,
    #[serde(default = "default_min_hits")]
    pub selection_min_hits: usize,
    #[serde(default = "default_max_branches")]
    pub max_branches: usize,
    /// mm; crossings this close to a layer edge never count as missing.
    #[serde(default = "default_edge_margin")]
    pub edge_margin: f64,
    #[serde(default = "default_true")]
    pub inward: bool,
}

fn default_prolong_mm() -> f64 {
    5.0
}
fn default_pickup_depth() -> f64 {
    1.0
}
fn default_max_missing() -> usize {
    1
}
fn default_min_hits() -> usize {
    3
}
fn default_max_branches() -> usize {
    4
}
fn default_edge_margin() -> f64 {
    crate::helix::EDGE_MARGIN
}
fn default_true() -> bool {
    true
}

impl PassConfig {
    pub fn validate(&self) -> Result<()> {
        let want = if self.use_origin_seed { 2 } else { 3 };
        if self.base_layers.len() != want {
            return Err(Error::validation(format!(
                "pass {:?}: {} base layers given, {} needed{}",
                self.name,
                self.base_layers.len(),
                want,
                if self.use_origin_seed { " with origin seeding" } else { "" }
            )));
        }
        let mut seen = self.base_layers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.base_layers.len() {
            return Err(Error::validation(format!("pass {:?}: repeated base layer", self.name)));
        }
        self.window_l2.validate("window_l2")?;
        self.window_l3.validate("window_l3")?;
        self.pickup_window.validate("pickup_window")?;
        for w in &self.prolong_windows {
            WindowSize::new(w.dphi, w.dt).validate(&format!("prolongation window of {}", w.layer))?;
        }
        if !(self.default_prolong_mm > 0.0) {
            return Err(Error::validation("default_prolong_mm must be positive"));
        }
        if !(self.pickup_depth >= 0.0) {
            return Err(Error::validation("pickup_depth must be non-negative"));
        }
        if !(self.z_residual_cut >= 0.0) {
            return Err(Error::validation("z_residual_cut must be non-negative"));
        }
        if self.min_hits < 3 || self.selection_min_hits < 3 {
            return Err(Error::validation(format!(
                "pass {:?}: min_hits and selection_min_hits must be at least 3",
                self.name
            )));
        }
        if !(self.edge_margin >= 0.0) {
            return Err(Error::validation("edge_margin must be non-negative"));
        }
        Ok(())
    }

    /// Checks that every layer the pass names exists.
    pub fn validate_for(&self, detector: &Detector) -> Result<()> {
        self.validate()?;
        for key in self.base_layers.iter().chain(self.prolong_windows.iter().map(|w| &w.layer)) {
            detector.get(*key)?;
        }
        Ok(())
    }

    /// Prolongation window for `layer`.
    pub fn prolong_window(&self, layer: &LayerSurface) -> WindowSize {
        self.prolong_windows
            .iter()
            .find(|w| w.layer == layer.key)
            .map(|w| WindowSize::new(w.dphi, w.dt))
            .unwrap_or_else(|| mm_window(layer, self.default_prolong_mm))
    }

    /// Prolongation windows indexed like `detector.layers()`.
    pub fn prolong_table(&self, detector: &Detector) -> Vec<WindowSize> {
        let listed: HashMap<LayerKey, WindowSize> = self
            .prolong_windows
            .iter()
            .map(|w| (w.layer, WindowSize::new(w.dphi, w.dt)))
            .collect();
        detector
            .layers()
            .iter()
            .map(|l| listed.get(&l.key).copied().unwrap_or_else(|| mm_window(l, self.default_prolong_mm)))
            .collect()
    }
}

/// A square window of `mm` on the surface, using the smallest radius of the
/// layer to turn length into angle.
pub fn mm_window(layer: &LayerSurface, mm: f64) -> WindowSize {
    WindowSize::new((mm / layer.inner_radius()).min(TAU), mm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub passes: Vec<PassConfig>,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.passes.is_empty() {
            return Err(Error::validation("schedule has no passes"));
        }
        self.passes.iter().try_for_each(PassConfig::validate)
    }

    pub fn validate_for(&self, detector: &Detector) -> Result<()> {
        self.validate()?;
        self.passes.iter().try_for_each(|p| p.validate_for(detector))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Schedule = toml::from_str(text).map_err(|e| Error::validation(format!("schedule: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schedule serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Validation(m) => Error::validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Twelve passes for `detector`: four tightness levels, each running a
    /// three-layer seed on the innermost cylinders and two origin seeds.
    pub fn default_for(detector: &Detector) -> Schedule {
        default_schedule(detector, &Tightness::LEVELS)
    }
}

/// Knobs of one tightness level.
#[derive(Debug, Clone, Copy)]
pub struct Tightness {
    pub name: &'static str,
    /// Lowest transverse momentum the seed windows accept, GeV.
    pub min_pt: f64,
    /// Prolongation window width, mm.
    pub prolong_mm: f64,
    /// z residual cut for three-hit seeds, mm.
    pub z_cut: f64,
    pub selection_min_hits: usize,
}

impl Tightness {
    pub const LEVELS: [Tightness; 4] = [
        Tightness {
            name: "tight",
            min_pt: 2.0,
            prolong_mm: 2.0,
            z_cut: 0.5,
            selection_min_hits: 6,
        },
        Tightness {
            name: "medium",
            min_pt: 0.7,
            prolong_mm: 3.0,
            z_cut: 1.0,
            selection_min_hits: 5,
        },
        Tightness {
            name: "loose",
            min_pt: 0.3,
            prolong_mm: 5.0,
            z_cut: 2.0,
            selection_min_hits: 4,
        },
        Tightness {
            name: "very-loose",
            min_pt: 0.13,
            prolong_mm: 8.0,
            z_cut: 4.0,
            selection_min_hits: 3,
        },
    ];
}

/// Beam-spot reach used to size seeding windows along the beam, mm.
const Z0_REACH: f64 = 220.0;

/// Margins added to the seeding windows (full width): rad and mm.
const SEED_MARGIN: (f64, f64) = (0.004, 4.0);

/// Azimuthal bend, rad, between a straight line through points at radii
/// `ra < rb` (with `ra = 0` for the origin) and a circle of radius `big_r`
/// through the origin, evaluated at radius `rc`.
fn bend(ra: f64, rb: f64, rc: f64, big_r: f64) -> f64 {
    // small-angle parabola y = x^2 / (2R)
    ((rc - ra) * (rc - rb) / (2.0 * big_r * rc)).abs()
}

fn seed_layers(detector: &Detector) -> Vec<&LayerSurface> {
    let mut cyl: Vec<&LayerSurface> = detector.layers().iter().filter(|l| !l.is_disk()).collect();
    if cyl.len() < 3 {
        cyl = detector.layers().iter().collect();
    }
    cyl.truncate(3);
    cyl
}

fn default_schedule(detector: &Detector, levels: &[Tightness]) -> Schedule {
    let base = seed_layers(detector);
    if base.len() < 3 {
        return Schedule { passes: Vec::new() };
    }
    let bz = detector
        .fields()
        .first()
        .map(|f| f.eval(0.0, crate::geometry::FieldVariant::Seed).abs())
        .unwrap_or(crate::geometry::DEFAULT_BZ);
    let radius = |l: &LayerSurface| match l.kind {
        SurfaceKind::Cylinder { radius, .. } => radius,
        SurfaceKind::Disk { .. } => l.typical_radius(),
    };
    let (r1, r2, r3) = (radius(base[0]), radius(base[1]), radius(base[2]));
    let mut passes = Vec::new();
    for lv in levels {
        let big_r = lv.min_pt / (GEV_PER_TESLA_METER * bz) * 1e3;
        let prolong = detector
            .layers()
            .iter()
            .map(|l| {
                let w = mm_window(l, lv.prolong_mm);
                LayerWindow {
                    layer: l.key,
                    dphi: w.dphi,
                    dt: w.dt,
                }
            })
            .collect::<Vec<_>>();
        let pickup = WindowSize::new(0.004, 1.0);
        // line from the origin through a hit at ra, evaluated at rb
        let from_origin = |ra: f64, rb: f64| {
            WindowSize::new(
                2.0 * bend(0.0, ra, rb, big_r) + SEED_MARGIN.0,
                2.0 * Z0_REACH * (rb / ra - 1.0) + SEED_MARGIN.1,
            )
        };
        let through = |ra: f64, rb: f64, rc: f64| {
            WindowSize::new(2.0 * bend(ra, rb, rc, big_r) + SEED_MARGIN.0, 2.0 * lv.prolong_mm + SEED_MARGIN.1)
        };
        let common = |name: String, layers: Vec<LayerKey>, origin: bool, l2: WindowSize, l3: WindowSize, z: f64| {
            PassConfig {
                name,
                base_layers: layers,
                use_origin_seed: origin,
                window_l2: l2,
                window_l3: l3,
                prolong_windows: prolong.clone(),
                default_prolong_mm: lv.prolong_mm,
                pickup_window: pickup,
                pickup_depth: 1.0,
                z_residual_cut: z,
                max_missing_layers: 1,
                min_hits: 3,
                selection_min_hits: lv.selection_min_hits,
                max_branches: 4,
                edge_margin: crate::helix::EDGE_MARGIN,
                inward: true,
            }
        };
        passes.push(common(
            format!("{}-triplet", lv.name),
            vec![base[0].key, base[1].key, base[2].key],
            false,
            from_origin(r1, r2),
            through(r1, r2, r3),
            lv.z_cut,
        ));
        passes.push(common(
            format!("{}-origin-12", lv.name),
            vec![base[0].key, base[1].key],
            true,
            from_origin(r1, r2),
            from_origin(r1, r2),
            Z0_REACH,
        ));
        passes.push(common(
            format!("{}-origin-23", lv.name),
            vec![base[1].key, base[2].key],
            true,
            from_origin(r2, r3),
            from_origin(r2, r3),
            Z0_REACH,
        ));
    }
    Schedule { passes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_detector;

    #[test]
    fn default_has_twelve_valid_passes() {
        let det = default_detector();
        let s = Schedule::default_for(&det);
        assert_eq!(s.passes.len(), 12);
        s.validate_for(&det).unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let s = Schedule::default_for(&default_detector());
        let back = Schedule::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn shipped_schedule_matches_generated_one() {
        let shipped = include_str!("../../data/default_schedule.toml");
        assert_eq!(Schedule::from_toml(shipped).unwrap(), Schedule::default_for(&default_detector()));
    }

    #[test]
    fn rejects_bad_passes() {
        let mut s = Schedule::default_for(&default_detector());
        s.passes[0].base_layers.pop();
        assert!(s.validate().is_err());
        let mut s = Schedule::default_for(&default_detector());
        s.passes[1].min_hits = 2;
        assert!(s.validate().is_err());
        let mut s = Schedule::default_for(&default_detector());
        s.passes[2].pickup_window.dt = 0.0;
        assert!(s.validate().is_err());
        assert!(Schedule { passes: vec![] }.validate().is_err());
    }

    #[test]
    fn unknown_layer_rejected() {
        let det = default_detector();
        let mut s = Schedule::default_for(&det);
        s.passes[0].base_layers[0] = LayerKey::new(99, 2);
        assert!(s.validate().is_ok());
        assert!(s.validate_for(&det).is_err());
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let text = r#"
            [[passes]]
            base_layers = [[8, 2], [8, 4], [8, 6]]
            window_l2 = { dphi = 0.1, dt = 500.0 }
            window_l3 = { dphi = 0.05, dt = 10.0 }
            pickup_window = { dphi = 0.004, dt = 1.0 }
            z_residual_cut = 1.0
        "#;
        let s = Schedule::from_toml(text).unwrap();
        let p = &s.passes[0];
        assert_eq!((p.max_missing_layers, p.min_hits, p.max_branches), (1, 3, 4));
        assert!(p.inward && !p.use_origin_seed);
        let det = default_detector();
        let w = p.prolong_window(det.layer(0));
        assert_eq!(w.dt, 5.0);
        assert!(Schedule::from_toml("[[passes]]\nbogus = 1\n").is_err());
    }
}
