//! Detector layers, their `(phi, t)` surface coordinates and the per-layer
//! field model.
//!
//! Every layer is either a cylinder around the beam axis (`t = z`) or a disk
//! perpendicular to it (`t = r`). The detector keeps its layers sorted by
//! radius and then by `|z|`; that order is the outward traversal order.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{normalize_phi, Hit};

/// Default distance a hit may sit off its nominal surface, mm.
pub const SURFACE_TOLERANCE: f64 = 2.0;

/// Central solenoid field, tesla.
pub const DEFAULT_BZ: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct LayerKey {
    pub volume_id: u32,
    pub layer_id: u32,
}

impl LayerKey {
    pub const fn new(volume_id: u32, layer_id: u32) -> Self {
        LayerKey {
            volume_id,
            layer_id,
        }
    }
}

impl From<(u32, u32)> for LayerKey {
    fn from((v, l): (u32, u32)) -> Self {
        LayerKey::new(v, l)
    }
}

impl From<LayerKey> for (u32, u32) {
    fn from(k: LayerKey) -> Self {
        (k.volume_id, k.layer_id)
    }
}

impl fmt::Display for LayerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.volume_id, self.layer_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subdetector {
    Pixel,
    ShortStrip,
    LongStrip,
}

impl Subdetector {
    pub fn as_str(self) -> &'static str {
        match self {
            Subdetector::Pixel => "pixel",
            Subdetector::ShortStrip => "short_strip",
            Subdetector::LongStrip => "long_strip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pixel" => Some(Subdetector::Pixel),
            "short_strip" => Some(Subdetector::ShortStrip),
            "long_strip" => Some(Subdetector::LongStrip),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    Cylinder { radius: f64, z_min: f64, z_max: f64 },
    Disk { z: f64, r_min: f64, r_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSurface {
    pub key: LayerKey,
    pub kind: SurfaceKind,
    pub subdetector: Subdetector,
}

impl LayerSurface {
    pub fn cylinder(key: LayerKey, radius: f64, z_min: f64, z_max: f64, sub: Subdetector) -> Self {
        LayerSurface {
            key,
            kind: SurfaceKind::Cylinder {
                radius,
                z_min,
                z_max,
            },
            subdetector: sub,
        }
    }

    pub fn disk(key: LayerKey, z: f64, r_min: f64, r_max: f64, sub: Subdetector) -> Self {
        LayerSurface {
            key,
            kind: SurfaceKind::Disk { z, r_min, r_max },
            subdetector: sub,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            SurfaceKind::Cylinder {
                radius,
                z_min,
                z_max,
            } => radius > 0.0 && z_min < z_max && radius.is_finite() && z_min.is_finite() && z_max.is_finite(),
            SurfaceKind::Disk { z, r_min, r_max } => {
                0.0 <= r_min && r_min < r_max && z.is_finite() && r_max.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "layer {} has invalid dimensions {:?}",
                self.key, self.kind
            )))
        }
    }

    pub fn is_disk(&self) -> bool {
        matches!(self.kind, SurfaceKind::Disk { .. })
    }

    /// Bounds of the `t` coordinate.
    pub fn t_range(&self) -> (f64, f64) {
        match self.kind {
            SurfaceKind::Cylinder { z_min, z_max, .. } => (z_min, z_max),
            SurfaceKind::Disk { r_min, r_max, .. } => (r_min, r_max),
        }
    }

    /// Radius of a cylinder, or the inner radius of a disk.
    pub fn inner_radius(&self) -> f64 {
        match self.kind {
            SurfaceKind::Cylinder { radius, .. } => radius,
            SurfaceKind::Disk { r_min, .. } => r_min,
        }
    }

    /// Radius used to turn azimuthal windows into lengths: the cylinder
    /// radius or the disk's mid radius.
    pub fn typical_radius(&self) -> f64 {
        match self.kind {
            SurfaceKind::Cylinder { radius, .. } => radius,
            SurfaceKind::Disk { r_min, r_max, .. } => 0.5 * (r_min + r_max),
        }
    }

    /// Signed distance of a point from the surface along its normal.
    pub fn offset_of(&self, p: [f64; 3]) -> f64 {
        match self.kind {
            SurfaceKind::Cylinder { radius, .. } => p[0].hypot(p[1]) - radius,
            SurfaceKind::Disk { z, .. } => p[2] - z,
        }
    }

    /// `(phi, t)` of a point, without any on-surface check.
    pub fn coords_of(&self, p: [f64; 3]) -> (f64, f64) {
        let phi = normalize_phi(p[1].atan2(p[0]));
        let t = match self.kind {
            SurfaceKind::Cylinder { .. } => p[2],
            SurfaceKind::Disk { .. } => p[0].hypot(p[1]),
        };
        (phi, t)
    }

    /// Inverse of [`coords_of`](Self::coords_of) for points on the surface.
    pub fn point_at(&self, phi: f64, t: f64) -> [f64; 3] {
        match self.kind {
            SurfaceKind::Cylinder { radius, .. } => [radius * phi.cos(), radius * phi.sin(), t],
            SurfaceKind::Disk { z, .. } => [t * phi.cos(), t * phi.sin(), z],
        }
    }

    /// Whether `t` lies within the bounds widened by `margin` on both sides.
    pub fn contains_t(&self, t: f64, margin: f64) -> bool {
        let (lo, hi) = self.t_range();
        t >= lo - margin && t <= hi + margin
    }
}

/// `(phi, t)` of a hit on `surface`, rejecting hits further than `tolerance`
/// from it.
pub fn surface_coords(hit: &Hit, surface: &LayerSurface, tolerance: f64) -> Result<(f64, f64)> {
    let p = hit.position();
    let off = surface.offset_of(p);
    if off.abs() > tolerance {
        return Err(Error::Geometry(format!(
            "hit {} is {:.3} mm off layer {} (tolerance {} mm)",
            hit.hit_id, off, surface.key, tolerance
        )));
    }
    Ok(surface.coords_of(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldVariant {
    /// Used when building the local three-hit helix.
    Seed,
    Inward,
    Outward,
}

impl FieldVariant {
    pub const ALL: [FieldVariant; 3] = [FieldVariant::Seed, FieldVariant::Inward, FieldVariant::Outward];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldVariant::Seed => "seed",
            FieldVariant::Inward => "inward",
            FieldVariant::Outward => "outward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "seed" => Some(FieldVariant::Seed),
            "inward" => Some(FieldVariant::Inward),
            "outward" => Some(FieldVariant::Outward),
            _ => None,
        }
    }
}

/// Polynomial `Bz(t)` per field variant for one layer. Coefficients are in
/// increasing power order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerField {
    pub key: LayerKey,
    pub seed: Vec<f64>,
    pub inward: Vec<f64>,
    pub outward: Vec<f64>,
}

impl LayerField {
    pub fn uniform(key: LayerKey, bz: f64) -> Self {
        LayerField {
            key,
            seed: vec![bz],
            inward: vec![bz],
            outward: vec![bz],
        }
    }

    pub fn coefficients(&self, variant: FieldVariant) -> &[f64] {
        match variant {
            FieldVariant::Seed => &self.seed,
            FieldVariant::Inward => &self.inward,
            FieldVariant::Outward => &self.outward,
        }
    }

    pub fn coefficients_mut(&mut self, variant: FieldVariant) -> &mut Vec<f64> {
        match variant {
            FieldVariant::Seed => &mut self.seed,
            FieldVariant::Inward => &mut self.inward,
            FieldVariant::Outward => &mut self.outward,
        }
    }

    pub fn eval(&self, t: f64, variant: FieldVariant) -> f64 {
        eval_poly(self.coefficients(variant), t)
    }
}

pub fn eval_poly(coefficients: &[f64], t: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Ordered layers plus their field model.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    layers: Vec<LayerSurface>,
    fields: Vec<LayerField>,
    index: HashMap<LayerKey, usize>,
}

fn traversal_key(s: &LayerSurface) -> (f64, f64, f64) {
    match s.kind {
        SurfaceKind::Cylinder { radius, .. } => (radius, 0.0, 0.0),
        SurfaceKind::Disk { z, r_min, .. } => (r_min, z.abs(), z),
    }
}

impl Detector {
    /// Builds a detector with a uniform field of [`DEFAULT_BZ`].
    pub fn new(layers: Vec<LayerSurface>) -> Result<Self> {
        let fields = layers.iter().map(|l| LayerField::uniform(l.key, DEFAULT_BZ)).collect();
        Self::with_fields(layers, fields)
    }

    pub fn with_fields(mut layers: Vec<LayerSurface>, fields: Vec<LayerField>) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        layers.sort_by(|a, b| traversal_key(a).partial_cmp(&traversal_key(b)).unwrap());
        let mut index = HashMap::new();
        for (i, l) in layers.iter().enumerate() {
            if index.insert(l.key, i).is_some() {
                return Err(Error::Geometry(format!("duplicate layer {}", l.key)));
            }
        }
        let mut by_key: HashMap<LayerKey, LayerField> = HashMap::new();
        for f in fields {
            if !index.contains_key(&f.key) {
                return Err(Error::Geometry(format!("field given for unknown layer {}", f.key)));
            }
            by_key.insert(f.key, f);
        }
        let fields = layers
            .iter()
            .map(|l| by_key.remove(&l.key).unwrap_or_else(|| LayerField::uniform(l.key, DEFAULT_BZ)))
            .collect();
        Ok(Detector {
            layers,
            fields,
            index,
        })
    }

    pub fn layers(&self) -> &[LayerSurface] {
        &self.layers
    }

    pub fn fields(&self) -> &[LayerField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, idx: usize) -> &LayerSurface {
        &self.layers[idx]
    }

    pub fn index_of(&self, key: LayerKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn layer_of_hit(&self, hit: &Hit) -> Option<usize> {
        self.index_of(LayerKey::new(hit.volume_id, hit.layer_id))
    }

    pub fn get(&self, key: LayerKey) -> Result<&LayerSurface> {
        self.index_of(key)
            .map(|i| &self.layers[i])
            .ok_or_else(|| Error::Geometry(format!("unknown layer {key}")))
    }

    /// Layers after (outward) or before (inward) `idx` in traversal order.
    pub fn traversal(&self, idx: usize, outward: bool) -> Vec<usize> {
        if outward {
            (idx + 1..self.layers.len()).collect()
        } else {
            (0..idx).rev().collect()
        }
    }

    pub fn field_at(&self, key: LayerKey, t: f64, variant: FieldVariant) -> Result<f64> {
        let i = self
            .index_of(key)
            .ok_or_else(|| Error::Geometry(format!("unknown layer {key}")))?;
        Ok(self.fields[i].eval(t, variant))
    }

    pub fn field_by_index(&self, idx: usize, t: f64, variant: FieldVariant) -> f64 {
        self.fields[idx].eval(t, variant)
    }

    pub fn set_fields(&mut self, fields: Vec<LayerField>) -> Result<()> {
        let layers = std::mem::take(&mut self.layers);
        *self = Detector::with_fields(layers, fields)?;
        Ok(())
    }

    /// The built-in nine barrel cylinders plus one disk per side.
    pub fn default_layout() -> Self {
        DetectorLayout::default().build().expect("default layout is valid")
    }
}

/// Free function form of [`Detector::field_at`].
pub fn field_at(detector: &Detector, key: LayerKey, t: f64, variant: FieldVariant) -> Result<f64> {
    detector.field_at(key, t, variant)
}

pub fn default_detector() -> Detector {
    Detector::default_layout()
}

/// Parameters of the built-in detector. Every field may be overridden from a
/// TOML file; missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorLayout {
    pub pixel_radii: Vec<f64>,
    pub pixel_half_length: f64,
    pub short_strip_radii: Vec<f64>,
    pub short_strip_half_length: f64,
    pub long_strip_radii: Vec<f64>,
    pub long_strip_half_length: f64,
    /// `|z|` of each disk pair.
    pub disk_z: Vec<f64>,
    pub disk_r_min: f64,
    pub disk_r_max: f64,
    pub bz: f64,
}

impl Default for DetectorLayout {
    fn default() -> Self {
        DetectorLayout {
            pixel_radii: vec![32.0, 72.0, 116.0],
            pixel_half_length: 500.0,
            short_strip_radii: vec![260.0, 360.0, 500.0],
            short_strip_half_length: 1100.0,
            long_strip_radii: vec![660.0, 820.0, 1020.0],
            long_strip_half_length: 1100.0,
            disk_z: vec![600.0],
            disk_r_min: 120.0,
            disk_r_max: 500.0,
            bz: DEFAULT_BZ,
        }
    }
}

/// Volume ids follow the public dataset: pixel barrel 8, endcaps 7 (-z) and
/// 9 (+z), short strips 13, long strips 17. Layer ids count 2, 4, 6, ...
pub const PIXEL_BARREL: u32 = 8;
pub const PIXEL_ENDCAP_NEG: u32 = 7;
pub const PIXEL_ENDCAP_POS: u32 = 9;
pub const SHORT_STRIP_BARREL: u32 = 13;
pub const LONG_STRIP_BARREL: u32 = 17;

impl DetectorLayout {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("detector layout: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn build(&self) -> Result<Detector> {
        let mut layers = Vec::new();
        let barrels = [
            (PIXEL_BARREL, &self.pixel_radii, self.pixel_half_length, Subdetector::Pixel),
            (SHORT_STRIP_BARREL, &self.short_strip_radii, self.short_strip_half_length, Subdetector::ShortStrip),
            (LONG_STRIP_BARREL, &self.long_strip_radii, self.long_strip_half_length, Subdetector::LongStrip),
        ];
        for (vol, radii, half, sub) in barrels {
            for (i, &r) in radii.iter().enumerate() {
                let key = LayerKey::new(vol, 2 * (i as u32 + 1));
                layers.push(LayerSurface::cylinder(key, r, -half, half, sub));
            }
        }
        let mut disk_z = self.disk_z.clone();
        disk_z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, &z) in disk_z.iter().enumerate() {
            let lid = 2 * (i as u32 + 1);
            layers.push(LayerSurface::disk(
                LayerKey::new(PIXEL_ENDCAP_NEG, lid),
                -z,
                self.disk_r_min,
                self.disk_r_max,
                Subdetector::Pixel,
            ));
            layers.push(LayerSurface::disk(
                LayerKey::new(PIXEL_ENDCAP_POS, lid),
                z,
                self.disk_r_min,
                self.disk_r_max,
                Subdetector::Pixel,
            ));
        }
        let fields = layers.iter().map(|l| LayerField::uniform(l.key, self.bz)).collect();
        Detector::with_fields(layers, fields)
    }
}

// ---------------------------------------------------------------------------
// Geometry and field files

#[derive(Serialize, Deserialize)]
struct GeometryRecord {
    volume_id: u32,
    layer_id: u32,
    kind: String,
    dim1: f64,
    dim2: f64,
    dim3: f64,
    subdetector: String,
}

/// Reads `volume_id,layer_id,kind,dim1,dim2,dim3,subdetector` rows; kind `C`
/// is radius, z_min, z_max and kind `D` is z, r_min, r_max.
pub fn load_geometry(path: &Path) -> Result<Detector> {
    let rows: Vec<GeometryRecord> = crate::event::read_records(path)?;
    let mut layers = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        let line = i as u64 + 2;
        let key = LayerKey::new(r.volume_id, r.layer_id);
        let sub = Subdetector::parse(&r.subdetector)
            .ok_or_else(|| Error::parse(path, line, format!("unknown subdetector {:?}", r.subdetector)))?;
        let layer = match r.kind.as_str() {
            "C" => LayerSurface::cylinder(key, r.dim1, r.dim2, r.dim3, sub),
            "D" => LayerSurface::disk(key, r.dim1, r.dim2, r.dim3, sub),
            other => return Err(Error::parse(path, line, format!("unknown layer kind {other:?}"))),
        };
        layer
            .validate()
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        layers.push(layer);
    }
    Detector::new(layers)
}

/// A layer table, or a [`DetectorLayout`] when the file name ends in `.toml`.
pub fn load_detector(path: &Path) -> Result<Detector> {
    if path.extension().is_some_and(|e| e == "toml") {
        DetectorLayout::load(path)?.build()
    } else {
        load_geometry(path)
    }
}

pub fn write_geometry(detector: &Detector, path: &Path) -> Result<()> {
    let rows = detector.layers().iter().map(|l| {
        let (kind, d) = match l.kind {
            SurfaceKind::Cylinder {
                radius,
                z_min,
                z_max,
            } => ("C", [radius, z_min, z_max]),
            SurfaceKind::Disk { z, r_min, r_max } => ("D", [z, r_min, r_max]),
        };
        GeometryRecord {
            volume_id: l.key.volume_id,
            layer_id: l.key.layer_id,
            kind: kind.to_string(),
            dim1: d[0],
            dim2: d[1],
            dim3: d[2],
            subdetector: l.subdetector.as_str().to_string(),
        }
    });
    crate::event::write_records(
        path,
        &["volume_id", "layer_id", "kind", "dim1", "dim2", "dim3", "subdetector"],
        rows,
    )
}

/// Reads `volume_id,layer_id,variant,c0,c1,...` rows. Rows may carry any
/// number of coefficients. Variants not listed for a layer default to the
/// `seed` polynomial, or to a uniform field when no row is given at all.
pub fn load_fields(path: &Path) -> Result<Vec<LayerField>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut found: HashMap<LayerKey, [Option<Vec<f64>>; 3]> = HashMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::from_csv(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 4 {
            return Err(Error::parse(path, line, "expected at least one coefficient"));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line, format!("column {}: {e}", i + 1)))
        };
        let vid: u32 = rec[0].parse().map_err(|e| Error::parse(path, line, format!("volume_id: {e}")))?;
        let lid: u32 = rec[1].parse().map_err(|e| Error::parse(path, line, format!("layer_id: {e}")))?;
        let variant = FieldVariant::parse(&rec[2])
            .ok_or_else(|| Error::parse(path, line, format!("unknown variant {:?}", &rec[2])))?;
        let coeffs = (3..rec.len())
            .filter(|&i| !rec[i].is_empty())
            .map(num)
            .collect::<Result<Vec<_>>>()?;
        let key = LayerKey::new(vid, lid);
        let slot = found.entry(key).or_insert_with(|| {
            order.push(key);
            [None, None, None]
        });
        slot[variant as usize] = Some(coeffs);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let [seed, inward, outward] = found.remove(&key).unwrap();
            let base = seed
                .clone()
                .or_else(|| inward.clone())
                .or_else(|| outward.clone())
                .unwrap_or_else(|| vec![DEFAULT_BZ]);
            LayerField {
                key,
                seed: seed.unwrap_or_else(|| base.clone()),
                inward: inward.unwrap_or_else(|| base.clone()),
                outward: outward.unwrap_or(base),
            }
        })
        .collect())
}

pub fn write_fields(fields: &[LayerField], path: &Path) -> Result<()> {
    let ncoef = fields
        .iter()
        .flat_map(|f| FieldVariant::ALL.map(|v| f.coefficients(v).len()))
        .max()
        .unwrap_or(1);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["volume_id".to_string(), "layer_id".into(), "variant".into()];
    header.extend((0..ncoef).map(|i| format!("c{i}")));
    wtr.write_record(&header).map_err(|e| Error::from_csv(path, e))?;
    for f in fields {
        for v in FieldVariant::ALL {
            let mut row = vec![
                f.key.volume_id.to_string(),
                f.key.layer_id.to_string(),
                v.as_str().to_string(),
            ];
            row.extend(f.coefficients(v).iter().map(|c| c.to_string()));
            wtr.write_record(&row).map_err(|e| Error::from_csv(path, e))?;
        }
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Wraps an azimuth difference into [-pi, pi).
#[inline]
pub fn wrap_delta_phi(d: f64) -> f64 {
    let mut d = d;
    if d >= PI || d < -PI {
        d = (d + PI).rem_euclid(2.0 * PI) - PI;
    }
    d
}
