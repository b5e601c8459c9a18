//! Per-layer field polynomials measured from truth.
//!
//! Every triplet of consecutive hits on distinct layers of a truth particle
//! is fitted with a unit-field helix; its radius and the particle's true pT
//! give the effective `Bz`. The sample is attributed to the middle hit for
//! the seed variant, to the first hit for the inward variant and to the last
//! hit for the outward variant, at that hit's layer coordinate `t`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::event::{Event, HitId, NOISE};
use crate::geometry::{Detector, FieldVariant, LayerField};
use crate::helix::{fit_three_hits, GEV_PER_TESLA_METER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldFitOptions {
    /// Polynomial degree in `t`.
    pub degree: usize,
    /// Layers with fewer samples than this for a variant get the global mean.
    pub min_samples: usize,
}

impl Default for FieldFitOptions {
    fn default() -> Self {
        FieldFitOptions {
            degree: 2,
            min_samples: 20,
        }
    }
}

type Samples = HashMap<(usize, FieldVariant), Vec<(f64, f64)>>;

fn collect(event: &Event, detector: &Detector, samples: &mut Samples) -> Result<()> {
    if !event.has_truth() {
        return Err(Error::validation(format!("event {} has no truth", event.event_id)));
    }
    let hits: HashMap<HitId, _> = event.hits.iter().map(|h| (h.hit_id, h)).collect();
    let particles = event.particle_map();
    let mut by_particle: HashMap<u64, Vec<HitId>> = HashMap::new();
    for t in &event.truth {
        if t.particle_id != NOISE {
            by_particle.entry(t.particle_id).or_default().push(t.hit_id);
        }
    }
    let mut ids: Vec<_> = by_particle.keys().copied().collect();
    ids.sort_unstable();
    for pid in ids {
        let Some(p) = particles.get(&pid) else { continue };
        if p.q == 0 {
            continue;
        }
        let vertex = [p.vx, p.vy, p.vz];
        let dist = |h: &HitId| {
            let q = hits[h].position();
            (q[0] - vertex[0]).hypot(q[1] - vertex[1]).hypot(q[2] - vertex[2])
        };
        let mut own = by_particle[&pid].clone();
        own.sort_by(|a, b| dist(a).total_cmp(&dist(b)));
        // one hit per layer, in order of flight
        let mut chain: Vec<(usize, [f64; 3])> = Vec::new();
        for h in &own {
            let hit = hits[h];
            let Some(layer) = detector.layer_of_hit(hit) else { continue };
            if chain.iter().all(|(l, _)| *l != layer) {
                chain.push((layer, hit.position()));
            }
        }
        for w in chain.windows(3) {
            let Ok(helix) = fit_three_hits(w[0].1, w[1].1, w[2].1, 1.0) else {
                continue;
            };
            if helix.is_straight() {
                continue;
            }
            let magnitude = p.pt() / (GEV_PER_TESLA_METER * helix.radius() * 1e-3);
            // positive field bends positive charges clockwise
            let bz = -f64::from(p.q.signum()) * f64::from(helix.turn()) * magnitude;
            for (variant, (layer, pos)) in [
                (FieldVariant::Inward, w[0]),
                (FieldVariant::Seed, w[1]),
                (FieldVariant::Outward, w[2]),
            ] {
                let t = detector.layer(layer).coords_of(pos).1;
                samples.entry((layer, variant)).or_default().push((t, bz));
            }
        }
    }
    Ok(())
}

/// Least-squares polynomial through `(t, b)` samples, increasing powers.
pub fn fit_polynomial(samples: &[(f64, f64)], degree: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::validation("no samples to fit"));
    }
    let degree = degree.min(samples.len() - 1);
    // scale t to about unit size for conditioning
    let scale = samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max).max(1.0);
    let a = DMatrix::from_fn(samples.len(), degree + 1, |i, j| (samples[i].0 / scale).powi(j as i32));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Degenerate(format!("field fit: {e}")))?;
    Ok(x.iter().enumerate().map(|(j, c)| c / scale.powi(j as i32)).collect())
}

/// Fits one [`LayerField`] per detector layer from the truth of `events`.
pub fn fit_fields(events: &[Event], detector: &Detector, opts: &FieldFitOptions) -> Result<Vec<LayerField>> {
    let mut samples = Samples::new();
    for e in events {
        collect(e, detector, &mut samples)?;
    }
    let all: Vec<f64> = samples.values().flatten().map(|s| s.1).collect();
    if all.is_empty() {
        return Err(Error::validation("no usable hit triplets in the training events"));
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let mut fields = Vec::with_capacity(detector.len());
    for (i, layer) in detector.layers().iter().enumerate() {
        let mut f = LayerField::uniform(layer.key, mean);
        for v in FieldVariant::ALL {
            if let Some(s) = samples.get(&(i, v)).filter(|s| s.len() >= opts.min_samples.max(1)) {
                *f.coefficients_mut(v) = fit_polynomial(s, opts.degree)?;
            }
        }
        fields.push(f);
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_detector;
    use crate::synth::{generate_event, GenConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_recovered() {
        let samples: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = -500.0 + 20.0 * i as f64;
                (t, 2.0 - 1e-4 * t + 3e-7 * t * t)
            })
            .collect();
        let c = fit_polynomial(&samples, 2).unwrap();
        assert_abs_diff_eq!(c[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[1], -1e-4, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2], 3e-7, epsilon = 1e-14);
        assert!(fit_polynomial(&[], 1).is_err());
        assert_eq!(fit_polynomial(&[(1.0, 4.0)], 3).unwrap(), vec![4.0]);
    }

    #[test]
    fn uniform_field_measured() {
        let det = default_detector();
        let cfg = GenConfig {
            n_primaries: 100,
            ..GenConfig::noiseless()
        };
        let events: Vec<Event> = (0..3).map(|i| generate_event(&cfg, &det, i).unwrap()).collect();
        let fields = fit_fields(&events, &det, &FieldFitOptions::default()).unwrap();
        assert_eq!(fields.len(), det.len());
        for f in &fields {
            let layer = det.get(f.key).unwrap();
            let (lo, hi) = layer.t_range();
            for v in FieldVariant::ALL {
                for t in [lo, 0.5 * (lo + hi), hi] {
                    let b = f.eval(t, v);
                    assert!((b - 2.0).abs() < 0.02, "{} {v:?} t={t}: {b}", f.key);
                }
            }
        }
    }

    #[test]
    fn reversed_field_gives_negative_values() {
        let det = default_detector();
        let cfg = GenConfig {
            n_primaries: 50,
            bz: -2.0,
            ..GenConfig::noiseless()
        };
        let events = vec![generate_event(&cfg, &det, 0).unwrap()];
        let opts = FieldFitOptions {
            degree: 0,
            min_samples: 1,
        };
        let fields = fit_fields(&events, &det, &opts).unwrap();
        assert_abs_diff_eq!(fields[0].seed[0], -2.0, epsilon = 0.02);
    }

    #[test]
    fn truthless_events_rejected() {
        let det = default_detector();
        let mut e = generate_event(&GenConfig::noiseless(), &det, 0).unwrap();
        e.truth.clear();
        assert!(fit_fields(&[e], &det, &FieldFitOptions::default()).is_err());
    }
}
