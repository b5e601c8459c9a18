//! Scoring and analysis of reconstructed events.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, HitId, Particle, ParticleId, Solution, TrackId, NOISE, UNASSIGNED};
use crate::geometry::wrap_delta_phi;

/// Time budget per event in the throughput score, seconds.
pub const T_MAX: f64 = 600.0;
/// Accuracy below which the throughput score is zero.
pub const S_MIN: f64 = 0.5;

/// `sqrt(ln(1 + t_max / t) * (s - s_min)^2)`, or 0 when `s <= s_min` or
/// `t >= t_max`.
pub fn throughput_score_with(s: f64, t: f64, t_max: f64, s_min: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time per event must be positive, got {t}")));
    }
    if s <= s_min || t >= t_max {
        return Ok(0.0);
    }
    Ok(((1.0 + t_max / t).ln() * (s - s_min).powi(2)).sqrt())
}

pub fn throughput_score(s: f64, t: f64) -> Result<f64> {
    throughput_score_with(s, t, T_MAX, S_MIN)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyOptions {
    /// Also require each track to hold more than half of its majority
    /// particle's hits.
    pub double_majority: bool,
}

fn require_truth(event: &Event) -> Result<()> {
    if event.hits.is_empty() || event.has_truth() {
        Ok(())
    } else {
        Err(Error::validation(format!("event {} has no truth", event.event_id)))
    }
}

fn primaries(event: &Event) -> HashSet<ParticleId> {
    event
        .particles
        .iter()
        .filter(|p| p.is_primary())
        .map(|p| p.particle_id)
        .collect()
}

/// Weighted fraction of primary-particle hits that sit in a track whose
/// majority particle is their own and holds more than half of the track's
/// weight. Secondary and noise hits count in neither numerator nor
/// denominator.
pub fn accuracy_score_with(event: &Event, solution: &Solution, opts: &AccuracyOptions) -> Result<f64> {
    require_truth(event)?;
    let primary = primaries(event);
    let mut particle_hits: HashMap<ParticleId, usize> = HashMap::new();
    let mut by_track: HashMap<TrackId, Vec<(ParticleId, f64)>> = HashMap::new();
    let mut total = 0.0;
    for t in &event.truth {
        *particle_hits.entry(t.particle_id).or_default() += 1;
        if primary.contains(&t.particle_id) {
            total += t.weight;
        }
        let track = solution.track_of(t.hit_id);
        if track != UNASSIGNED {
            by_track.entry(track).or_default().push((t.particle_id, t.weight));
        }
    }
    if !(total > 0.0) {
        return Err(Error::Domain(format!(
            "event {} has no weighted primary hits",
            event.event_id
        )));
    }
    let mut good = 0.0;
    for hits in by_track.values() {
        let track_weight: f64 = hits.iter().map(|h| h.1).sum();
        let mut per: BTreeMap<ParticleId, (f64, usize)> = BTreeMap::new();
        for &(p, w) in hits {
            let e = per.entry(p).or_default();
            e.0 += w;
            e.1 += 1;
        }
        // largest weight; ties go to the smaller particle id
        let Some((&pid, &(w, n))) = per
            .iter()
            .filter(|(p, _)| **p != NOISE)
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(a.0)))
        else {
            continue;
        };
        if !primary.contains(&pid) || !(2.0 * w > track_weight) {
            continue;
        }
        if opts.double_majority && !(2 * n > particle_hits[&pid]) {
            continue;
        }
        good += w;
    }
    Ok(good / total)
}

pub fn accuracy_score(event: &Event, solution: &Solution) -> Result<f64> {
    accuracy_score_with(event, solution, &AccuracyOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EfficiencyOptions {
    /// Primaries crossing fewer distinct layers are left out of the
    /// denominator. 0 counts every primary.
    pub min_layers: usize,
}

impl Default for EfficiencyOptions {
    fn default() -> Self {
        EfficiencyOptions { min_layers: 3 }
    }
}

impl EfficiencyOptions {
    /// Every primary particle counts, hits or not.
    pub fn all_primaries() -> Self {
        EfficiencyOptions { min_layers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Efficiency {
    pub efficiency: f64,
    /// Counted primaries and whether each was reconstructed.
    pub matched: BTreeMap<ParticleId, bool>,
}

impl Efficiency {
    pub fn n_matched(&self) -> usize {
        self.matched.values().filter(|m| **m).count()
    }

    pub fn n_total(&self) -> usize {
        self.matched.len()
    }
}

/// A primary is reconstructed when one track holds more than half of its
/// hits (unweighted).
pub fn particle_efficiency_with(event: &Event, solution: &Solution, opts: &EfficiencyOptions) -> Result<Efficiency> {
    require_truth(event)?;
    let layer_of: HashMap<HitId, (u32, u32)> =
        event.hits.iter().map(|h| (h.hit_id, (h.volume_id, h.layer_id))).collect();
    let mut hits: HashMap<ParticleId, Vec<HitId>> = HashMap::new();
    for t in &event.truth {
        if t.particle_id != NOISE {
            hits.entry(t.particle_id).or_default().push(t.hit_id);
        }
    }
    let mut matched = BTreeMap::new();
    for p in event.particles.iter().filter(|p| p.is_primary()) {
        let own = hits.get(&p.particle_id).map(Vec::as_slice).unwrap_or(&[]);
        let layers: HashSet<(u32, u32)> = own.iter().filter_map(|h| layer_of.get(h).copied()).collect();
        if layers.len() < opts.min_layers {
            continue;
        }
        let mut per_track: HashMap<TrackId, usize> = HashMap::new();
        for &h in own {
            let t = solution.track_of(h);
            if t != UNASSIGNED {
                *per_track.entry(t).or_default() += 1;
            }
        }
        let best = per_track.values().copied().max().unwrap_or(0);
        matched.insert(p.particle_id, !own.is_empty() && 2 * best > own.len());
    }
    let n = matched.len();
    let efficiency = if n == 0 {
        0.0
    } else {
        matched.values().filter(|m| **m).count() as f64 / n as f64
    };
    Ok(Efficiency { efficiency, matched })
}

pub fn particle_efficiency(event: &Event, solution: &Solution) -> Result<Efficiency> {
    particle_efficiency_with(event, solution, &EfficiencyOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Log10Pt,
    Phi,
    Eta,
    R0,
    Z0,
}

impl Variable {
    pub const ALL: [Variable; 5] = [Variable::Log10Pt, Variable::Phi, Variable::Eta, Variable::R0, Variable::Z0];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Log10Pt => "log10_pt",
            Variable::Phi => "phi",
            Variable::Eta => "eta",
            Variable::R0 => "r0",
            Variable::Z0 => "z0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variable::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown variable {s:?}")))
    }

    pub fn value(self, p: &Particle) -> Result<f64> {
        let k = p.kinematics()?;
        Ok(match self {
            Variable::Log10Pt => k.pt.log10(),
            Variable::Phi => k.phi,
            Variable::Eta => k.eta,
            Variable::R0 => k.r0,
            Variable::Z0 => k.z0,
        })
    }

    /// Reasonable default binning for the generator's ranges.
    pub fn default_bins(self) -> Vec<f64> {
        let lin = |lo: f64, hi: f64, n: usize| (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        match self {
            Variable::Log10Pt => lin(-1.0, 1.0, 10),
            Variable::Phi => lin(-std::f64::consts::PI, std::f64::consts::PI, 12),
            Variable::Eta => lin(-3.0, 3.0, 12),
            Variable::R0 => lin(0.0, 0.1, 5),
            Variable::Z0 => lin(-200.0, 200.0, 8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub bin_low: f64,
    pub bin_high: f64,
    /// `None` for both charges together.
    pub charge: Option<i8>,
    pub matched: usize,
    pub total: usize,
    /// Absent for empty bins.
    pub efficiency: Option<f64>,
    pub uncertainty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyTable {
    pub variable: Variable,
    pub edges: Vec<f64>,
    pub rows: Vec<EfficiencyRow>,
}

/// Binomial efficiency `m / n` with uncertainty `sqrt(e (1 - e) / n)`.
pub fn binomial(matched: usize, total: usize) -> (Option<f64>, Option<f64>) {
    if total == 0 {
        return (None, None);
    }
    let e = matched as f64 / total as f64;
    (Some(e), Some((e * (1.0 - e) / total as f64).sqrt()))
}

/// Bin index of `x`; bins are half-open except the last, which includes
/// its upper edge.
fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[n]) {
        return None;
    }
    let i = edges.partition_point(|e| *e <= x);
    Some(i.saturating_sub(1).min(n - 1))
}

pub fn binned_efficiency(
    events: &[Event],
    solutions: &[Solution],
    variable: Variable,
    edges: &[f64],
    charge_split: bool,
    opts: &EfficiencyOptions,
) -> Result<EfficiencyTable> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("bin edges must be strictly increasing with at least two entries"));
    }
    if events.len() != solutions.len() {
        return Err(Error::validation("one solution per event is required"));
    }
    let n = edges.len() - 1;
    let charges: Vec<Option<i8>> = if charge_split {
        vec![None, Some(1), Some(-1)]
    } else {
        vec![None]
    };
    let mut counts = vec![[(0usize, 0usize); 3]; n];
    for (ev, sol) in events.iter().zip(solutions) {
        let eff = particle_efficiency_with(ev, sol, opts)?;
        let pm = ev.particle_map();
        for (pid, m) in &eff.matched {
            let p = pm[pid];
            let Some(b) = bin_of(edges, variable.value(p)?) else { continue };
            for (ci, c) in charges.iter().enumerate() {
                if c.is_none_or(|q| q == p.q) {
                    counts[b][ci].1 += 1;
                    counts[b][ci].0 += usize::from(*m);
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (ci, c) in charges.iter().enumerate() {
        for b in 0..n {
            let (m, t) = counts[b][ci];
            let (efficiency, uncertainty) = binomial(m, t);
            rows.push(EfficiencyRow {
                bin_low: edges[b],
                bin_high: edges[b + 1],
                charge: *c,
                matched: m,
                total: t,
                efficiency,
                uncertainty,
            });
        }
    }
    Ok(EfficiencyTable {
        variable,
        edges: edges.to_vec(),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `variable,bin_low,bin_high,charge,matched,total,efficiency,uncertainty`
/// rows for every table. Charge is `all`, `+` or `-`; absent values are empty.
pub fn write_efficiency_csv(tables: &[EfficiencyTable], path: &Path) -> Result<()> {
    let mut out = String::from("variable,bin_low,bin_high,charge,matched,total,efficiency,uncertainty\n");
    for t in tables {
        for r in &t.rows {
            let charge = match r.charge {
                None => "all",
                Some(q) if q > 0 => "+",
                Some(_) => "-",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t.variable.as_str(),
                r.bin_low,
                r.bin_high,
                charge,
                r.matched,
                r.total,
                opt(r.efficiency),
                opt(r.uncertainty)
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NearestNeighbour {
    pub particle_id: ParticleId,
    pub delta_r: f64,
    pub neighbour: ParticleId,
    pub same_charge: bool,
}

/// `sqrt(dphi^2 + deta^2)` to the closest other primary, for every primary.
pub fn delta_r_nearest(event: &Event) -> Result<Vec<NearestNeighbour>> {
    let prim: Vec<(&Particle, f64, f64)> = event
        .particles
        .iter()
        .filter(|p| p.is_primary())
        .map(|p| p.kinematics().map(|k| (p, k.phi, k.eta)))
        .collect::<Result<_>>()?;
    if prim.len() < 2 {
        return Err(Error::validation(format!(
            "event {} has {} primaries, at least 2 needed",
            event.event_id,
            prim.len()
        )));
    }
    let mut out = Vec::with_capacity(prim.len());
    for (i, &(p, phi, eta)) in prim.iter().enumerate() {
        let mut best: Option<(f64, &Particle)> = None;
        for (j, &(o, phi2, eta2)) in prim.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = wrap_delta_phi(phi - phi2).hypot(eta - eta2);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, o));
            }
        }
        let (d, o) = best.expect("two primaries");
        out.push(NearestNeighbour {
            particle_id: p.particle_id,
            delta_r: d,
            neighbour: o.particle_id,
            same_charge: o.q == p.q,
        });
    }
    Ok(out)
}

/// Writes `event_id,particle_id,delta_r,neighbour_id,same_charge,matched`.
pub fn write_delta_r_csv(
    rows: &[(u64, NearestNeighbour, Option<bool>)],
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "event_id,particle_id,delta_r,neighbour_id,same_charge,matched").map_err(io)?;
    for (ev, n, m) in rows {
        let matched = m.map(|b| u8::from(b).to_string()).unwrap_or_default();
        writeln!(
            w,
            "{ev},{},{},{},{},{matched}",
            n.particle_id,
            n.delta_r,
            n.neighbour,
            u8::from(n.same_charge)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub event_id: u64,
    pub accuracy: f64,
    /// Seconds spent in the finder, when measured.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_events: usize,
    /// Mean accuracy over events.
    pub accuracy: f64,
    pub events: Vec<EventScore>,
    /// Mean seconds per event.
    pub time: Option<f64>,
    pub throughput_score: Option<f64>,
    /// Mean seconds per event of each repetition.
    pub repetition_times: Vec<f64>,
    /// Relative standard deviation of `repetition_times`.
    pub time_spread: Option<f64>,
    /// `(max - min) / mean` of `repetition_times`.
    pub time_range: Option<f64>,
    pub valid: bool,
    pub error: Option<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn spread(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.len() < 2 {
        return (None, None);
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    (Some(var.sqrt() / m), Some((hi - lo) / m))
}

/// Scores solutions, taking the time per event from `time` when given.
pub fn score_events(
    events: &[Event],
    solutions: &[Solution],
    time: Option<f64>,
    opts: &AccuracyOptions,
) -> Result<ScoreReport> {
    if events.len() != solutions.len() {
        return Err(Error::validation("one solution per event is required"));
    }
    if events.is_empty() {
        return Err(Error::validation("no events to score"));
    }
    let mut scores = Vec::with_capacity(events.len());
    for (e, s) in events.iter().zip(solutions) {
        scores.push(EventScore {
            event_id: e.event_id,
            accuracy: accuracy_score_with(e, s, opts)?,
            time: None,
        });
    }
    let accuracy = mean(&scores.iter().map(|s| s.accuracy).collect::<Vec<_>>());
    let throughput = time.map(|t| throughput_score(accuracy, t)).transpose()?;
    Ok(ScoreReport {
        n_events: events.len(),
        accuracy,
        events: scores,
        time,
        throughput_score: throughput,
        repetition_times: time.into_iter().collect(),
        time_spread: None,
        time_range: None,
        valid: true,
        error: None,
    })
}

/// Times `finder` on in-memory events. Only the finder call is inside the
/// timed region; scoring happens after the clock stops. The first event is
/// run once untimed beforehand so that pools and caches are warm.
pub fn bench<F>(events: &[Event], mut finder: F, repetitions: usize, opts: &AccuracyOptions) -> Result<ScoreReport>
where
    F: FnMut(&Event) -> Result<Solution>,
{
    if events.is_empty() {
        return Err(Error::validation("no events to benchmark"));
    }
    if let Some(e) = events.iter().find(|e| !e.hits.is_empty() && !e.has_truth()) {
        return Err(Error::validation(format!("event {} has no truth", e.event_id)));
    }
    let repetitions = repetitions.max(1);
    let invalid = |event_id: u64, err: Error, rep_times: Vec<f64>| ScoreReport {
        n_events: events.len(),
        accuracy: 0.0,
        events: Vec::new(),
        time: None,
        throughput_score: None,
        repetition_times: rep_times,
        time_spread: None,
        time_range: None,
        valid: false,
        error: Some(format!("event {event_id}: {err}")),
    };
    if let Err(err) = finder(&events[0]) {
        return Ok(invalid(events[0].event_id, err, Vec::new()));
    }
    let mut rep_times = Vec::with_capacity(repetitions);
    let mut first: Vec<(Solution, Duration)> = Vec::new();
    for rep in 0..repetitions {
        let mut total = Duration::ZERO;
        for e in events {
            let start = Instant::now();
            let out = finder(e);
            let elapsed = start.elapsed();
            let sol = match out {
                Ok(s) => s,
                Err(err) => return Ok(invalid(e.event_id, err, rep_times)),
            };
            total += elapsed;
            if rep == 0 {
                first.push((sol, elapsed));
            }
        }
        rep_times.push(total.as_secs_f64() / events.len() as f64);
    }
    let mut scores = Vec::with_capacity(events.len());
    for (e, (s, dt)) in events.iter().zip(&first) {
        scores.push(EventScore {
            event_id: e.event_id,
            accuracy: accuracy_score_with(e, s, opts)?,
            time: Some(dt.as_secs_f64()),
        });
    }
    let accuracy = mean(&scores.iter().map(|s| s.accuracy).collect::<Vec<_>>());
    let t = mean(&rep_times);
    let (time_spread, time_range) = spread(&rep_times);
    Ok(ScoreReport {
        n_events: events.len(),
        accuracy,
        events: scores,
        time: Some(t),
        throughput_score: Some(throughput_score(accuracy, t)?),
        repetition_times: rep_times,
        time_spread,
        time_range,
        valid: true,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Hit, TruthLink};
    use approx::assert_abs_diff_eq;

    fn particle(id: u64, phi: f64, eta: f64, q: i8, secondary: bool) -> Particle {
        Particle {
            particle_id: id,
            vx: 0.0,
            vy: 0.0,
            vz: 0.0,
            px: phi.cos(),
            py: phi.sin(),
            pz: eta.sinh(),
            q,
            is_secondary: secondary,
        }
    }

    /// Hits `1..=n` with the given truth particle, weight 1, each on its own layer.
    fn event(owners: &[u64], particles: Vec<Particle>) -> Event {
        let hits = owners
            .iter()
            .enumerate()
            .map(|(i, _)| Hit {
                hit_id: i as u64 + 1,
                x: 0.0,
                y: 0.0,
                z: 0.0,
                volume_id: 8,
                layer_id: 2 * (i as u32 + 1),
                module_id: 1,
            })
            .collect();
        let truth = owners
            .iter()
            .enumerate()
            .map(|(i, &p)| TruthLink {
                hit_id: i as u64 + 1,
                particle_id: p,
                weight: if p == NOISE { 0.0 } else { 1.0 },
            })
            .collect();
        Event {
            event_id: 1,
            hits,
            particles,
            truth,
        }
    }

    fn solution(tracks: &[u64]) -> Solution {
        let mut s = Solution::new(1);
        for (i, &t) in tracks.iter().enumerate() {
            s.assignment.insert(i as u64 + 1, t);
        }
        s
    }

    #[test]
    fn table_one_rows() {
        let rows = [
            (0.944, 0.56, 1.17),
            (0.944, 1.11, 1.11),
            (0.928, 7.28, 0.90),
            (0.895, 13.5, 0.77),
            (0.875, 53.4, 0.59),
            (0.815, 25.4, 0.56),
            (0.674, 38.0, 0.29),
        ];
        for (s, t, want) in rows {
            assert_abs_diff_eq!(throughput_score(s, t).unwrap(), want, epsilon = 0.005);
        }
        assert_eq!(throughput_score(0.5, 3.0).unwrap(), 0.0);
        assert!(throughput_score(0.9, 0.0).is_err());
        assert_eq!(throughput_score(0.99, 600.0).unwrap(), 0.0);
        // a base-10 logarithm misses the first row by far
        let log10 = ((1.0f64 + 600.0 / 0.56).log10() * 0.444f64.powi(2)).sqrt();
        assert!((log10 - 1.17).abs() > 0.3);
    }

    #[test]
    fn ideal_and_empty_solutions() {
        let ev = event(&[1, 1, 2, 2, 0], vec![particle(1, 0.0, 0.0, 1, false), particle(2, 1.0, 0.0, -1, false)]);
        assert_eq!(accuracy_score(&ev, &solution(&[1, 1, 2, 2, 0])).unwrap(), 1.0);
        assert_eq!(accuracy_score(&ev, &solution(&[0; 5])).unwrap(), 0.0);
        let eff = particle_efficiency_with(&ev, &solution(&[1, 1, 2, 2, 0]), &EfficiencyOptions::all_primaries()).unwrap();
        assert_eq!(eff.efficiency, 1.0);
    }

    #[test]
    fn one_big_track() {
        // six hits, equal split: no strict majority
        let ps = vec![particle(1, 0.0, 0.0, 1, false), particle(2, 1.0, 0.0, 1, false)];
        let ev = event(&[1, 1, 1, 2, 2, 2], ps.clone());
        assert_eq!(accuracy_score(&ev, &solution(&[7; 6])).unwrap(), 0.0);
        // four against two: particle 1 dominates, half the weight is right
        let ev = event(&[1, 1, 1, 1, 2, 2], ps);
        assert_abs_diff_eq!(accuracy_score(&ev, &solution(&[7; 6])).unwrap(), 4.0 / 6.0);
    }

    #[test]
    fn secondaries_excluded() {
        let ps = vec![
            particle(1, 0.0, 0.0, 1, false),
            particle(2, 1.0, 0.0, 1, false),
            particle(3, 2.0, 0.0, 1, true),
        ];
        let ev = event(&[1, 1, 2, 2, 3, 3], ps);
        assert_eq!(accuracy_score(&ev, &solution(&[1, 1, 2, 2, 3, 3])).unwrap(), 1.0);
        assert_eq!(accuracy_score(&ev, &solution(&[1, 1, 2, 2, 0, 0])).unwrap(), 1.0);
        // a secondary that dominates a track steals it
        assert_eq!(accuracy_score(&ev, &solution(&[1, 1, 3, 3, 3, 3])).unwrap(), 0.5);
    }

    #[test]
    fn double_majority_is_stricter() {
        let ev = event(&[1, 1, 1, 1], vec![particle(1, 0.0, 0.0, 1, false)]);
        let split = solution(&[1, 1, 2, 2]);
        let dm = AccuracyOptions { double_majority: true };
        assert_eq!(accuracy_score(&ev, &split).unwrap(), 1.0);
        assert_eq!(accuracy_score_with(&ev, &split, &dm).unwrap(), 0.0);
    }

    #[test]
    fn efficiency_boundary() {
        let ev = event(&[1, 1, 1, 1], vec![particle(1, 0.0, 0.0, 1, false)]);
        let all = EfficiencyOptions::all_primaries();
        assert_eq!(particle_efficiency_with(&ev, &solution(&[1, 1, 0, 0]), &all).unwrap().efficiency, 0.0);
        assert_eq!(particle_efficiency_with(&ev, &solution(&[1, 1, 1, 0]), &all).unwrap().efficiency, 1.0);
    }

    #[test]
    fn missing_truth() {
        let mut ev = event(&[1, 1], vec![particle(1, 0.0, 0.0, 1, false)]);
        ev.truth.clear();
        assert!(accuracy_score(&ev, &solution(&[1, 1])).is_err());
        assert!(particle_efficiency(&ev, &solution(&[1, 1])).is_err());
    }

    #[test]
    fn delta_r_examples() {
        let ev = event(&[], vec![particle(1, 0.3, 1.0, 1, false), particle(2, 0.3, 1.0, -1, false)]);
        let d = delta_r_nearest(&ev).unwrap();
        assert!(d.iter().all(|n| n.delta_r == 0.0 && !n.same_charge));
        let ev = event(&[], vec![particle(1, 3.1, 0.0, 1, false), particle(2, -3.1, 0.0, 1, false)]);
        let d = delta_r_nearest(&ev).unwrap();
        assert_abs_diff_eq!(d[0].delta_r, 2.0 * std::f64::consts::PI - 6.2, epsilon = 1e-12);
        let ev = event(&[], vec![particle(1, 0.0, 0.0, 1, false)]);
        assert!(delta_r_nearest(&ev).is_err());
    }

    #[test]
    fn binning() {
        let ev = event(&[1, 1, 1], vec![particle(1, 0.0, 0.5, 1, false)]);
        let sol = solution(&[1, 1, 1]);
        let all = EfficiencyOptions::all_primaries();
        let t = binned_efficiency(&[ev.clone()], &[sol.clone()], Variable::Eta, &[0.0, 1.0], false, &all).unwrap();
        assert_eq!(t.rows[0].efficiency, Some(1.0));
        assert_eq!(t.rows[0].uncertainty, Some(0.0));
        let t = binned_efficiency(&[ev.clone()], &[sol.clone()], Variable::Eta, &[0.0, 1.0, 2.0], true, &all).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.rows[1].efficiency, None);
        assert_eq!(t.rows[1].total, 0);
        assert!(binned_efficiency(&[ev], &[sol], Variable::Eta, &[1.0, 0.0], false, &all).is_err());
        assert!(Variable::parse("rapidity").is_err());
        assert_eq!(bin_of(&[0.0, 1.0, 2.0], 2.0), Some(1));
        assert_eq!(bin_of(&[0.0, 1.0, 2.0], 1.0), Some(1));
        assert_eq!(bin_of(&[0.0, 1.0, 2.0], -0.1), None);
    }

    #[test]
    fn bench_times_only_the_finder() {
        let ev = event(&[1, 1], vec![particle(1, 0.0, 0.0, 1, false)]);
        let events = vec![ev.clone(), ev.clone(), ev];
        let report = bench(
            &events,
            |e| {
                std::thread::sleep(Duration::from_millis(10));
                Ok(solution(&vec![1; e.hits.len()]))
            },
            1,
            &AccuracyOptions::default(),
        )
        .unwrap();
        let t = report.time.unwrap();
        assert!((0.010..0.013).contains(&t), "{t}");
        assert_eq!(report.accuracy, 1.0);
        let failed = bench(&events, |_| Err(Error::validation("boom")), 2, &AccuracyOptions::default()).unwrap();
        assert!(!failed.valid);
    }

    proptest::proptest! {
        #[test]
        fn throughput_monotone(s in 0.51f64..1.0, t in 0.01f64..500.0, ds in 0.001f64..0.4, k in 1.01f64..1.1) {
            let a = throughput_score(s, t).unwrap();
            proptest::prop_assert!(throughput_score(s, t * k).unwrap() < a);
            proptest::prop_assert!(throughput_score((s + ds).min(1.0) + 1e-9, t).unwrap() > a);
        }

        #[test]
        fn relabeling_keeps_accuracy(
            owners in proptest::collection::vec(0u64..4, 1..12),
            tracks in proptest::collection::vec(0u64..5, 12),
            shift in 1u64..100,
        ) {
            let ps = (1..4).map(|i| particle(i, i as f64, 0.0, 1, false)).collect();
            let ev = event(&owners, ps);
            if ev.truth.iter().all(|t| t.weight == 0.0) {
                return Ok(());
            }
            let t: Vec<u64> = tracks[..owners.len()].to_vec();
            let relabeled: Vec<u64> = t.iter().map(|&x| if x == 0 { 0 } else { x * 7 + shift }).collect();
            let a = accuracy_score(&ev, &solution(&t)).unwrap();
            let b = accuracy_score(&ev, &solution(&relabeled)).unwrap();
            proptest::prop_assert_eq!(a, b);
            proptest::prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
