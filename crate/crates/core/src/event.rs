//! Hits, particles, truth links and solutions, plus the per-event CSV files
//! they are exchanged in.
//!
//! File layout (one directory, 9-digit zero-padded event ids):
//!
//! ```text
//! event000000001-hits.csv       hit_id,x,y,z,volume_id,layer_id,module_id
//! event000000001-truth.csv      hit_id,particle_id,weight
//! event000000001-particles.csv  particle_id,vx,vy,vz,px,py,pz,q,is_secondary
//! event000000001-solution.csv   event_id,hit_id,track_id
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type HitId = u64;
pub type ParticleId = u64;
pub type TrackId = u64;

/// Particle id used for noise hits.
pub const NOISE: ParticleId = 0;
/// Track id meaning "not assigned to any track".
pub const UNASSIGNED: TrackId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: HitId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub volume_id: u32,
    pub layer_id: u32,
    pub module_id: u32,
}

impl Hit {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn r(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub particle_id: ParticleId,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub q: i8,
    pub is_secondary: bool,
}

/// Kinematic variables of a truth particle, used for binned efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub pt: f64,
    pub phi: f64,
    pub eta: f64,
    pub r0: f64,
    pub z0: f64,
}

impl Particle {
    pub fn pt(&self) -> f64 {
        self.px.hypot(self.py)
    }

    pub fn is_primary(&self) -> bool {
        !self.is_secondary
    }

    pub fn kinematics(&self) -> Result<Kinematics> {
        kinematics(self)
    }
}

/// pT, azimuth, pseudorapidity and vertex position of a particle.
///
/// Pseudorapidity follows the usual `-ln tan(theta/2)` sign, computed as
/// `asinh(pz / pT)`.
pub fn kinematics(p: &Particle) -> Result<Kinematics> {
    let pt = p.pt();
    if !(pt > 0.0) {
        if p.pz == 0.0 {
            return Err(Error::Domain(format!(
                "particle {} has zero momentum",
                p.particle_id
            )));
        }
        return Err(Error::Domain(format!(
            "particle {} has zero transverse momentum",
            p.particle_id
        )));
    }
    Ok(Kinematics {
        pt,
        phi: normalize_phi(p.py.atan2(p.px)),
        eta: (p.pz / pt).asinh(),
        r0: p.vx.hypot(p.vy),
        z0: p.vz,
    })
}

/// Maps any angle into (-pi, pi].
pub fn normalize_phi(phi: f64) -> f64 {
    let mut a = phi;
    if !(-PI..=PI).contains(&a) {
        a = (a + PI).rem_euclid(2.0 * PI) - PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthLink {
    pub hit_id: HitId,
    pub particle_id: ParticleId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Event {
    pub event_id: u64,
    pub hits: Vec<Hit>,
    pub particles: Vec<Particle>,
    pub truth: Vec<TruthLink>,
}

impl Event {
    pub fn has_truth(&self) -> bool {
        !self.truth.is_empty()
    }

    /// Checks the cross-reference invariants between hits, truth and particles.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.hits.len());
        for h in &self.hits {
            if !ids.insert(h.hit_id) {
                return Err(Error::validation(format!(
                    "event {}: duplicate hit_id {}",
                    self.event_id, h.hit_id
                )));
            }
        }
        let mut pids = HashSet::with_capacity(self.particles.len());
        for p in &self.particles {
            if p.q != 1 && p.q != -1 {
                return Err(Error::validation(format!(
                    "particle {}: charge {} not in {{-1, +1}}",
                    p.particle_id, p.q
                )));
            }
            if !(p.pt() > 0.0) {
                return Err(Error::validation(format!(
                    "particle {}: non-positive pT",
                    p.particle_id
                )));
            }
            if p.particle_id == NOISE || !pids.insert(p.particle_id) {
                return Err(Error::validation(format!(
                    "invalid or duplicate particle_id {}",
                    p.particle_id
                )));
            }
        }
        if self.truth.is_empty() {
            return Ok(());
        }
        let mut linked = HashSet::with_capacity(self.truth.len());
        for t in &self.truth {
            if !ids.contains(&t.hit_id) {
                return Err(Error::validation(format!(
                    "truth references unknown hit_id {}",
                    t.hit_id
                )));
            }
            if !linked.insert(t.hit_id) {
                return Err(Error::validation(format!(
                    "hit_id {} has more than one truth link",
                    t.hit_id
                )));
            }
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(Error::validation(format!(
                    "hit_id {}: weight {} is not a finite non-negative number",
                    t.hit_id, t.weight
                )));
            }
            if t.particle_id == NOISE {
                if t.weight != 0.0 {
                    return Err(Error::validation(format!(
                        "noise hit_id {} has non-zero weight",
                        t.hit_id
                    )));
                }
            } else if !pids.contains(&t.particle_id) {
                return Err(Error::validation(format!(
                    "truth references unknown particle_id {}",
                    t.particle_id
                )));
            }
        }
        if linked.len() != ids.len() {
            let missing = self
                .hits
                .iter()
                .find(|h| !linked.contains(&h.hit_id))
                .map(|h| h.hit_id)
                .unwrap_or_default();
            return Err(Error::validation(format!(
                "hit_id {missing} has no truth link"
            )));
        }
        let total: f64 = self.truth.iter().map(|t| t.weight).sum();
        if !total.is_finite() {
            return Err(Error::validation("sum of weights is not finite"));
        }
        Ok(())
    }

    pub fn particle_map(&self) -> HashMap<ParticleId, &Particle> {
        self.particles.iter().map(|p| (p.particle_id, p)).collect()
    }

    pub fn truth_map(&self) -> HashMap<HitId, &TruthLink> {
        self.truth.iter().map(|t| (t.hit_id, t)).collect()
    }
}

/// The submitted hit-to-track assignment of one event.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Solution {
    pub event_id: u64,
    pub assignment: BTreeMap<HitId, TrackId>,
}

impl Solution {
    pub fn new(event_id: u64) -> Self {
        Solution {
            event_id,
            assignment: BTreeMap::new(),
        }
    }

    /// A solution with every hit of the event unassigned.
    pub fn unassigned(event: &Event) -> Self {
        Solution {
            event_id: event.event_id,
            assignment: event.hits.iter().map(|h| (h.hit_id, UNASSIGNED)).collect(),
        }
    }

    pub fn track_of(&self, hit_id: HitId) -> TrackId {
        self.assignment.get(&hit_id).copied().unwrap_or(UNASSIGNED)
    }

    /// Hit ids grouped per assigned track (track 0 excluded).
    pub fn tracks(&self) -> BTreeMap<TrackId, Vec<HitId>> {
        let mut out: BTreeMap<TrackId, Vec<HitId>> = BTreeMap::new();
        for (&h, &t) in &self.assignment {
            if t != UNASSIGNED {
                out.entry(t).or_default().push(h);
            }
        }
        out
    }

    /// Checks that the assignment covers exactly the hits of `event`.
    pub fn validate_against(&self, event: &Event) -> Result<()> {
        if self.assignment.len() != event.hits.len() {
            return Err(Error::validation(format!(
                "solution for event {} has {} entries but event has {} hits",
                event.event_id,
                self.assignment.len(),
                event.hits.len()
            )));
        }
        for h in &event.hits {
            if !self.assignment.contains_key(&h.hit_id) {
                return Err(Error::validation(format!(
                    "solution misses hit_id {}",
                    h.hit_id
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV files

#[derive(Serialize, Deserialize)]
struct ParticleRecord {
    particle_id: ParticleId,
    vx: f64,
    vy: f64,
    vz: f64,
    px: f64,
    py: f64,
    pz: f64,
    q: i8,
    is_secondary: u8,
}

impl From<&Particle> for ParticleRecord {
    fn from(p: &Particle) -> Self {
        ParticleRecord {
            particle_id: p.particle_id,
            vx: p.vx,
            vy: p.vy,
            vz: p.vz,
            px: p.px,
            py: p.py,
            pz: p.pz,
            q: p.q,
            is_secondary: u8::from(p.is_secondary),
        }
    }
}

impl From<ParticleRecord> for Particle {
    fn from(r: ParticleRecord) -> Self {
        Particle {
            particle_id: r.particle_id,
            vx: r.vx,
            vy: r.vy,
            vz: r.vz,
            px: r.px,
            py: r.py,
            pz: r.pz,
            q: r.q,
            is_secondary: r.is_secondary != 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionRecord {
    event_id: u64,
    hit_id: HitId,
    track_id: TrackId,
}

pub fn event_prefix(event_id: u64) -> String {
    format!("event{event_id:09}")
}

pub fn hits_path(dir: &Path, event_id: u64) -> PathBuf {
    dir.join(format!("{}-hits.csv", event_prefix(event_id)))
}

pub fn truth_path(dir: &Path, event_id: u64) -> PathBuf {
    dir.join(format!("{}-truth.csv", event_prefix(event_id)))
}

pub fn particles_path(dir: &Path, event_id: u64) -> PathBuf {
    dir.join(format!("{}-particles.csv", event_prefix(event_id)))
}

pub fn solution_path(dir: &Path, event_id: u64) -> PathBuf {
    dir.join(format!("{}-solution.csv", event_prefix(event_id)))
}

pub(crate) fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e| Error::from_csv(path, e))?);
    }
    Ok(out)
}

pub(crate) fn write_records<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    wtr.write_record(header).map_err(|e| Error::from_csv(path, e))?;
    for row in rows {
        wtr.serialize(row).map_err(|e| Error::from_csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads one event. Truth and particles are read only when `with_truth` is
/// set and the files exist.
pub fn load_event(dir: &Path, event_id: u64, with_truth: bool) -> Result<Event> {
    let hits: Vec<Hit> = read_records(&hits_path(dir, event_id))?;
    let mut event = Event {
        event_id,
        hits,
        ..Default::default()
    };
    if with_truth {
        let tp = truth_path(dir, event_id);
        if tp.exists() {
            event.truth = read_records(&tp)?;
        }
        let pp = particles_path(dir, event_id);
        if pp.exists() {
            event.particles = read_records::<ParticleRecord>(&pp)?
                .into_iter()
                .map(Particle::from)
                .collect();
        }
    }
    event.validate()?;
    Ok(event)
}

/// Writes the hits file and, when the event carries truth, the truth and
/// particles files.
pub fn write_event(dir: &Path, event: &Event) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records(
        &hits_path(dir, event.event_id),
        &["hit_id", "x", "y", "z", "volume_id", "layer_id", "module_id"],
        event.hits.iter(),
    )?;
    if !event.truth.is_empty() || !event.particles.is_empty() {
        write_records(
            &truth_path(dir, event.event_id),
            &["hit_id", "particle_id", "weight"],
            event.truth.iter(),
        )?;
        write_records(
            &particles_path(dir, event.event_id),
            &[
                "particle_id",
                "vx",
                "vy",
                "vz",
                "px",
                "py",
                "pz",
                "q",
                "is_secondary",
            ],
            event.particles.iter().map(ParticleRecord::from),
        )?;
    }
    Ok(())
}

/// Event ids for which a hits file exists in `dir`, ascending.
pub fn list_event_ids(dir: &Path) -> Result<Vec<u64>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name
            .strip_prefix("event")
            .and_then(|s| s.strip_suffix("-hits.csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

pub fn write_solution(solution: &Solution, path: &Path) -> Result<()> {
    write_records(
        path,
        &["event_id", "hit_id", "track_id"],
        solution.assignment.iter().map(|(&hit_id, &track_id)| SolutionRecord {
            event_id: solution.event_id,
            hit_id,
            track_id,
        }),
    )
}

/// Reads a solution file. A header-only file yields an empty solution with
/// event id 0.
pub fn read_solution(path: &Path) -> Result<Solution> {
    let rows: Vec<SolutionRecord> = read_records(path)?;
    let mut sol = Solution::new(rows.first().map(|r| r.event_id).unwrap_or(0));
    for (i, r) in rows.into_iter().enumerate() {
        let line = i as u64 + 2;
        if r.event_id != sol.event_id {
            return Err(Error::parse(
                path,
                line,
                format!("event_id {} differs from {}", r.event_id, sol.event_id),
            ));
        }
        if sol.assignment.insert(r.hit_id, r.track_id).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("hit_id {} listed twice", r.hit_id),
            ));
        }
    }
    Ok(sol)
}
