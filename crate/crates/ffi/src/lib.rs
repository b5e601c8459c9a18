//! C interface to the mikado track finder.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! constructor such as `mikado_detector_default` or `mikado_event_load` and released with the matching
//! `mikado_*_free`. Fallible functions return a [`MikadoStatus`]; on failure
//! the message is available from [`mikado_last_error`] on the same thread
//! until the next failing call.
//!
//! Paths are NUL-terminated UTF-8. No function keeps a pointer passed in by
//! the caller after it returns.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mikado::eval::{self, AccuracyOptions};
use mikado::event::{self, Event, Hit, Solution};
use mikado::finder::{Finder, RunOptions, Schedule};
use mikado::geometry::{self, Detector};
use mikado::synth::{generate_event, GenConfig};
use mikado::Error;

/// Result of a fallible call. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MikadoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Geometry = 6,
    Domain = 7,
    Degenerate = 8,
    Panic = 9,
}

/// Detector layout with its field map.
pub struct MikadoDetector(Detector);

/// Ordered list of finder passes.
pub struct MikadoSchedule(Schedule);

/// Hits of one event, optionally with truth.
pub struct MikadoEvent(Event);

/// Track label for every hit of an event.
pub struct MikadoSolution(Solution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MikadoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => MikadoStatus::Io,
            Error::Parse { .. } => MikadoStatus::Parse,
            Error::Validation(_) => MikadoStatus::Validation,
            Error::Geometry(_) => MikadoStatus::Geometry,
            Error::Domain(_) => MikadoStatus::Domain,
            Error::Degenerate(_) => MikadoStatus::Degenerate,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MikadoStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MikadoStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MikadoStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            MikadoStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MikadoStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null if none failed.
/// The string stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn mikado_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn mikado_status_name(status: MikadoStatus) -> *const c_char {
    let s: &'static CStr = match status {
        MikadoStatus::Ok => c"ok",
        MikadoStatus::NullPointer => c"null pointer",
        MikadoStatus::InvalidArgument => c"invalid argument",
        MikadoStatus::Io => c"i/o error",
        MikadoStatus::Parse => c"parse error",
        MikadoStatus::Validation => c"validation error",
        MikadoStatus::Geometry => c"geometry error",
        MikadoStatus::Domain => c"domain error",
        MikadoStatus::Degenerate => c"degenerate input",
        MikadoStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

// ---- detector ----

/// The built-in layout with a uniform 2 T field.
#[no_mangle]
pub unsafe extern "C" fn mikado_detector_default(out: *mut *mut MikadoDetector) -> MikadoStatus {
    guard(|| put(out, MikadoDetector(geometry::default_detector())))
}

/// Reads a geometry file: CSV layer table, or a TOML layout when the name
/// ends in `.toml`.
#[no_mangle]
pub unsafe extern "C" fn mikado_detector_load(path: *const c_char, out: *mut *mut MikadoDetector) -> MikadoStatus {
    guard(|| {
        let path = path_arg(path)?;
        put(out, MikadoDetector(geometry::load_detector(&path)?))
    })
}

/// Replaces the field map of `detector` with the one in a fields CSV.
#[no_mangle]
pub unsafe extern "C" fn mikado_detector_load_fields(detector: *mut MikadoDetector, path: *const c_char) -> MikadoStatus {
    guard(|| {
        let det = detector.as_mut().ok_or_else(|| null("detector"))?;
        let fields = geometry::load_fields(&path_arg(path)?)?;
        det.0.set_fields(fields)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mikado_detector_num_layers(detector: *const MikadoDetector) -> usize {
    detector.as_ref().map_or(0, |d| d.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn mikado_detector_free(detector: *mut MikadoDetector) {
    release(detector)
}

// ---- schedule ----

/// The shipped pass list for `detector`.
#[no_mangle]
pub unsafe extern "C" fn mikado_schedule_default(
    detector: *const MikadoDetector,
    out: *mut *mut MikadoSchedule,
) -> MikadoStatus {
    guard(|| {
        let det = get(detector, "detector")?;
        put(out, MikadoSchedule(Schedule::default_for(&det.0)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mikado_schedule_load(path: *const c_char, out: *mut *mut MikadoSchedule) -> MikadoStatus {
    guard(|| {
        let path = path_arg(path)?;
        put(out, MikadoSchedule(Schedule::load(&path)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mikado_schedule_num_passes(schedule: *const MikadoSchedule) -> usize {
    schedule.as_ref().map_or(0, |s| s.0.passes.len())
}

#[no_mangle]
pub unsafe extern "C" fn mikado_schedule_free(schedule: *mut MikadoSchedule) {
    release(schedule)
}

// ---- events ----

/// Loads event `event_id` from a directory of `eventNNNNNNNNN-*.csv` files.
/// Truth and particle files are read only when `with_truth` is non-zero.
#[no_mangle]
pub unsafe extern "C" fn mikado_event_load(
    dir: *const c_char,
    event_id: u64,
    with_truth: bool,
    out: *mut *mut MikadoEvent,
) -> MikadoStatus {
    guard(|| {
        let dir = path_arg(dir)?;
        put(out, MikadoEvent(event::load_event(&dir, event_id, with_truth)?))
    })
}

/// Synthetic event with truth. `noiseless` turns off smearing, noise hits
/// and holes.
#[no_mangle]
pub unsafe extern "C" fn mikado_event_generate(
    detector: *const MikadoDetector,
    n_primaries: usize,
    seed: u64,
    event_id: u64,
    noiseless: bool,
    out: *mut *mut MikadoEvent,
) -> MikadoStatus {
    guard(|| {
        let det = get(detector, "detector")?;
        let base = if noiseless { GenConfig::noiseless() } else { GenConfig::default() };
        let cfg = GenConfig {
            n_primaries,
            rng_seed: seed,
            ..base
        };
        put(out, MikadoEvent(generate_event(&cfg, &det.0, event_id)?))
    })
}

/// Event without truth built from parallel arrays of length `n`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mikado_event_from_hits(
    event_id: u64,
    n: usize,
    hit_id: *const u64,
    x: *const f64,
    y: *const f64,
    z: *const f64,
    volume_id: *const u32,
    layer_id: *const u32,
    module_id: *const u32,
    out: *mut *mut MikadoEvent,
) -> MikadoStatus {
    guard(|| {
        let slice = |p: *const u64| if n == 0 { Ok(&[][..]) } else { get(p, "hit array").map(|p| std::slice::from_raw_parts(p, n)) };
        let ids = slice(hit_id)?;
        let coord = |p: *const f64| if n == 0 { Ok(&[][..]) } else { get(p, "coordinate array").map(|p| std::slice::from_raw_parts(p, n)) };
        let (x, y, z) = (coord(x)?, coord(y)?, coord(z)?);
        let label = |p: *const u32| if n == 0 { Ok(&[][..]) } else { get(p, "label array").map(|p| std::slice::from_raw_parts(p, n)) };
        let (v, l, m) = (label(volume_id)?, label(layer_id)?, label(module_id)?);
        let hits = (0..n)
            .map(|i| Hit {
                hit_id: ids[i],
                x: x[i],
                y: y[i],
                z: z[i],
                volume_id: v[i],
                layer_id: l[i],
                module_id: m[i],
            })
            .collect();
        let ev = Event {
            event_id,
            hits,
            ..Default::default()
        };
        ev.validate()?;
        put(out, MikadoEvent(ev))
    })
}

/// Writes the event's hits, and truth and particles if present, into `dir`.
#[no_mangle]
pub unsafe extern "C" fn mikado_event_write(ev: *const MikadoEvent, dir: *const c_char) -> MikadoStatus {
    guard(|| {
        let ev = get(ev, "event")?;
        event::write_event(&path_arg(dir)?, &ev.0)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mikado_event_num_hits(ev: *const MikadoEvent) -> usize {
    ev.as_ref().map_or(0, |e| e.0.hits.len())
}

#[no_mangle]
pub unsafe extern "C" fn mikado_event_id(ev: *const MikadoEvent) -> u64 {
    ev.as_ref().map_or(0, |e| e.0.event_id)
}

#[no_mangle]
pub unsafe extern "C" fn mikado_event_has_truth(ev: *const MikadoEvent) -> bool {
    ev.as_ref().is_some_and(|e| e.0.has_truth())
}

#[no_mangle]
pub unsafe extern "C" fn mikado_event_free(ev: *mut MikadoEvent) {
    release(ev)
}

// ---- reconstruction ----

/// Runs every pass of `schedule` over `ev`. `workers` of 0 means one per
/// available core. The result does not depend on `workers`.
#[no_mangle]
pub unsafe extern "C" fn mikado_reconstruct(
    detector: *const MikadoDetector,
    schedule: *const MikadoSchedule,
    ev: *const MikadoEvent,
    workers: usize,
    out: *mut *mut MikadoSolution,
) -> MikadoStatus {
    guard(|| {
        let det = get(detector, "detector")?;
        let sched = get(schedule, "schedule")?;
        let ev = get(ev, "event")?;
        sched.0.validate()?;
        let workers = if workers == 0 { RunOptions::default().workers } else { workers };
        let finder = Finder::new(&det.0, &sched.0, &RunOptions { workers });
        put(out, MikadoSolution(finder.run(&ev.0).solution))
    })
}

// ---- solutions ----

#[no_mangle]
pub unsafe extern "C" fn mikado_solution_read(path: *const c_char, out: *mut *mut MikadoSolution) -> MikadoStatus {
    guard(|| {
        let path = path_arg(path)?;
        put(out, MikadoSolution(event::read_solution(&path)?))
    })
}

/// Writes the solution CSV (`event_id,hit_id,track_id`) to `path`.
#[no_mangle]
pub unsafe extern "C" fn mikado_solution_write(sol: *const MikadoSolution, path: *const c_char) -> MikadoStatus {
    guard(|| {
        let sol = get(sol, "solution")?;
        event::write_solution(&sol.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Number of hits labelled, including unassigned ones (track 0).
#[no_mangle]
pub unsafe extern "C" fn mikado_solution_len(sol: *const MikadoSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.assignment.len())
}

/// Number of distinct non-zero track ids.
#[no_mangle]
pub unsafe extern "C" fn mikado_solution_num_tracks(sol: *const MikadoSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.tracks().len())
}

/// Track of `hit_id`; 0 when the hit is unassigned or unknown.
#[no_mangle]
pub unsafe extern "C" fn mikado_solution_track_of(sol: *const MikadoSolution, hit_id: u64) -> u64 {
    sol.as_ref().map_or(0, |s| s.0.track_of(hit_id))
}

/// Copies up to `capacity` (hit id, track id) pairs in hit id order and
/// stores how many were copied in `written`.
#[no_mangle]
pub unsafe extern "C" fn mikado_solution_copy(
    sol: *const MikadoSolution,
    hit_ids: *mut u64,
    track_ids: *mut u64,
    capacity: usize,
    written: *mut usize,
) -> MikadoStatus {
    guard(|| {
        let sol = get(sol, "solution")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let n = capacity.min(sol.0.assignment.len());
        if n > 0 && (hit_ids.is_null() || track_ids.is_null()) {
            return Err(null("output array"));
        }
        for (i, (h, t)) in sol.0.assignment.iter().take(n).enumerate() {
            *hit_ids.add(i) = *h;
            *track_ids.add(i) = *t;
        }
        *written = n;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mikado_solution_free(sol: *mut MikadoSolution) {
    release(sol)
}

// ---- scores ----

/// Weighted accuracy of `sol` against the truth of `ev`.
#[no_mangle]
pub unsafe extern "C" fn mikado_accuracy_score(
    ev: *const MikadoEvent,
    sol: *const MikadoSolution,
    double_majority: bool,
    out: *mut f64,
) -> MikadoStatus {
    guard(|| {
        let (ev, sol) = (get(ev, "event")?, get(sol, "solution")?);
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        sol.0.validate_against(&ev.0)?;
        *out = eval::accuracy_score_with(&ev.0, &sol.0, &AccuracyOptions { double_majority })?;
        Ok(())
    })
}

/// Fraction of reconstructable primaries with a majority track.
#[no_mangle]
pub unsafe extern "C" fn mikado_particle_efficiency(
    ev: *const MikadoEvent,
    sol: *const MikadoSolution,
    out: *mut f64,
) -> MikadoStatus {
    guard(|| {
        let (ev, sol) = (get(ev, "event")?, get(sol, "solution")?);
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        sol.0.validate_against(&ev.0)?;
        *out = eval::particle_efficiency(&ev.0, &sol.0)?.efficiency;
        Ok(())
    })
}

/// Combined score for accuracy `accuracy` at `seconds_per_event`.
#[no_mangle]
pub unsafe extern "C" fn mikado_throughput_score(accuracy: f64, seconds_per_event: f64, out: *mut f64) -> MikadoStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = eval::throughput_score(accuracy, seconds_per_event)?;
        Ok(())
    })
}
