use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mikado_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = mikado_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn generate_reconstruct_score_roundtrip() {
    unsafe {
        let mut det = ptr::null_mut();
        assert_eq!(mikado_detector_default(&mut det), MikadoStatus::Ok);
        assert!(mikado_detector_num_layers(det) > 0);
        let mut sched = ptr::null_mut();
        assert_eq!(mikado_schedule_default(det, &mut sched), MikadoStatus::Ok);
        assert!(mikado_schedule_num_passes(sched) > 0);

        let mut ev = ptr::null_mut();
        assert_eq!(mikado_event_generate(det, 30, 7, 4, true, &mut ev), MikadoStatus::Ok);
        assert_eq!(mikado_event_id(ev), 4);
        assert!(mikado_event_has_truth(ev));
        let n = mikado_event_num_hits(ev);
        assert!(n > 100);

        let mut one = ptr::null_mut();
        let mut two = ptr::null_mut();
        assert_eq!(mikado_reconstruct(det, sched, ev, 1, &mut one), MikadoStatus::Ok);
        assert_eq!(mikado_reconstruct(det, sched, ev, 2, &mut two), MikadoStatus::Ok);
        assert_eq!(mikado_solution_len(one), n);
        assert!(mikado_solution_num_tracks(one) >= 10);

        let mut hits = vec![0u64; n];
        let mut tracks = vec![0u64; n];
        let mut hits2 = vec![0u64; n];
        let mut tracks2 = vec![0u64; n];
        let mut written = 0usize;
        assert_eq!(
            mikado_solution_copy(one, hits.as_mut_ptr(), tracks.as_mut_ptr(), n, &mut written),
            MikadoStatus::Ok
        );
        assert_eq!(written, n);
        mikado_solution_copy(two, hits2.as_mut_ptr(), tracks2.as_mut_ptr(), n, &mut written);
        assert_eq!((&hits, &tracks), (&hits2, &tracks2));
        assert!(hits.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(mikado_solution_track_of(one, hits[0]), tracks[0]);

        let mut acc = 0.0;
        assert_eq!(mikado_accuracy_score(ev, one, false, &mut acc), MikadoStatus::Ok);
        assert!(acc > 0.95, "accuracy {acc}");
        let mut eff = 0.0;
        assert_eq!(mikado_particle_efficiency(ev, one, &mut eff), MikadoStatus::Ok);
        assert!(eff > 0.95, "efficiency {eff}");

        // files written through the interface read back identically
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(mikado_event_write(ev, cstr(dir.path()).as_ptr()), MikadoStatus::Ok);
        let sol_path = dir.path().join("sol.csv");
        assert_eq!(mikado_solution_write(one, cstr(&sol_path).as_ptr()), MikadoStatus::Ok);
        let mut ev2 = ptr::null_mut();
        assert_eq!(mikado_event_load(cstr(dir.path()).as_ptr(), 4, true, &mut ev2), MikadoStatus::Ok);
        let mut sol2 = ptr::null_mut();
        assert_eq!(mikado_solution_read(cstr(&sol_path).as_ptr(), &mut sol2), MikadoStatus::Ok);
        let mut acc2 = 0.0;
        assert_eq!(mikado_accuracy_score(ev2, sol2, false, &mut acc2), MikadoStatus::Ok);
        assert_eq!(acc, acc2);

        mikado_solution_free(one);
        mikado_solution_free(two);
        mikado_solution_free(sol2);
        mikado_event_free(ev);
        mikado_event_free(ev2);
        mikado_schedule_free(sched);
        mikado_detector_free(det);
    }
}

#[test]
fn hits_from_arrays() {
    unsafe {
        let ids = [1u64, 2, 3];
        let x = [32.0, 72.0, 116.0];
        let y = [0.0; 3];
        let z = [1.0, 2.0, 3.0];
        let vol = [8u32; 3];
        let lay = [2u32, 4, 6];
        let module = [1u32; 3];
        let mut ev = ptr::null_mut();
        let s = mikado_event_from_hits(
            9,
            3,
            ids.as_ptr(),
            x.as_ptr(),
            y.as_ptr(),
            z.as_ptr(),
            vol.as_ptr(),
            lay.as_ptr(),
            module.as_ptr(),
            &mut ev,
        );
        assert_eq!(s, MikadoStatus::Ok);
        assert_eq!(mikado_event_num_hits(ev), 3);
        assert!(!mikado_event_has_truth(ev));

        // scoring needs truth
        let mut det = ptr::null_mut();
        mikado_detector_default(&mut det);
        let mut sched = ptr::null_mut();
        mikado_schedule_default(det, &mut sched);
        let mut sol = ptr::null_mut();
        assert_eq!(mikado_reconstruct(det, sched, ev, 0, &mut sol), MikadoStatus::Ok);
        let mut acc = 0.0;
        assert_eq!(mikado_accuracy_score(ev, sol, false, &mut acc), MikadoStatus::Validation);
        assert!(last_error().contains("truth"), "{}", last_error());

        // duplicate hit ids are rejected
        let dup = [1u64, 1, 3];
        let mut bad = ptr::null_mut();
        let s = mikado_event_from_hits(
            9,
            3,
            dup.as_ptr(),
            x.as_ptr(),
            y.as_ptr(),
            z.as_ptr(),
            vol.as_ptr(),
            lay.as_ptr(),
            module.as_ptr(),
            &mut bad,
        );
        assert_eq!(s, MikadoStatus::Validation);
        assert!(bad.is_null());

        mikado_solution_free(sol);
        mikado_schedule_free(sched);
        mikado_detector_free(det);
        mikado_event_free(ev);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut det = ptr::null_mut();
        let missing = CString::new("/nonexistent/geometry.csv").unwrap();
        assert_eq!(mikado_detector_load(missing.as_ptr(), &mut det), MikadoStatus::Io);
        assert!(last_error().contains("/nonexistent/geometry.csv"));
        assert!(det.is_null());

        assert_eq!(mikado_detector_load(ptr::null(), &mut det), MikadoStatus::NullPointer);
        assert_eq!(mikado_detector_default(ptr::null_mut()), MikadoStatus::NullPointer);

        let bad = [0xffu8, 0xfe, 0];
        let s = mikado_detector_load(bad.as_ptr().cast(), &mut det);
        assert_eq!(s, MikadoStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("geometry.csv");
        std::fs::write(&path, "volume_id,layer_id,kind,dim1,dim2,dim3,subdetector\n8,2,X,1,2,3,pixel\n").unwrap();
        assert_eq!(mikado_detector_load(cstr(&path).as_ptr(), &mut det), MikadoStatus::Parse);
        assert!(last_error().contains(":2:"), "{}", last_error());

        let mut score = 0.0;
        assert_eq!(mikado_throughput_score(0.944, 0.56, &mut score), MikadoStatus::Ok);
        assert!((score - 1.17).abs() < 0.01);
        assert_eq!(mikado_throughput_score(0.944, 0.0, &mut score), MikadoStatus::Domain);
        assert_eq!(mikado_throughput_score(0.944, 1.0, ptr::null_mut()), MikadoStatus::NullPointer);

        // accessors tolerate null handles
        assert_eq!(mikado_event_num_hits(ptr::null()), 0);
        assert_eq!(mikado_solution_track_of(ptr::null(), 3), 0);
        mikado_event_free(ptr::null_mut());

        let name = CStr::from_ptr(mikado_status_name(MikadoStatus::Io));
        assert_eq!(name.to_str().unwrap(), "i/o error");
    }
}

#[test]
fn errors_are_per_thread() {
    let mut det = ptr::null_mut();
    let missing = CString::new("/nonexistent/a.csv").unwrap();
    unsafe { mikado_detector_load(missing.as_ptr(), &mut det) };
    std::thread::spawn(|| assert!(mikado_last_error().is_null()))
        .join()
        .unwrap();
    assert!(last_error().contains("a.csv"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mikado.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 20);
    for f in exports {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(text.contains("typedef struct MikadoEvent MikadoEvent;"));
    assert!(text.contains("MIKADO_STATUS_OK = 0"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "mikado.h"

int main(void) {
    MikadoDetector *det = NULL;
    MikadoSchedule *sched = NULL;
    MikadoEvent *ev = NULL;
    MikadoSolution *sol = NULL;
    double acc = 0.0;
    if (mikado_detector_default(&det) != MIKADO_STATUS_OK) return 1;
    if (mikado_schedule_default(det, &sched) != MIKADO_STATUS_OK) return 2;
    if (mikado_event_generate(det, 20, 1, 0, true, &ev) != MIKADO_STATUS_OK) return 3;
    if (mikado_reconstruct(det, sched, ev, 1, &sol) != MIKADO_STATUS_OK) return 4;
    if (mikado_accuracy_score(ev, sol, false, &acc) != MIKADO_STATUS_OK) return 5;
    if (mikado_detector_load("/nonexistent.csv", &det) != MIKADO_STATUS_IO) return 6;
    printf("%.3f %s\n", acc, mikado_last_error());
    mikado_solution_free(sol);
    mikado_event_free(ev);
    mikado_schedule_free(sched);
    mikado_detector_free(det);
    return acc > 0.9 ? 0 : 7;
}
"#;

/// Compiles a small C program against the header and the static library.
/// Skipped when no C compiler is on the path.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    // target/<profile>/deps/<this test> -> target/<profile>/libmikado_ffi.a
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libmikado_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}: {stdout}", out.status.code());
    assert!(stdout.contains("nonexistent.csv"), "{stdout}");
}
