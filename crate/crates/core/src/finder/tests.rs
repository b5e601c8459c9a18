use super::*;
use crate::eval::{accuracy_score, particle_efficiency};
use crate::event::{Event, UNASSIGNED};
use crate::geometry::default_detector;
use crate::synth::{generate_event, GenConfig};
use std::collections::HashSet;

fn clean_single() -> GenConfig {
    GenConfig {
        n_primaries: 1,
        duplicate_prob: 0.0,
        secondary_fraction: 0.0,
        pt_range: (1.0, 5.0),
        eta_range: (-1.0, 1.0),
        ..GenConfig::noiseless()
    }
}

/// First generated single-particle event with at least `min_hits` hits.
fn single_track_event(min_hits: usize) -> Event {
    let det = default_detector();
    (0..200)
        .map(|id| generate_event(&clean_single(), &det, id).unwrap())
        .find(|e| e.hits.len() >= min_hits)
        .expect("no long enough track generated")
}

fn one_pass(index: usize) -> Schedule {
    let s = Schedule::default_for(&default_detector());
    Schedule {
        passes: vec![s.passes[index].clone()],
    }
}

fn assert_disjoint(tracks: &[Track]) {
    let mut seen = HashSet::new();
    for t in tracks {
        for h in &t.hit_ids {
            assert!(seen.insert(*h), "hit {h} in two tracks");
        }
    }
}

#[test]
fn empty_event_gives_empty_solution() {
    let det = default_detector();
    let ev = Event::default();
    let out = run_with(&ev, &det, &Schedule::default_for(&det), &RunOptions::default());
    assert!(out.tracks.is_empty());
    assert!(out.solution.assignment.is_empty());
}

#[test]
fn single_track_found_whole() {
    let det = default_detector();
    let ev = single_track_event(8);
    let sol = run(&ev, &det, &Schedule::default_for(&det));
    let ids: HashSet<_> = ev.hits.iter().map(|h| sol.track_of(h.hit_id)).collect();
    assert_eq!(ids.len(), 1);
    assert!(!ids.contains(&UNASSIGNED));
}

#[test]
fn hole_is_bridged() {
    let det = default_detector();
    let mut ev = single_track_event(8);
    // drop a hit well outside the seeding layers
    let mut by_r: Vec<_> = ev.hits.iter().map(|h| (h.r(), h.hit_id)).collect();
    by_r.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gone = by_r[5].1;
    ev.hits.retain(|h| h.hit_id != gone);
    ev.truth.retain(|t| t.hit_id != gone);
    let sol = run(&ev, &det, &Schedule::default_for(&det));
    let ids: HashSet<_> = ev.hits.iter().map(|h| sol.track_of(h.hit_id)).collect();
    assert_eq!(ids.len(), 1);
    assert!(!ids.contains(&UNASSIGNED));
}

#[test]
fn shifted_middle_hit_fails_the_seed_cut() {
    let det = default_detector();
    let mut ev = single_track_event(8);
    let sched = one_pass(0);
    let out = run_with(&ev, &det, &sched, &RunOptions::default());
    assert_eq!(out.passes[0].tracklets, 1);
    let middle = det.index_of(sched.passes[0].base_layers[1]).unwrap();
    for h in &mut ev.hits {
        if det.layer_of_hit(h) == Some(middle) {
            h.z += 5.0;
        }
    }
    let out = run_with(&ev, &det, &sched, &RunOptions::default());
    assert_eq!(out.passes[0].tracklets, 0);
    assert!(out.tracks.is_empty());
}

#[test]
fn dense_noiseless_event_separated() {
    let det = default_detector();
    let cfg = GenConfig {
        n_primaries: 60,
        eta_range: (-0.5, 0.5),
        ..GenConfig::noiseless()
    };
    let ev = generate_event(&cfg, &det, 3).unwrap();
    let out = run_with(&ev, &det, &Schedule::default_for(&det), &RunOptions::default());
    assert_disjoint(&out.tracks);
    assert!(accuracy_score(&ev, &out.solution).unwrap() > 0.99);
    assert_eq!(particle_efficiency(&ev, &out.solution).unwrap().efficiency, 1.0);
}

#[test]
fn grid_matches_reference_on_small_events() {
    let det = default_detector();
    let cfg = GenConfig {
        n_primaries: 15,
        ..Default::default()
    };
    for pass in 0..3 {
        let sched = one_pass(pass);
        for id in 0..4 {
            let ev = generate_event(&cfg, &det, id).unwrap();
            let fast = run_with(&ev, &det, &sched, &RunOptions { workers: 2 });
            let slow = reference::run_reference(&ev, &det, &sched);
            assert_eq!(fast.tracks, slow.tracks, "pass {pass} event {id}");
            assert_eq!(fast.passes, slow.passes);
        }
    }
}

#[test]
fn worker_count_does_not_change_result() {
    let det = default_detector();
    let ev = generate_event(&GenConfig::default(), &det, 11).unwrap();
    let sched = Schedule::default_for(&det);
    let a = run_with(&ev, &det, &sched, &RunOptions { workers: 1 });
    let b = run_with(&ev, &det, &sched, &RunOptions { workers: 2 });
    let c = run_with(&ev, &det, &sched, &RunOptions { workers: 2 });
    assert_eq!(a.solution, b.solution);
    assert_eq!(b, c);
    assert_disjoint(&a.tracks);
    a.solution.validate_against(&ev).unwrap();
}

#[test]
fn track_ids_are_sequential() {
    let det = default_detector();
    let ev = generate_event(&GenConfig::default(), &det, 5).unwrap();
    let out = run_with(&ev, &det, &Schedule::default_for(&det), &RunOptions::default());
    for (i, t) in out.tracks.iter().enumerate() {
        assert_eq!(t.track_id, i as u64 + 1);
        assert!(t.hit_ids.windows(2).all(|w| w[0] < w[1]));
        assert!(t.hit_ids.len() >= 3);
    }
    let accepted: usize = out.passes.iter().map(|p| p.accepted).sum();
    assert_eq!(accepted, out.tracks.len());
}
