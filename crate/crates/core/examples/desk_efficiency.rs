//! Runs the default schedule on a handful of generated events and prints
//! efficiency, accuracy and timing per configuration.
//!
//! cargo run --release --example desk_efficiency -- [n_events]

use std::time::Instant;

use mikado::eval::{accuracy_score, particle_efficiency};
use mikado::finder::{run_with, RunOptions, Schedule};
use mikado::geometry::default_detector;
use mikado::synth::{generate_event, GenConfig};

fn main() -> mikado::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let detector = default_detector();
    let schedule = Schedule::default_for(&detector);
    for (label, cfg) in [("noiseless", GenConfig::noiseless()), ("smeared", GenConfig::default())] {
        let (mut eff, mut acc, mut secs) = (0.0, 0.0, 0.0);
        let mut per_pass = vec![0usize; schedule.passes.len()];
        for id in 0..n {
            let event = generate_event(&cfg, &detector, id)?;
            let start = Instant::now();
            let out = run_with(&event, &detector, &schedule, &RunOptions::default());
            secs += start.elapsed().as_secs_f64();
            for (i, p) in out.passes.iter().enumerate() {
                per_pass[i] += p.accepted;
            }
            eff += particle_efficiency(&event, &out.solution)?.efficiency;
            acc += accuracy_score(&event, &out.solution)?;
        }
        let n = n as f64;
        println!(
            "{label}: efficiency {:.4} accuracy {:.4} time {:.1} ms/event",
            eff / n,
            acc / n,
            1e3 * secs / n
        );
        for (p, count) in schedule.passes.iter().zip(&per_pass) {
            println!("  {:<24} {count}", p.name);
        }
    }
    Ok(())
}
