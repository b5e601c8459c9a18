use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mikado::eval::{self, AccuracyOptions, EfficiencyOptions, Variable};
use mikado::event::{self, Event, Solution};
use mikado::field_fit::{fit_fields, FieldFitOptions};
use mikado::finder::tune::{tune_schedule, CriterionWeights, TuneOptions, PARAMETERS};
use mikado::finder::{Finder, RunOptions, Schedule};
use mikado::geometry::{self, Detector, DetectorLayout};
use mikado::synth::{generate_event, GenConfig};
use mikado::{Error, Result};

const ENV_SCHEDULE: &str = "TRK_SCHEDULE";
const ENV_GEOMETRY: &str = "TRK_GEOMETRY";

/// Combinatorial track finding on synthetic collider events.
#[derive(Parser)]
#[command(name = "mikado", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic events into a directory.
    Generate(GenerateArgs),
    /// Run the finder on every event of a directory and write solutions.
    Reconstruct(ReconstructArgs),
    /// Score solutions against truth and print a JSON report.
    Score(ScoreArgs),
    /// Write binned efficiency and nearest-neighbour distance tables as CSV.
    Analyze(AnalyzeArgs),
    /// Time the finder on events held in memory.
    Bench(BenchArgs),
    /// Tune the windows of every pass of a schedule on training events.
    Tune(TuneArgs),
    /// Measure per-layer field polynomials from truth.
    FitField(FitFieldArgs),
    /// Write one of the built-in defaults.
    Defaults(DefaultsArgs),
}

/// Options shared by every subcommand that needs a detector or schedule.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration. Its keys are overridden by flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Detector geometry: layer CSV, or layout TOML when the name ends in
    /// `.toml`. Falls back to $TRK_GEOMETRY, then to the built-in detector.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Per-layer field polynomials (CSV, tesla). Default: uniform field of
    /// the geometry.
    #[arg(long)]
    fields: Option<PathBuf>,
    /// Schedule TOML. Falls back to $TRK_SCHEDULE, then to the built-in
    /// schedule for the detector.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Finder worker threads (at least 1). Default 2.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of events.
    #[arg(long, default_value_t = 1)]
    events: u64,
    /// Primary particles per event. Default 200.
    #[arg(long)]
    tracks: Option<usize>,
    /// Random seed. Default 1.
    #[arg(long)]
    seed: Option<u64>,
    /// Id of the first event.
    #[arg(long, default_value_t = 0)]
    first_id: u64,
    /// Turn off smearing, noise and holes.
    #[arg(long)]
    noiseless: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of event files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for solution files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory of event files with truth.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory of solution files.
    #[arg(long)]
    solutions: PathBuf,
    /// Seconds per event to use in the throughput score.
    #[arg(long)]
    time: Option<f64>,
    /// Also require each track to hold more than half of its particle's hits.
    #[arg(long)]
    double_majority: bool,
    /// Write per-event accuracy as CSV here.
    #[arg(long)]
    per_event: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory of event files with truth.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory of solution files.
    #[arg(long)]
    solutions: PathBuf,
    /// Output directory for efficiency.csv and delta_r.csv.
    #[arg(long)]
    out: PathBuf,
    /// Binning as `variable=low:high:count`, repeatable. Variables:
    /// log10_pt (GeV), phi (rad), eta, r0 (mm), z0 (mm). Unlisted variables
    /// use their default bins.
    #[arg(long = "bins")]
    bins: Vec<String>,
    /// Add rows per charge sign.
    #[arg(long)]
    charge_split: bool,
    /// Primaries crossing fewer distinct layers are left out. 0 keeps all.
    #[arg(long, default_value_t = 3)]
    min_layers: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of event files with truth.
    #[arg(long = "in")]
    input: PathBuf,
    /// Times each event is reconstructed.
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Use the double-majority accuracy.
    #[arg(long)]
    double_majority: bool,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of training events with truth.
    #[arg(long = "in")]
    input: PathBuf,
    /// Where to write the tuned schedule (TOML).
    #[arg(long)]
    out: PathBuf,
    /// Parameter probes per pass.
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// First relative step of every scale factor.
    #[arg(long, default_value_t = 0.5)]
    initial_step: f64,
    /// Stop once the step falls below this.
    #[arg(long, default_value_t = 1e-3)]
    min_step: f64,
    /// Comma-separated subset of scale factors to tune. Default: all.
    #[arg(long, value_delimiter = ',')]
    parameters: Vec<String>,
    /// Criterion weight of each correctly found particle.
    #[arg(long, default_value_t = 1.0)]
    weight_matched: f64,
    /// Criterion penalty per wrongly assigned hit.
    #[arg(long, default_value_t = 0.2)]
    weight_wrong: f64,
}

#[derive(Args)]
struct FitFieldArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of events with truth.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output field CSV.
    #[arg(long)]
    out: PathBuf,
    /// Polynomial degree in the layer coordinate (mm).
    #[arg(long, default_value_t = 2)]
    degree: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefaultKind {
    /// Finder schedule (TOML).
    Schedule,
    /// Detector layers (CSV).
    Geometry,
    /// Detector layout parameters (TOML).
    Layout,
    /// Generator settings (TOML).
    Generator,
}

#[derive(Args)]
struct DefaultsArgs {
    #[command(flatten)]
    common: Common,
    what: DefaultKind,
    /// Output file. TOML kinds go to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    geometry: Option<PathBuf>,
    fields: Option<PathBuf>,
    schedule: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
    generator: Option<GenConfig>,
}

/// Settings after applying flag > config file > environment > default.
#[derive(Debug, Serialize)]
struct RunConfig {
    subcommand: &'static str,
    geometry: Option<PathBuf>,
    fields: Option<PathBuf>,
    schedule: Option<PathBuf>,
    workers: usize,
    config: Option<PathBuf>,
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).filter(|v| !v.is_empty()).map(PathBuf::from)
}

struct Resolved {
    detector: Detector,
    schedule: Schedule,
    workers: usize,
    file: FileConfig,
}

fn resolve(subcommand: &'static str, common: &Common) -> Result<Resolved> {
    let file = read_file_config(common.config.as_deref())?;
    let run = RunConfig {
        subcommand,
        geometry: common.geometry.clone().or(file.geometry.clone()).or_else(|| env_path(ENV_GEOMETRY)),
        fields: common.fields.clone().or(file.fields.clone()),
        schedule: common.schedule.clone().or(file.schedule.clone()).or_else(|| env_path(ENV_SCHEDULE)),
        workers: common.workers.or(file.workers).unwrap_or(2),
        config: common.config.clone(),
    };
    if run.workers == 0 {
        return Err(Error::validation("--workers must be at least 1"));
    }
    eprintln!(
        "config: {}",
        serde_json::to_string(&run).expect("run config serializes")
    );
    let mut detector = match &run.geometry {
        None => geometry::default_detector(),
        Some(p) => geometry::load_detector(p)?,
    };
    if let Some(p) = &run.fields {
        detector.set_fields(geometry::load_fields(p)?)?;
    }
    let schedule = match &run.schedule {
        None => Schedule::default_for(&detector),
        Some(p) => Schedule::load(p)?,
    };
    schedule.validate_for(&detector)?;
    Ok(Resolved {
        detector,
        schedule,
        workers: run.workers,
        file,
    })
}

fn load_events(dir: &Path, with_truth: bool) -> Result<Vec<Event>> {
    let ids = event::list_event_ids(dir)?;
    if ids.is_empty() {
        return Err(Error::validation(format!("no events in {}", dir.display())));
    }
    ids.into_iter().map(|id| event::load_event(dir, id, with_truth)).collect()
}

fn load_solutions(dir: &Path, events: &[Event]) -> Result<Vec<Solution>> {
    events
        .iter()
        .map(|e| {
            let s = event::read_solution(&event::solution_path(dir, e.event_id))?;
            s.validate_against(e)?;
            Ok(s)
        })
        .collect()
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let r = resolve("generate", &a.common)?;
    let mut cfg = r.file.generator.clone().unwrap_or_default();
    if a.noiseless {
        let clean = GenConfig::noiseless();
        cfg.hit_sigma = clean.hit_sigma;
        cfg.noise_fraction = clean.noise_fraction;
        cfg.hole_prob = clean.hole_prob;
    }
    if let Some(n) = a.tracks {
        cfg.n_primaries = n;
    }
    if let Some(s) = a.seed.or(r.file.seed) {
        cfg.rng_seed = s;
    }
    cfg.validate()?;
    for id in a.first_id..a.first_id + a.events {
        let ev = generate_event(&cfg, &r.detector, id)?;
        event::write_event(&a.out, &ev)?;
    }
    eprintln!("wrote {} events to {}", a.events, a.out.display());
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let r = resolve("reconstruct", &a.common)?;
    let events = load_events(&a.input, false)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let finder = Finder::new(&r.detector, &r.schedule, &RunOptions { workers: r.workers });
    for ev in &events {
        let out = finder.run(ev);
        event::write_solution(&out.solution, &event::solution_path(&a.out, ev.event_id))?;
        eprintln!("event {}: {} tracks", ev.event_id, out.tracks.len());
    }
    Ok(())
}

fn write_per_event(report: &eval::ScoreReport, path: &Path) -> Result<()> {
    let mut text = String::from("event_id,accuracy,time\n");
    for e in &report.events {
        let t = e.time.map(|t| t.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{t}\n", e.event_id, e.accuracy));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn summary(report: &eval::ScoreReport) {
    match (report.time, report.throughput_score) {
        (Some(t), Some(s)) => eprintln!("accuracy {:.4}  time {t:.4} s/event  score {s:.2}", report.accuracy),
        _ => eprintln!("accuracy {:.4}", report.accuracy),
    }
}

fn score(a: ScoreArgs) -> Result<()> {
    let events = load_events(&a.input, true)?;
    let solutions = load_solutions(&a.solutions, &events)?;
    let opts = AccuracyOptions {
        double_majority: a.double_majority,
    };
    let report = eval::score_events(&events, &solutions, a.time, &opts)?;
    if let Some(p) = &a.per_event {
        write_per_event(&report, p)?;
    }
    summary(&report);
    emit(&serde_json::to_string_pretty(&report).expect("report serializes"), a.out.as_deref())
}

fn parse_bins(spec: &str) -> Result<(Variable, Vec<f64>)> {
    let bad = || Error::validation(format!("bad bin spec {spec:?}, expected variable=low:high:count"));
    let (name, range) = spec.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    if n == 0 || !(hi > lo) {
        return Err(bad());
    }
    let edges = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    Ok((Variable::parse(name)?, edges))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let events = load_events(&a.input, true)?;
    let solutions = load_solutions(&a.solutions, &events)?;
    let opts = EfficiencyOptions { min_layers: a.min_layers };
    let custom: Vec<(Variable, Vec<f64>)> = a.bins.iter().map(|s| parse_bins(s)).collect::<Result<_>>()?;
    let mut tables = Vec::new();
    for v in Variable::ALL {
        let edges = custom
            .iter()
            .rev()
            .find(|(cv, _)| *cv == v)
            .map(|(_, e)| e.clone())
            .unwrap_or_else(|| v.default_bins());
        tables.push(eval::binned_efficiency(&events, &solutions, v, &edges, a.charge_split, &opts)?);
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    eval::write_efficiency_csv(&tables, &a.out.join("efficiency.csv"))?;
    let mut rows = Vec::new();
    for (ev, sol) in events.iter().zip(&solutions) {
        let matched = eval::particle_efficiency_with(ev, sol, &opts)?.matched;
        for n in eval::delta_r_nearest(ev)? {
            rows.push((ev.event_id, n, matched.get(&n.particle_id).copied()));
        }
    }
    eval::write_delta_r_csv(&rows, &a.out.join("delta_r.csv"))?;
    eprintln!("wrote efficiency.csv and delta_r.csv to {}", a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let r = resolve("bench", &a.common)?;
    // every path is read and checked before the clock starts
    let events = load_events(&a.input, true)?;
    let finder = Finder::new(&r.detector, &r.schedule, &RunOptions { workers: r.workers });
    let acc = AccuracyOptions {
        double_majority: a.double_majority,
    };
    let report = eval::bench(
        &events,
        |e| Ok(finder.run(e).solution),
        a.repetitions,
        &acc,
    )?;
    summary(&report);
    emit(&serde_json::to_string_pretty(&report).expect("report serializes"), a.out.as_deref())
}

fn tune(a: TuneArgs) -> Result<()> {
    let r = resolve("tune", &a.common)?;
    for p in &a.parameters {
        if !PARAMETERS.contains(&p.as_str()) {
            return Err(Error::validation(format!(
                "unknown tuning parameter {p:?}; known: {}",
                PARAMETERS.join(", ")
            )));
        }
    }
    let events = load_events(&a.input, true)?;
    let opts = TuneOptions {
        initial_step: a.initial_step,
        max_iters: a.max_iters,
        min_step: a.min_step,
        parameters: a.parameters.clone(),
    };
    let weights = CriterionWeights {
        matched: a.weight_matched,
        wrong: a.weight_wrong,
    };
    let (tuned, results) = tune_schedule(&r.schedule, &events, &r.detector, &weights, &opts)?;
    for (p, res) in tuned.passes.iter().zip(&results) {
        eprintln!(
            "{}: criterion {:.2} after {} probes, scales {:?}",
            p.name, res.value, res.iterations, res.params
        );
    }
    tuned.save(&a.out)
}

fn fit_field(a: FitFieldArgs) -> Result<()> {
    let r = resolve("fit-field", &a.common)?;
    let events = load_events(&a.input, true)?;
    let opts = FieldFitOptions {
        degree: a.degree,
        ..Default::default()
    };
    let fields = fit_fields(&events, &r.detector, &opts)?;
    geometry::write_fields(&fields, &a.out)
}

fn defaults(a: DefaultsArgs) -> Result<()> {
    let out = a.out.as_deref();
    match a.what {
        DefaultKind::Schedule => {
            let r = resolve("defaults", &a.common)?;
            emit(&Schedule::default_for(&r.detector).to_toml(), out)
        }
        DefaultKind::Layout => emit(
            &toml::to_string(&DetectorLayout::default()).expect("layout serializes"),
            out,
        ),
        DefaultKind::Generator => emit(
            &toml::to_string(&GenConfig::default()).expect("generator config serializes"),
            out,
        ),
        DefaultKind::Geometry => {
            let Some(p) = out else {
                return Err(Error::validation("geometry needs --out"));
            };
            let r = resolve("defaults", &a.common)?;
            geometry::write_geometry(&r.detector, p)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Score(a) => score(a),
        Command::Analyze(a) => analyze(a),
        Command::Bench(a) => bench(a),
        Command::Tune(a) => tune(a),
        Command::FitField(a) => fit_field(a),
        Command::Defaults(a) => defaults(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
