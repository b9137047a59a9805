//! `pathsup`: turn cursor paths, detections and point tracks into box
//! trajectories, generate synthetic scenarios and evaluate results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pathsup_core::eval::{annotation_time, curve_csv, efficiency_curve, path_durations, recall_at_iou, TimeModel};
use pathsup_core::io;
use pathsup_core::synth::{generate_scenario, SynthConfig};
use pathsup_core::{Engine, ProjectConfig};

#[derive(Parser)]
#[command(name = "pathsup", version, about = "Trajectory annotation from path supervision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer one trajectory per path.
    Infer(InferArgs),
    /// Score predicted trajectories against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scenario directory.
    Simulate(SimulateArgs),
    /// Accuracy and modeled annotation time over box budgets.
    Curve(CurveArgs),
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    paths: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    boxes: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    /// Trajectories output (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Run report output (JSON).
    #[arg(long)]
    report: PathBuf,
    /// Worker threads for per-path linkage; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    iou: Vec<f64>,
    /// Also compute the modeled annotation time.
    #[arg(long, requires = "video_duration")]
    time_model: bool,
    /// Path annotations counted by the time model.
    #[arg(long, requires = "time_model")]
    paths: Option<PathBuf>,
    /// Box annotations counted by the time model.
    #[arg(long, requires = "time_model")]
    boxes: Option<PathBuf>,
    #[arg(long)]
    video_duration: Option<f64>,
    /// Frame rate used to convert path lengths to seconds.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long, default_value_t = TimeModel::default().seconds_per_box)]
    seconds_per_box: f64,
    #[arg(long, default_value_t = TimeModel::default().path_slowdown)]
    path_slowdown: f64,
    /// Full report output (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with an optional [engine] and a [synth] section.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    /// Scenario directory as written by `simulate`.
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated boxes-per-trajectory budgets.
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,10")]
    budgets: Vec<usize>,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    iou: Vec<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn flag_context(flag: &str, path: &Path) -> String {
    format!("--{flag} {}", path.display())
}

fn run_infer(args: InferArgs) -> Result<()> {
    let project = ProjectConfig::load(&args.config).with_context(|| flag_context("config", &args.config))?;
    let detections =
        io::load_detections(&args.detections).with_context(|| flag_context("detections", &args.detections))?;
    let paths = io::load_paths(&args.paths).with_context(|| flag_context("paths", &args.paths))?;
    let tracks = io::load_tracks(&args.tracks).with_context(|| flag_context("tracks", &args.tracks))?;
    let boxes = match &args.boxes {
        Some(p) => io::load_boxes(p).with_context(|| flag_context("boxes", p))?,
        None => Vec::new(),
    };
    let mut engine = Engine::new(project.engine).context("--config: invalid engine settings")?;
    if let Some(jobs) = args.jobs {
        engine = engine.with_jobs(jobs);
    }
    let output = engine.run(&detections, &tracks, &paths, &boxes)?;
    for w in &output.report.warnings {
        log::warn!("{w}");
    }
    io::save_trajectories(&args.out, &output.trajectories).with_context(|| flag_context("out", &args.out))?;
    let report = serde_json::to_string_pretty(&output.report)?;
    std::fs::write(&args.report, report + "\n").with_context(|| flag_context("report", &args.report))?;
    println!(
        "{} trajectories from {} paths, {} detections pruned, {} failed",
        output.trajectories.len(),
        paths.len(),
        output.report.pruned,
        output.report.failures.len()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let pred = io::load_trajectories(&args.pred).with_context(|| flag_context("pred", &args.pred))?;
    let gt = io::load_gt(&args.gt).with_context(|| flag_context("gt", &args.gt))?;
    let mut report = recall_at_iou(&pred, &gt, &args.iou).context("--iou")?;
    for t in &report.thresholds {
        println!("recall@{} {} ({}/{})", t.iou, t.recall, t.recalled, t.total);
    }
    for id in &report.missing_predictions {
        println!("missing prediction for path {id}");
    }
    for id in &report.unmatched_predictions {
        println!("prediction for unknown path {id}");
    }
    if args.time_model {
        let model = TimeModel {
            seconds_per_box: args.seconds_per_box,
            path_slowdown: args.path_slowdown,
        };
        if args.fps.is_nan() || args.fps <= 0.0 {
            bail!("--fps must be positive");
        }
        let paths = match &args.paths {
            Some(p) => io::load_paths(p).with_context(|| flag_context("paths", p))?,
            None => Vec::new(),
        };
        let n_boxes = match &args.boxes {
            Some(p) => io::load_boxes(p).with_context(|| flag_context("boxes", p))?.len(),
            None => 0,
        };
        let duration = args.video_duration.expect("required by clap");
        let time = annotation_time(path_durations(&paths, args.fps), n_boxes, duration, &model);
        println!("annotation_time {time}");
        report.total_annotation_time = Some(time);
    }
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, json + "\n").with_context(|| flag_context("report", path))?;
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let project = ProjectConfig::load(&args.config).with_context(|| flag_context("config", &args.config))?;
    let synth = project.synth.unwrap_or_else(SynthConfig::default);
    let mut engine = project.engine;
    if engine.fps != synth.fps {
        log::info!("engine fps {} replaced by the scenario's {}", engine.fps, synth.fps);
        engine.fps = synth.fps;
    }
    let scenario = generate_scenario(&synth).context("--config: invalid [synth] section")?;
    io::write_scenario(&args.out_dir, &scenario, &engine).with_context(|| flag_context("out-dir", &args.out_dir))?;
    println!(
        "{} objects, {} frames, {} detections, {} tracks, {} boxes written to {}",
        scenario.ground_truth.len(),
        synth.n_frames,
        scenario.detections.len(),
        scenario.tracks.len(),
        scenario.boxes.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn run_curve(args: CurveArgs) -> Result<()> {
    let (scenario, engine) =
        io::read_scenario(&args.scenario).with_context(|| flag_context("scenario", &args.scenario))?;
    let compute = || efficiency_curve(&scenario, &args.budgets, &engine, &args.iou, &TimeModel::default());
    let points = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()?
            .install(compute),
        None => compute(),
    }?;
    let csv = curve_csv(&points);
    std::fs::write(&args.out, &csv).with_context(|| flag_context("out", &args.out))?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Infer(a) => run_infer(a),
        Command::Eval(a) => run_eval(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Curve(a) => run_curve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
