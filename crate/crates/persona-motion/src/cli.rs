//! Command-line entry points.
//!
//! Five subcommands: `stylize` (personalize content with style, optionally
//! running the feature pipeline), `loss` (physics-loss report), `gradcheck`
//! (analytic vs finite-difference gradients), `render` (SVG output), and
//! `dataset` (manifest validation and statistics).
//!
//! Exit codes: 0 success; 1 a check ran and failed (invalid manifest,
//! failed gradient check); 2 unusable input (missing, unparseable, or
//! invalid files — clap reports usage errors with the same code); 3 a
//! precondition violation (bad flag values, sequences too short, unknown
//! labels). All diagnostics go to stderr; results and summaries go to
//! stdout or to the requested output files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{load_manifest, summarize, validate_manifest, ExpectedCounts};
use crate::personalize::{personalize, PersonalizeConfig, PersonalizeError, StopReason};
use crate::pmsr::{
    finite_diff_gradient, gradient_rel_error, pmsr_gradient, pmsr_losses, random_pose_sequence,
    PmsrConfig,
};
use crate::render::{render_svg, RenderConfig};
use crate::skeleton::{canonical_topology, load_pose, save_pose, PoseIoError};
use crate::stylenet::{
    load_weights, sa_pmt_forward, seeded_weights, StylenetError, WeightIoError, DEFAULT_DIM,
    DEFAULT_HEADS,
};

/// Threshold for `gradcheck`: relative error between analytic and
/// finite-difference gradients.
const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(
    name = "persona-motion",
    version,
    about = "Pose-level motion personalization: fuse content and style pose sequences under physics-plausibility constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Personalize a content pose sequence toward a style's motion statistics
    Stylize(StylizeArgs),
    /// Evaluate the physics-plausibility losses of a pose sequence
    Loss(LossArgs),
    /// Check analytic loss gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Render a pose sequence to a static or animated SVG
    Render(RenderArgs),
    /// Validate or summarize a dataset manifest
    Dataset(DatasetArgs),
}

#[derive(Args)]
struct StylizeArgs {
    /// Content pose sequence (JSON)
    #[arg(long)]
    content: PathBuf,
    /// Style pose sequence (JSON)
    #[arg(long)]
    style: PathBuf,
    /// Output path for the personalized pose sequence
    #[arg(long)]
    out: PathBuf,
    /// Output path for the optimization trace (default: OUT with a
    /// .trace.jsonl extension)
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial line-search step
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Relative-decrease threshold for the plateau stop
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Minimum separation between non-adjacent joints
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    w_content: f64,
    #[arg(long, default_value_t = 1.0)]
    w_style: f64,
    #[arg(long, default_value_t = 1.0)]
    w_stability: f64,
    #[arg(long, default_value_t = 1.0)]
    w_conn: f64,
    /// Content label selecting the semantic gate; enables the feature
    /// pipeline
    #[arg(long)]
    label: Option<String>,
    /// Weight file for the feature pipeline (default: weights seeded from
    /// --seed)
    #[arg(long, requires = "label")]
    weights: Option<PathBuf>,
    /// Output path for fused motion features (JSON)
    #[arg(long, requires = "label")]
    features_out: Option<PathBuf>,
}

#[derive(Args)]
struct LossArgs {
    /// Pose sequence to evaluate (JSON)
    #[arg(long)]
    pose: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    w_stability: f64,
    #[arg(long, default_value_t = 1.0)]
    w_conn: f64,
    /// Normalize the repulsive term by the 19 bones instead of the 171
    /// non-adjacent pairs
    #[arg(long)]
    repulsion_per_bone: bool,
    /// Also write the report to a file (compact JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-6)]
    h: f64,
    /// Number of random sequences to check (seeds seed, seed+1, ...)
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Deliberately corrupt the analytic gradient (negative control; the
    /// check must fail)
    #[arg(long)]
    corrupt_gradient: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Pose sequence to render (JSON)
    #[arg(long)]
    pose: PathBuf,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    #[arg(long, default_value_t = 2.0)]
    stroke_width: f64,
    #[arg(long, default_value_t = 3.0)]
    joint_radius: f64,
    /// Use pose coordinates as raw pixels instead of fitting to the canvas
    #[arg(long)]
    no_fit: bool,
    /// Playback fps override (default: the sequence's own fps)
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(subcommand)]
    action: DatasetAction,
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Check annotations, pose files, and declared frame counts
    Validate(ValidateArgs),
    /// Print per-content and per-style clip/frame statistics
    Stats(StatsArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Manifest file (JSON array of {name, pose_path, frames})
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    expect_styles: Option<usize>,
    #[arg(long)]
    expect_contents: Option<usize>,
    #[arg(long)]
    expect_frames: Option<usize>,
    /// Also write the report to a file (compact JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Manifest file (JSON array of {name, pose_path, frames})
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the summary to a file (compact JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    /// A check ran and failed (exit 1).
    Semantic(String),
    /// Input could not be read or parsed (exit 2).
    Input(String),
    /// A precondition on flags or sequence shapes was violated (exit 3).
    Precondition(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Semantic(m) | CliError::Input(m) | CliError::Precondition(m) => m,
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Semantic(_) => 1,
            CliError::Input(_) => 2,
            CliError::Precondition(_) => 3,
        }
    }
}

impl From<PoseIoError> for CliError {
    fn from(e: PoseIoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<WeightIoError> for CliError {
    fn from(e: WeightIoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<crate::dataset::ManifestIoError> for CliError {
    fn from(e: crate::dataset::ManifestIoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PersonalizeError> for CliError {
    fn from(e: PersonalizeError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

impl From<StylenetError> for CliError {
    fn from(e: StylenetError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

/// Parses argv, runs the chosen subcommand, and returns the process exit
/// code. Intended to be the whole body of `main`.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.message());
        return e.exit_code();
    }
    let result = match cli.command {
        Command::Stylize(args) => run_stylize(args),
        Command::Loss(args) => run_loss(args),
        Command::Gradcheck(args) => run_gradcheck(args),
        Command::Render(args) => run_render(args),
        Command::Dataset(args) => match args.action {
            DatasetAction::Validate(a) => run_validate(a),
            DatasetAction::Stats(a) => run_stats(a),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Applies PERSONA_MOTION_THREADS to the global rayon pool. Unset or empty
/// means rayon's default; anything else must be a positive integer.
fn configure_threads() -> Result<(), CliError> {
    match std::env::var("PERSONA_MOTION_THREADS") {
        Err(_) => Ok(()),
        Ok(v) if v.is_empty() => Ok(()),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // Ignore the error from a pool that is already initialized.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                Ok(())
            }
            _ => Err(CliError::Precondition(format!(
                "PERSONA_MOTION_THREADS must be a positive integer, got {:?}",
                v
            ))),
        },
    }
}

fn require(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Precondition(msg.to_string()))
    }
}

fn positive(value: f64, name: &str) -> Result<(), CliError> {
    require(
        value.is_finite() && value > 0.0,
        &format!("{} must be positive and finite, got {}", name, value),
    )
}

fn nonnegative(value: f64, name: &str) -> Result<(), CliError> {
    require(
        value.is_finite() && value >= 0.0,
        &format!("{} must be nonnegative and finite, got {}", name, value),
    )
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {}", path.display(), e)))
}

#[derive(Serialize)]
struct FeatureFile<'a> {
    label: &'a str,
    d: usize,
    frames: usize,
    features: Vec<Vec<f64>>,
}

fn run_stylize(args: StylizeArgs) -> Result<(), CliError> {
    positive(args.step, "--step")?;
    nonnegative(args.tol, "--tol")?;
    positive(args.delta, "--delta")?;
    nonnegative(args.w_content, "--w-content")?;
    nonnegative(args.w_style, "--w-style")?;
    nonnegative(args.w_stability, "--w-stability")?;
    nonnegative(args.w_conn, "--w-conn")?;

    let content = load_pose(&args.content)?;
    let style = load_pose(&args.style)?;

    let cfg = PersonalizeConfig {
        w_content: args.w_content,
        w_style: args.w_style,
        w_stability: args.w_stability,
        w_conn: args.w_conn,
        step: args.step,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        delta: args.delta,
    };
    let result = personalize(&content, &style, &cfg)?;

    let trace_path = args
        .trace_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("trace.jsonl"));
    save_pose(&result.pose, &args.out)?;
    write_file(&trace_path, &result.trace.to_jsonl())?;

    let first = &result.trace.iterations[0];
    let last = result.trace.iterations.last().unwrap();
    let reason = match result.trace.stop_reason {
        StopReason::Converged => "converged",
        StopReason::MaxIters => "max_iters",
    };
    println!(
        "personalized {} frames: {} updates, stop {}, total {:.6e} -> {:.6e}",
        result.pose.frame_count(),
        last.iteration,
        reason,
        first.total,
        last.total
    );
    println!("wrote pose to {}", args.out.display());
    println!("wrote trace to {}", trace_path.display());

    if let Some(label) = &args.label {
        let weights = match &args.weights {
            Some(path) => load_weights(path)?,
            None => seeded_weights(args.seed, DEFAULT_DIM, DEFAULT_HEADS)?,
        };
        let output = sa_pmt_forward(&content, &style, label, &weights)?;
        let (frames, d) = output.features.dim();
        println!("fused features for label {}: {} x {}", label, frames, d);
        if let Some(path) = &args.features_out {
            let file = FeatureFile {
                label,
                d,
                frames,
                features: output
                    .features
                    .rows()
                    .into_iter()
                    .map(|r| r.to_vec())
                    .collect(),
            };
            let mut text =
                serde_json::to_string(&file).expect("feature serialization cannot fail");
            text.push('\n');
            write_file(path, &text)?;
            println!("wrote features to {}", path.display());
        }
    }
    Ok(())
}

fn run_loss(args: LossArgs) -> Result<(), CliError> {
    positive(args.delta, "--delta")?;
    nonnegative(args.w_stability, "--w-stability")?;
    nonnegative(args.w_conn, "--w-conn")?;
    let pose = load_pose(&args.pose)?;
    require(
        pose.frame_count() >= 3,
        &format!(
            "need at least 3 frames to score a sequence, got {}",
            pose.frame_count()
        ),
    )?;
    let cfg = PmsrConfig {
        delta: args.delta,
        w_stability: args.w_stability,
        w_conn: args.w_conn,
        repulsion_per_bone: args.repulsion_per_bone,
    };
    let report = pmsr_losses(&pose, canonical_topology(), &cfg);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serialization cannot fail")
    );
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string(&report).expect("report serialization cannot fail");
        text.push('\n');
        write_file(out, &text)?;
    }
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    positive(args.h, "--h")?;
    positive(args.delta, "--delta")?;
    require(
        args.frames >= 3,
        &format!("need at least 3 frames to check gradients, got {}", args.frames),
    )?;
    require(args.trials >= 1, "--trials must be at least 1")?;

    let cfg = PmsrConfig {
        delta: args.delta,
        ..PmsrConfig::default()
    };
    let topo = canonical_topology();
    let mut worst = 0.0f64;
    for trial in 0..args.trials {
        let seed = args.seed.wrapping_add(trial as u64);
        let seq = random_pose_sequence(seed, args.frames);
        let mut analytic = pmsr_gradient(&seq, topo, &cfg);
        if args.corrupt_gradient {
            // Deterministic corruption that is always visible at the norm
            // scale of the gradient itself.
            let bump = 0.1 * analytic.linf_norm().max(1.0);
            analytic.values[[0, 0, 0]] += bump;
        }
        let numeric = finite_diff_gradient(&seq, topo, &cfg, args.h);
        let rel = gradient_rel_error(&analytic, &numeric);
        worst = worst.max(rel);
        let verdict = if rel < GRADCHECK_TOL { "PASS" } else { "FAIL" };
        println!(
            "trial {}: seed {} frames {} rel_error {:.3e} {}",
            trial, seed, args.frames, rel, verdict
        );
    }
    if worst < GRADCHECK_TOL {
        println!(
            "gradient check passed: {} trial(s), max rel_error {:.3e} < {:.0e}",
            args.trials, worst, GRADCHECK_TOL
        );
        Ok(())
    } else {
        Err(CliError::Semantic(format!(
            "gradient check failed: max rel_error {:.3e} >= {:.0e}",
            worst, GRADCHECK_TOL
        )))
    }
}

fn run_render(args: RenderArgs) -> Result<(), CliError> {
    require(args.width >= 1, "--width must be at least 1")?;
    require(args.height >= 1, "--height must be at least 1")?;
    positive(args.stroke_width, "--stroke-width")?;
    positive(args.joint_radius, "--joint-radius")?;
    if let Some(fps) = args.fps {
        positive(fps, "--fps")?;
    }
    let pose = load_pose(&args.pose)?;
    let cfg = RenderConfig {
        width: args.width,
        height: args.height,
        stroke_width: args.stroke_width,
        joint_radius: args.joint_radius,
        fit: !args.no_fit,
        fps_override: args.fps,
    };
    let svg = render_svg(&pose, canonical_topology(), &cfg);
    write_file(&args.out, &svg)?;
    let kind = if pose.frame_count() > 1 { "animated" } else { "static" };
    println!(
        "rendered {} frames ({}) to {}",
        pose.frame_count(),
        kind,
        args.out.display()
    );
    Ok(())
}

fn run_validate(args: ValidateArgs) -> Result<(), CliError> {
    let entries = load_manifest(&args.manifest)?;
    let base_dir = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let expected = ExpectedCounts {
        styles: args.expect_styles,
        contents: args.expect_contents,
        total_frames: args.expect_frames,
    };
    let report = validate_manifest(&entries, &base_dir, &expected);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serialization cannot fail")
    );
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string(&report).expect("report serialization cannot fail");
        text.push('\n');
        write_file(out, &text)?;
    }
    if report.valid {
        println!(
            "manifest valid: {} entries, {} styles, {} contents, {} frames",
            report.entries, report.styles, report.contents, report.total_frames
        );
        Ok(())
    } else {
        let problems = report.invalid_annotations.len()
            + report.duplicates.len()
            + report.missing_files.len()
            + report.unreadable_files.len()
            + report.frame_mismatches.len()
            + report.expectation_failures.len();
        Err(CliError::Semantic(format!(
            "manifest invalid: {} problem(s) found",
            problems
        )))
    }
}

fn run_stats(args: StatsArgs) -> Result<(), CliError> {
    let entries = load_manifest(&args.manifest)?;
    let summary = summarize(&entries)
        .map_err(|e| CliError::Semantic(format!("manifest statistics failed: {}", e)))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serialization cannot fail")
    );
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string(&summary).expect("summary serialization cannot fail");
        text.push('\n');
        write_file(out, &text)?;
    }
    Ok(())
}
