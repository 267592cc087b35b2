use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use serde_json::json;

use hlik_core::chain::KinematicChain;
use hlik_core::datagen::{self, ArmGeometry, ArmSelection, GenConfig, Trajectory};
use hlik_core::fista::{
    self, Ablation, FistaConfig, MlpConfig, Model, ModelConfig, TrainConfig,
};
use hlik_core::ik::LambdaPolicy;
use hlik_core::metrics::{self, MetricsReport, StepMetrics, TrajectoryMetrics};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::pipeline::{self, ArmStream, HistoryMode, SolveMode, SolveSettings, SolvedTrajectory};
use crate::solutions;

pub const DATASET_FILE: &str = "dataset.csv";
pub const MODEL_FILE: &str = "model.fsta";
pub const CURVE_FILE: &str = "curve.csv";
pub const SOLUTIONS_FILE: &str = "solutions.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const BENCH_FILE: &str = "bench.json";

#[derive(Debug, Parser)]
#[command(name = "hlik", version, about = "Human-like inverse kinematics experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trajectory dataset.
    Gen(GenArgs),
    /// Train an elbow-prediction network.
    Train(TrainArgs),
    /// Solve every frame of a dataset in streaming order.
    Solve(SolveArgs),
    /// Compare baseline and HL-IK solutions against the reference.
    Evaluate(EvaluateArgs),
    /// Time the per-step preprocess and IK stages.
    Bench(BenchArgs),
}

/// Names of boolean switches, for `--config` merging.
pub const SWITCHES: &[&str] = &[];

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Comma-separated layer widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Ok(Widths(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Widths)
    }
}

impl fmt::Display for Widths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArmsArg {
    Right,
    Left,
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchArg {
    Fista,
    Mlp,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub n_traj: usize,
    /// Seconds per trajectory.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Seconds between frames.
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = ArmsArg::Alternate)]
    pub arms: ArmsArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` file or an earlier manifest.json; explicit flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Dataset CSV, or a directory containing dataset.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchArg::Fista)]
    pub arch: ArchArg,
    /// History length in frames.
    #[arg(long = "t", visible_alias = "T", default_value_t = 5)]
    pub t: usize,
    #[arg(long, default_value_t = Ablation::None)]
    #[serde(serialize_with = "display")]
    pub ablate: Ablation,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Training windows drawn per epoch (default: all).
    #[arg(long)]
    pub samples_per_epoch: Option<usize>,
    /// Score every n-th validation window.
    #[arg(long, default_value_t = 1)]
    pub val_stride: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    #[arg(long, default_value_t = 64)]
    pub gru_hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub attn_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub film_hidden: usize,
    #[arg(long, default_value = "128,64")]
    #[serde(serialize_with = "display")]
    pub head_hidden: Widths,
    #[arg(long, default_value = "256,128")]
    #[serde(serialize_with = "display")]
    pub mlp_hidden: Widths,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SolveArgs {
    /// Chain file (default: built-in arm7).
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Model file; required in hlik mode.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = SolveMode::Hlik)]
    #[serde(serialize_with = "display")]
    pub mode: SolveMode,
    /// Source of the network's history.
    #[arg(long, default_value_t = HistoryMode::ClosedLoop)]
    #[serde(serialize_with = "display")]
    pub history: HistoryMode,
    /// Use this constant damping instead of the adaptive schedule.
    #[arg(long)]
    pub lambda_fixed: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ref_data: PathBuf,
    #[arg(long)]
    pub baseline_solutions: PathBuf,
    #[arg(long)]
    pub hlik_solutions: PathBuf,
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Denominator guard of the line-angle metric.
    #[arg(long, default_value_t = metrics::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = metrics::DEFAULT_CHALLENGING_FRACTION)]
    pub challenging_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BenchArgs {
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Untimed steps run before measuring.
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    /// Only time the first n trajectories.
    #[arg(long)]
    pub max_traj: Option<usize>,
    #[arg(long, default_value_t = HistoryMode::ClosedLoop)]
    #[serde(serialize_with = "display")]
    pub history: HistoryMode,
    /// Directory for bench.json and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn dataset_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(DATASET_FILE)
    } else {
        p.to_path_buf()
    }
}

pub fn load_dataset(p: &Path) -> CliResult<(PathBuf, Vec<Trajectory>)> {
    let path = dataset_path(p);
    if !path.exists() {
        return Err(CliError::io(path.display(), "no such file"));
    }
    let data = datagen::import_csv(&path)?;
    Ok((path, data))
}

pub fn load_chain(p: Option<&Path>) -> CliResult<KinematicChain> {
    match p {
        Some(p) => Ok(KinematicChain::load(p)?),
        None => Ok(KinematicChain::reference_arm()),
    }
}

fn model_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MODEL_FILE)
    } else {
        p.to_path_buf()
    }
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let cfg = GenConfig {
        seed: args.seed,
        n_traj: args.n_traj,
        duration: args.duration,
        dt: args.dt,
        arms: match args.arms {
            ArmsArg::Right => ArmSelection::Right,
            ArmsArg::Left => ArmSelection::Left,
            ArmsArg::Alternate => ArmSelection::Alternate,
        },
        ..GenConfig::default()
    };
    let manifest = RunManifest::start("gen", args)?.seed("seed", args.seed);
    let data = datagen::generate(&cfg)?;
    ensure_dir(&args.out)?;
    let path = args.out.join(DATASET_FILE);
    datagen::export_csv(&path, &data)?;
    let frames: usize = data.iter().map(|t| t.frames.len()).sum();
    manifest.finish(
        &args.out,
        &[&path],
        json!({ "trajectories": data.len(), "rows": frames }),
    )?;
    println!("wrote {} trajectories ({frames} rows) to {}", data.len(), path.display());
    Ok(())
}

pub fn model_config(args: &TrainArgs) -> CliResult<ModelConfig> {
    match args.arch {
        ArchArg::Fista => Ok(ModelConfig::Fista(FistaConfig {
            t: args.t,
            embed: args.embed,
            gru_hidden: args.gru_hidden,
            attn_dim: args.attn_dim,
            film_hidden: args.film_hidden,
            head_hidden: args.head_hidden.0.clone(),
            ablate: args.ablate,
        })),
        ArchArg::Mlp => {
            if args.ablate != Ablation::None {
                return Err(CliError::usage("--ablate applies to --arch fista only"));
            }
            Ok(ModelConfig::Mlp(MlpConfig {
                t: args.t,
                hidden: args.mlp_hidden.0.clone(),
            }))
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let config = model_config(args)?;
    let hyper = TrainConfig {
        lr: args.lr,
        momentum: args.momentum,
        batch: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        val_fraction: args.val_fraction,
        samples_per_epoch: args.samples_per_epoch,
        val_stride: args.val_stride,
    };
    let (data_path, data) = load_dataset(&args.data)?;
    let manifest = RunManifest::start("train", args)?
        .seed("seed", args.seed)
        .input(&data_path);
    let model = Model::new(config, args.seed)?;
    let epochs = args.epochs;
    let (best, report) = fista::train_with_progress(model, &data, &hyper, |e| {
        eprintln!(
            "epoch {}/{epochs} train_mse {:.6e} val_mse {:.6e}",
            e.epoch, e.train_mse, e.val_mse
        );
    })?;
    ensure_dir(&args.out)?;
    let model_file = args.out.join(MODEL_FILE);
    let curve_file = args.out.join(CURVE_FILE);
    fista::save_model(&model_file, &best)?;
    report
        .save_curve(&curve_file)
        .map_err(|e| CliError::io(curve_file.display(), e))?;
    manifest.finish(
        &args.out,
        &[&model_file, &curve_file],
        json!({
            "arch": best.config().arch_name(),
            "ablate": best.config().ablation().as_str(),
            "params": best.param_count(),
            "best_epoch": report.best_epoch,
            "best_val_mse": report.best_val_mse,
            "train_trajectories": report.train_trajectories.len(),
            "val_trajectories": report.val_trajectories.len(),
            "train_windows": report.train_windows,
            "val_windows": report.val_windows,
        }),
    )?;
    println!(
        "best val_mse {:.6e} at epoch {}; wrote {}",
        report.best_val_mse,
        report.best_epoch,
        model_file.display()
    );
    Ok(())
}

fn lambda_policy(fixed: Option<f64>) -> CliResult<LambdaPolicy> {
    match fixed {
        None => Ok(LambdaPolicy::default()),
        Some(l) if l.is_finite() && l > 0.0 => Ok(LambdaPolicy::Fixed(l)),
        Some(l) => Err(CliError::usage(format!("--lambda-fixed must be positive, got {l}"))),
    }
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let chain = load_chain(args.chain.as_deref())?;
    let (data_path, data) = load_dataset(&args.data)?;
    let mut manifest = RunManifest::start("solve", args)?.input(&data_path);
    let model = match (args.mode, &args.model) {
        (SolveMode::Hlik, None) => return Err(CliError::usage("--mode hlik requires --model")),
        (SolveMode::Hlik, Some(p)) => {
            let path = model_path(p);
            manifest = manifest.input(&path);
            Some(fista::load_model(&path)?)
        }
        (SolveMode::Baseline, Some(_)) => {
            eprintln!("warning: --model is ignored in baseline mode");
            None
        }
        (SolveMode::Baseline, None) => None,
    };
    let settings = SolveSettings::new(args.mode)
        .with_history(args.history)
        .with_lambda(lambda_policy(args.lambda_fixed)?);
    let solved = pipeline::solve_dataset(&chain, model.as_ref(), &settings, &data)?;
    ensure_dir(&args.out)?;
    let path = args.out.join(SOLUTIONS_FILE);
    solutions::save_solutions(&path, &solved)?;
    let steps: usize = solved.iter().map(|t| t.steps.len()).sum();
    let iters: usize = solved.iter().flat_map(|t| &t.steps).map(|s| s.iters).sum();
    let converged = solved.iter().flat_map(|t| &t.steps).filter(|s| s.converged).count();
    manifest.finish(
        &args.out,
        &[&path],
        json!({
            "mode": args.mode.as_str(),
            "trajectories": solved.len(),
            "steps": steps,
            "mean_iters": iters as f64 / steps.max(1) as f64,
            "converged_fraction": converged as f64 / steps.max(1) as f64,
        }),
    )?;
    println!(
        "solved {} trajectories ({steps} steps, {} mode); wrote {}",
        solved.len(),
        args.mode,
        path.display()
    );
    Ok(())
}

/// Per-step metrics of `solved` against the reference dataset. Solved
/// trajectories must cover the reference one-to-one with equal step counts.
pub fn trajectory_metrics(
    geometry: &ArmGeometry,
    reference: &[Trajectory],
    solved: &[SolvedTrajectory],
    alpha: f64,
) -> CliResult<Vec<TrajectoryMetrics>> {
    let mismatch = |m: String| CliError::new("E_MISMATCHED_STREAMS", m);
    if reference.len() != solved.len() {
        return Err(mismatch(format!(
            "{} reference trajectories vs {} solved",
            reference.len(),
            solved.len()
        )));
    }
    let mut out = Vec::with_capacity(solved.len());
    for s in solved {
        let r = reference
            .iter()
            .find(|r| r.id == s.id)
            .ok_or_else(|| mismatch(format!("trajectory `{}` is not in the reference", s.id)))?;
        if r.frames.len() != s.steps.len() {
            return Err(mismatch(format!(
                "trajectory `{}`: {} reference frames vs {} solved steps",
                s.id,
                r.frames.len(),
                s.steps.len()
            )));
        }
        let right = r.as_right_arm();
        let steps = right
            .frames
            .iter()
            .zip(&s.steps)
            .map(|(f, st)| {
                StepMetrics::compute(&pipeline::reference_snapshot(geometry, f), &st.solved, alpha)
            })
            .collect();
        out.push(TrajectoryMetrics {
            id: s.id.clone(),
            steps,
        });
    }
    Ok(out)
}

/// Full comparison report for two solution sets.
pub fn evaluate(
    geometry: &ArmGeometry,
    reference: &[Trajectory],
    baseline: &[SolvedTrajectory],
    hlik: &[SolvedTrajectory],
    alpha: f64,
    fraction: f64,
) -> CliResult<MetricsReport> {
    let b = trajectory_metrics(geometry, reference, baseline, alpha)?;
    let h = trajectory_metrics(geometry, reference, hlik, alpha)?;
    Ok(metrics::aggregate(&b, &h, fraction, alpha)?)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    if !(args.challenging_fraction > 0.0 && args.challenging_fraction <= 1.0) {
        return Err(CliError::usage("--challenging-fraction must lie in (0, 1]"));
    }
    if !(args.alpha.is_finite() && args.alpha >= 0.0) {
        return Err(CliError::usage("--alpha must be finite and non-negative"));
    }
    let chain = load_chain(args.chain.as_deref())?;
    let geometry = ArmGeometry::from_chain(&chain)?;
    let (ref_path, reference) = load_dataset(&args.ref_data)?;
    let baseline = solutions::load_solutions(&args.baseline_solutions)?;
    let hlik = solutions::load_solutions(&args.hlik_solutions)?;
    let manifest = RunManifest::start("evaluate", args)?
        .input(&ref_path)
        .input(&args.baseline_solutions)
        .input(&args.hlik_solutions);
    let report = evaluate(
        &geometry,
        &reference,
        &baseline,
        &hlik,
        args.alpha,
        args.challenging_fraction,
    )?;
    ensure_dir(&args.out)?;
    let json_path = args.out.join(METRICS_JSON);
    let csv_path = args.out.join(METRICS_CSV);
    let file = |p: &Path| {
        std::fs::File::create(p)
            .map(std::io::BufWriter::new)
            .map_err(|e| CliError::io(p.display(), e))
    };
    report.write_json(file(&json_path)?)?;
    report.write_csv(file(&csv_path)?)?;
    manifest.finish(
        &args.out,
        &[&json_path, &csv_path],
        json!({
            "reduction_full": report.reduction_full,
            "reduction_challenging": report.reduction_challenging,
        }),
    )?;
    print_report(&report);
    Ok(())
}

fn print_report(r: &MetricsReport) {
    let rows: [(&str, fn(&metrics::MetricValues) -> f64); 4] = [
        ("keypoint position (m^2)", |m: &metrics::MetricValues| m.kp_pos_err_sq),
        ("line angle (rad)", |m: &metrics::MetricValues| m.line_angle_err),
        ("EE position (m^2)", |m: &metrics::MetricValues| m.ee_pos_err_sq),
        ("EE orientation (rad^2)", |m: &metrics::MetricValues| m.ee_ori_err_sq),
    ];
    println!(
        "{:<26}{:>13}{:>13}{:>11}{:>13}{:>13}{:>11}",
        "metric", "hlik", "baseline", "red", "hlik(ch)", "base(ch)", "red(ch)"
    );
    for (name, f) in rows {
        println!(
            "{:<26}{:>13.4e}{:>13.4e} {:>9.1}%{:>13.4e}{:>13.4e} {:>9.1}%",
            name,
            f(&r.hlik.full.mean),
            f(&r.baseline.full.mean),
            100.0 * f(&r.reduction_full),
            f(&r.hlik.challenging.mean),
            f(&r.baseline.challenging.mean),
            100.0 * f(&r.reduction_challenging),
        );
    }
}

/// Mean and sample standard deviation in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat {
            mean_ms: mean,
            std_ms: std,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub warmup_steps: usize,
    pub repeats: usize,
    pub trajectories: usize,
    /// Warm-started steps timed per repeat; each trajectory's cold first
    /// step is excluded.
    pub steps_per_repeat: usize,
    /// Per-arm, per-step times; std is across repeats.
    pub preprocess: Stat,
    pub ik: Stat,
    pub total: Stat,
}

/// Times HL-IK streaming on `data`, single-threaded.
pub fn bench(
    chain: &KinematicChain,
    model: &Model,
    data: &[Trajectory],
    repeats: usize,
    warmup: usize,
    history: HistoryMode,
) -> CliResult<BenchReport> {
    if repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let settings = SolveSettings::new(SolveMode::Hlik).with_history(history);
    let mut stream = ArmStream::new(chain, Some(model), &settings)?;
    let right: Vec<Trajectory> = data.iter().map(|t| t.as_right_arm()).collect();

    let total_frames: usize = right.iter().map(|t| t.frames.len()).sum();
    let mut done = 0;
    while done < warmup && total_frames > 0 {
        for traj in &right {
            stream.reset();
            for f in traj.frames.iter().take(warmup - done) {
                stream.step(f)?;
                done += 1;
            }
        }
    }

    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let (mut pre, mut ik, mut tot) = (Vec::new(), Vec::new(), Vec::new());
    let mut steps = 0;
    for _ in 0..repeats {
        let (mut p, mut k) = (0.0, 0.0);
        steps = 0;
        for traj in &right {
            stream.reset();
            for (i, f) in traj.frames.iter().enumerate() {
                let out = stream.step(f)?;
                if i > 0 {
                    p += ms(out.preprocess);
                    k += ms(out.ik);
                    steps += 1;
                }
            }
        }
        let n = steps.max(1) as f64;
        pre.push(p / n);
        ik.push(k / n);
        tot.push((p + k) / n);
    }
    Ok(BenchReport {
        warmup_steps: warmup,
        repeats,
        trajectories: right.len(),
        steps_per_repeat: steps,
        preprocess: Stat::of(&pre),
        ik: Stat::of(&ik),
        total: Stat::of(&tot),
    })
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let chain = load_chain(args.chain.as_deref())?;
    let (data_path, mut data) = load_dataset(&args.data)?;
    if let Some(n) = args.max_traj {
        data.truncate(n);
    }
    if data.is_empty() {
        return Err(CliError::new("E_EMPTY_DATASET", "no trajectories to time"));
    }
    let mpath = model_path(&args.model);
    let model = fista::load_model(&mpath)?;
    let manifest = RunManifest::start("bench", args)?.input(&data_path).input(&mpath);
    let r = bench(&chain, &model, &data, args.repeats, args.warmup, args.history)?;
    println!(
        "{} trajectories, {} warm-started steps per repeat, {} repeats, {} warm-up steps excluded",
        r.trajectories, r.steps_per_repeat, r.repeats, r.warmup_steps
    );
    println!("{:<12}{:>12}{:>12}", "stage", "mean_ms", "std_ms");
    for (name, s) in [("preprocess", r.preprocess), ("ik", r.ik), ("total", r.total)] {
        println!("{name:<12}{:>12.4}{:>12.4}", s.mean_ms, s.std_ms);
    }
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let path = out.join(BENCH_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&r)? + "\n")
            .map_err(|e| CliError::io(path.display(), e))?;
        manifest.finish(out, &[&path], serde_json::to_value(&r)?)?;
    }
    Ok(())
}
