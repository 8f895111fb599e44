//! `headpose` subcommands: `estimate`, `synth` and `eval`.
//!
//! Each `cmd_*` function returns the process exit code: 0 on success, 1 on
//! bad input (unreadable or malformed files, invalid flags, id mismatch),
//! 2 when `estimate` had per-image failures. Diagnostics go to stderr.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use headpose_core::io::{
    format_eval_report, format_landmarks, format_poses, format_predictions, leading_comments,
    parse_landmarks, parse_model, parse_poses, parse_predictions, EvalSummary, ImageLandmarks,
    PoseRecord, Prediction,
};
use headpose_core::synthetic::{
    angle_difference_deg, generate_scene, instance_seed, AngleStats, Projection, SceneSpec,
    TimingStats,
};
use headpose_core::{
    estimate_pose, ConstraintMode, EstimationConfig, FeaturePointSet2D, FeaturePointSet3D,
    LmConfig, PinholeCamera, WeakPerspectiveCamera, DEFAULT_ETA,
};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(
    name = "headpose",
    version,
    about = "Head pose from four facial landmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate pitch, yaw and roll for every image in a landmarks file.
    Estimate(EstimateArgs),
    /// Generate synthetic landmarks and ground truth from a pose list.
    Synth(SynthArgs),
    /// Compare predictions against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Constraints {
    Symmetric,
    Free,
}

impl From<Constraints> for ConstraintMode {
    fn from(c: Constraints) -> Self {
        match c {
            Constraints::Symmetric => ConstraintMode::Symmetric,
            Constraints::Free => ConstraintMode::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionKind {
    Weak,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Model CSV (`label,x,y,z`); the bundled face model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Predictions CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = Constraints::Symmetric)]
    pub constraints: Constraints,
    #[arg(long)]
    pub no_morph: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Append a per-image `wall_ms` column.
    #[arg(long)]
    pub timing: bool,
}

impl EstimateArgs {
    pub fn new(landmarks: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        EstimateArgs {
            model: None,
            landmarks: landmarks.into(),
            out: out.into(),
            eta: DEFAULT_ETA,
            tol: 1e-6,
            max_iter: 100,
            constraints: Constraints::Symmetric,
            no_morph: false,
            jobs: 0,
            timing: false,
        }
    }

    fn config(&self) -> anyhow::Result<EstimationConfig> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            bail!("--eta must be a finite value >= 0, got {}", self.eta);
        }
        let lm = LmConfig {
            tolerance: self.tol,
            max_iterations: self.max_iter,
            ..LmConfig::default()
        };
        lm.validate().context("invalid optimizer settings")?;
        Ok(EstimationConfig {
            eta: self.eta,
            lm,
            mode: self.constraints.into(),
            morph: !self.no_morph,
        })
    }

    fn provenance(&self) -> String {
        format!(
            "headpose estimate eta={} tol={} max_iter={} constraints={} morph={}",
            self.eta,
            self.tol,
            self.max_iter,
            ConstraintMode::from(self.constraints).name(),
            if self.no_morph { "off" } else { "on" }
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Pose list CSV (`image_id,pitch,yaw,roll`).
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Landmarks CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth CSV to write.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub noise_px: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ProjectionKind::Weak)]
    pub projection: ProjectionKind,
    /// Weak perspective scale s' (px per model unit).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub ty: f64,
    /// Full perspective focal length in px.
    #[arg(long, default_value_t = 1000.0)]
    pub focal: f64,
    /// Full perspective camera-to-model distance in model units.
    #[arg(long, default_value_t = 1000.0)]
    pub distance: f64,
}

impl SynthArgs {
    pub fn new(
        poses: impl Into<PathBuf>,
        out: impl Into<PathBuf>,
        truth: impl Into<PathBuf>,
    ) -> Self {
        SynthArgs {
            poses: poses.into(),
            model: None,
            out: out.into(),
            truth: truth.into(),
            noise_px: 0.0,
            seed: 0,
            projection: ProjectionKind::Weak,
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
            focal: 1000.0,
            distance: 1000.0,
        }
    }

    fn camera(&self) -> anyhow::Result<Projection> {
        Ok(match self.projection {
            ProjectionKind::Weak => Projection::Weak(WeakPerspectiveCamera::new(
                self.scale,
                Vector2::new(self.tx, self.ty),
            )?),
            ProjectionKind::Full => Projection::Full(PinholeCamera::ideal(
                self.focal,
                Vector2::new(self.tx, self.ty),
                Vector3::new(0.0, 0.0, self.distance),
            )?),
        })
    }

    fn provenance(&self) -> String {
        let camera = match self.projection {
            ProjectionKind::Weak => format!(
                "projection=weak scale={} tx={} ty={}",
                self.scale, self.tx, self.ty
            ),
            ProjectionKind::Full => format!(
                "projection=full focal={} distance={} cx={} cy={}",
                self.focal, self.distance, self.tx, self.ty
            ),
        };
        format!(
            "headpose synth {camera} noise_px={} seed={}",
            self.noise_px, self.seed
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predictions CSV from `estimate`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth CSV from `synth`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report CSV to write; the report is also printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn report(err: anyhow::Error) -> i32 {
    eprintln!("error: {err:#}");
    1
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn check_output(path: &Path) -> anyhow::Result<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_model(path: Option<&Path>) -> anyhow::Result<FeaturePointSet3D> {
    match path {
        Some(p) => parse_model(&read(p)?).with_context(|| format!("{}", p.display())),
        None => Ok(FeaturePointSet3D::default_face()),
    }
}

fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")
}

pub fn cmd_estimate(args: &EstimateArgs) -> i32 {
    match estimate(args) {
        Ok(0) => 0,
        Ok(_) => 2,
        Err(e) => report(e),
    }
}

fn estimate(args: &EstimateArgs) -> anyhow::Result<usize> {
    let cfg = args.config()?;
    check_output(&args.out)?;
    let model = load_model(args.model.as_deref())?;
    let images = parse_landmarks(&read(&args.landmarks)?)
        .with_context(|| format!("{}", args.landmarks.display()))?;
    let pool = thread_pool(args.jobs)?;
    let mut rows: Vec<Prediction> = pool.install(|| {
        images
            .par_iter()
            .map(|img| estimate_one(img, &model, &cfg, args.timing))
            .collect()
    });
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut failures = 0;
    for row in &rows {
        if let Some(msg) = &row.error {
            eprintln!("failed {}: {msg}", row.image_id);
            failures += 1;
        }
    }
    write(&args.out, &format_predictions(&args.provenance(), &rows))?;
    Ok(failures)
}

fn estimate_one(
    img: &ImageLandmarks,
    model: &FeaturePointSet3D,
    cfg: &EstimationConfig,
    timing: bool,
) -> Prediction {
    let start = Instant::now();
    let result = img.to_set().and_then(|set| estimate_pose(&set, model, cfg));
    let wall_ms = timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    match result {
        Ok(r) => Prediction {
            image_id: img.image_id.clone(),
            angles: Some(r.angles.degrees()),
            iterations: r.iterations,
            objective: Some(r.objective),
            converged: r.converged,
            wall_ms,
            error: None,
        },
        Err(e) => Prediction {
            image_id: img.image_id.clone(),
            angles: None,
            iterations: 0,
            objective: None,
            converged: false,
            wall_ms: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn cmd_synth(args: &SynthArgs) -> i32 {
    synth(args).map(|_| 0).unwrap_or_else(report)
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    if !(args.noise_px.is_finite() && args.noise_px >= 0.0) {
        bail!(
            "--noise-px must be a finite value >= 0, got {}",
            args.noise_px
        );
    }
    let camera = args.camera()?;
    check_output(&args.out)?;
    check_output(&args.truth)?;
    let model = load_model(args.model.as_deref())?;
    let mut poses =
        parse_poses(&read(&args.poses)?).with_context(|| format!("{}", args.poses.display()))?;
    let mut images: Vec<(String, FeaturePointSet2D)> = Vec::with_capacity(poses.len());
    for (index, pose) in poses.iter().enumerate() {
        let spec = SceneSpec {
            noise_px: args.noise_px,
            seed: instance_seed(args.seed, index as u64),
            ..SceneSpec::new(pose.angles(), camera, model.clone())
        };
        let (landmarks, _) =
            generate_scene(&spec).with_context(|| format!("image '{}'", pose.image_id))?;
        images.push((pose.image_id.clone(), landmarks));
    }
    images.sort_by(|a, b| a.0.cmp(&b.0));
    poses.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let provenance = args.provenance();
    write(&args.out, &format_landmarks(&provenance, &images))?;
    write(&args.truth, &format_poses(&provenance, &poses))?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> i32 {
    match eval(args) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => report(e),
    }
}

fn eval(args: &EvalArgs) -> anyhow::Result<String> {
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    let pred_text = read(&args.pred)?;
    let preds =
        parse_predictions(&pred_text).with_context(|| format!("{}", args.pred.display()))?;
    let truth: Vec<PoseRecord> =
        parse_poses(&read(&args.truth)?).with_context(|| format!("{}", args.truth.display()))?;

    let pred_ids: BTreeSet<&str> = preds.iter().map(|p| p.image_id.as_str()).collect();
    let truth_ids: BTreeSet<&str> = truth.iter().map(|t| t.image_id.as_str()).collect();
    let missing: Vec<&str> = truth_ids.difference(&pred_ids).copied().collect();
    let extra: Vec<&str> = pred_ids.difference(&truth_ids).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("prediction and truth ids differ");
        if !missing.is_empty() {
            msg += &format!("; missing predictions: {}", missing.join(", "));
        }
        if !extra.is_empty() {
            msg += &format!("; no truth for: {}", extra.join(", "));
        }
        bail!(msg);
    }

    let by_id: BTreeMap<&str, &Prediction> =
        preds.iter().map(|p| (p.image_id.as_str(), p)).collect();
    let mut abs: [Vec<f64>; 3] = Default::default();
    let mut wall = Vec::new();
    let mut failures = 0;
    for t in &truth {
        let p = by_id[t.image_id.as_str()];
        let Some(est) = p.angles else {
            failures += 1;
            continue;
        };
        for k in 0..3 {
            abs[k].push(angle_difference_deg(est[k], t.degrees[k]).abs());
        }
        wall.extend(p.wall_ms);
    }
    let summary = EvalSummary {
        pitch: AngleStats::from_abs_errors(&abs[0]),
        yaw: AngleStats::from_abs_errors(&abs[1]),
        roll: AngleStats::from_abs_errors(&abs[2]),
        instances: truth.len(),
        failures,
        timing: TimingStats::from_ms(&wall),
    };
    let provenance: Vec<String> = leading_comments(&pred_text).into_iter().take(1).collect();
    let text = format_eval_report(&provenance, &summary);
    if let Some(out) = &args.out {
        write(out, &text)?;
    }
    Ok(text)
}
