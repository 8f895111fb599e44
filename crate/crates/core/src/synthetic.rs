//! Ground-truth scene generation, exhaustive morph search and batch metrics.

use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{estimate_pose, EstimationConfig};
use crate::geometry::{
    compose_rotation, project_full, project_weak, EulerAngles, PinholeCamera, RotationMatrix,
    WeakPerspectiveCamera,
};
use crate::landmarks::{FeaturePointSet2D, FeaturePointSet3D};
use crate::optimizer::ObjectiveContext;
use crate::sphere::{expand_params, fit_sphere, ConstraintMode, FreeParams};

/// Maximum number of objective evaluations for [`brute_force_morph`].
pub const GRID_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Weak(WeakPerspectiveCamera),
    Full(PinholeCamera),
}

impl Projection {
    pub fn project(&self, r: &RotationMatrix, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        match self {
            Projection::Weak(cam) => Ok(project_weak(cam, r, p)),
            Projection::Full(cam) => project_full(cam, r, p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub angles: EulerAngles,
    pub camera: Projection,
    pub model: FeaturePointSet3D,
    /// Standard deviation of the per-coordinate Gaussian pixel noise.
    pub noise_px: f64,
    /// Symmetric-pattern morph applied to the model on its own sphere.
    pub morph: Option<FreeParams>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(angles: EulerAngles, camera: Projection, model: FeaturePointSet3D) -> Self {
        SceneSpec {
            angles,
            camera,
            model,
            noise_px: 0.0,
            morph: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub angles: EulerAngles,
    pub rotation: RotationMatrix,
    /// Model points actually projected (after the optional morph).
    pub points: FeaturePointSet3D,
    pub camera: Projection,
    /// Landmarks before noise.
    pub clean: FeaturePointSet2D,
}

/// Seed for instance `index` of a batch started from `base`.
pub fn instance_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// Applies a symmetric morph to raw model points on the sphere through them.
pub fn morph_model(model: &FeaturePointSet3D, morph: &FreeParams) -> Result<FeaturePointSet3D> {
    let pts = model.as_four()?;
    let sphere = fit_sphere(&pts)?;
    let deltas = expand_params(morph, ConstraintMode::Symmetric)?.deltas;
    let mut entries = Vec::with_capacity(4);
    for ((label, p), d) in model.iter().zip(&deltas) {
        let base = sphere.to_spherical(p)?;
        entries.push((label.to_string(), sphere.apply_morph(&base, d)));
    }
    FeaturePointSet3D::new(entries)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<(FeaturePointSet2D, GroundTruth)> {
    if !(spec.noise_px.is_finite() && spec.noise_px >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sigma {} must be >= 0",
            spec.noise_px
        )));
    }
    let points = match &spec.morph {
        Some(m) => morph_model(&spec.model, m)?,
        None => spec.model.clone(),
    };
    let rotation = compose_rotation(&spec.angles)?;
    let mut entries = Vec::with_capacity(points.len());
    for (label, p) in points.iter() {
        entries.push((label.to_string(), spec.camera.project(&rotation, p)?));
    }
    let clean = FeaturePointSet2D::new(entries)?;
    let landmarks = if spec.noise_px > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_px).map_err(|e| Error::invalid(e.to_string()))?;
        clean.map(|p| p + Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng)))
    } else {
        clean.clone()
    };
    Ok((
        landmarks,
        GroundTruth {
            angles: spec.angles,
            rotation,
            points,
            camera: spec.camera,
            clean,
        },
    ))
}

/// Inclusive grid `min, min + step, …` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) || step <= 0.0 || max < min {
            return Err(Error::invalid(
                "grid axis needs finite min <= max and step > 0",
            ));
        }
        Ok(GridAxis { min, max, step })
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }
}

/// Exhaustive search of the objective over the product grid.
///
/// Ties keep the first point in row-major order.
pub fn brute_force_morph(ctx: &ObjectiveContext, axes: &[GridAxis]) -> Result<(FreeParams, f64)> {
    if axes.len() != ctx.mode().free_len() {
        return Err(Error::invalid(format!(
            "grid has {} axes but the problem has {} parameters",
            axes.len(),
            ctx.mode().free_len()
        )));
    }
    let total = axes
        .iter()
        .try_fold(1u64, |acc, a| acc.checked_mul(a.len() as u64))
        .filter(|&n| n <= GRID_BUDGET)
        .ok_or_else(|| Error::invalid(format!("grid exceeds {GRID_BUDGET} evaluations")))?;
    let mut index = vec![0usize; axes.len()];
    let mut best: Option<(FreeParams, f64)> = None;
    for _ in 0..total {
        let free = FreeParams::from_slice(
            &index
                .iter()
                .zip(axes)
                .map(|(&k, a)| a.value(k))
                .collect::<Vec<_>>(),
        );
        let e = ctx.objective(&free)?;
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((free, e));
        }
        for (k, a) in index.iter_mut().zip(axes).rev() {
            *k += 1;
            if *k < a.len() {
                break;
            }
            *k = 0;
        }
    }
    best.ok_or_else(|| Error::invalid("empty grid"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngleStats {
    pub mae: f64,
    pub std: f64,
}

impl AngleStats {
    /// Mean and population standard deviation of absolute errors.
    pub fn from_abs_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return AngleStats::default();
        }
        let n = errors.len() as f64;
        let mae = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n;
        AngleStats {
            mae,
            std: var.sqrt(),
        }
    }
}

/// Signed difference in degrees wrapped to `[-180, 180)`.
pub fn angle_difference_deg(estimate: f64, truth: f64) -> f64 {
    (estimate - truth + 180.0).rem_euclid(360.0) - 180.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingStats {
    pub median_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn from_ms(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_ms = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(TimingStats {
            median_ms,
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            max_ms: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone)]
pub struct BatchInstance {
    pub id: String,
    pub landmarks: FeaturePointSet2D,
    pub truth: EulerAngles,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceError {
    /// Absolute `[pitch, yaw, roll]` errors in degrees.
    pub abs_deg: [f64; 3],
    pub wall_ms: f64,
}

#[derive(Debug)]
pub struct BatchReport {
    pub pitch: AngleStats,
    pub yaw: AngleStats,
    pub roll: AngleStats,
    /// Per-instance errors in input order; `None` for failed instances.
    pub errors: Vec<(String, Option<InstanceError>)>,
    pub failures: Vec<(String, Error)>,
    pub timing: Option<TimingStats>,
}

impl BatchReport {
    pub fn instance_count(&self) -> usize {
        self.errors.len()
    }

    /// Mean of the three per-angle MAEs.
    pub fn mean_mae(&self) -> f64 {
        (self.pitch.mae + self.yaw.mae + self.roll.mae) / 3.0
    }

    /// Builds aggregates from per-instance absolute errors.
    pub fn from_errors(
        errors: Vec<(String, Option<InstanceError>)>,
        failures: Vec<(String, Error)>,
    ) -> Self {
        let ok: Vec<&InstanceError> = errors.iter().filter_map(|(_, e)| e.as_ref()).collect();
        let column = |k: usize| {
            AngleStats::from_abs_errors(&ok.iter().map(|e| e.abs_deg[k]).collect::<Vec<_>>())
        };
        let timing = TimingStats::from_ms(&ok.iter().map(|e| e.wall_ms).collect::<Vec<_>>());
        BatchReport {
            pitch: column(0),
            yaw: column(1),
            roll: column(2),
            errors,
            failures,
            timing,
        }
    }
}

/// Runs [`estimate_pose`] on every instance (in parallel) and aggregates errors.
pub fn evaluate_batch(
    instances: &[BatchInstance],
    model: &FeaturePointSet3D,
    cfg: &EstimationConfig,
) -> Result<BatchReport> {
    if instances.is_empty() {
        return Err(Error::invalid("batch has no instances"));
    }
    let results: Vec<(String, Result<InstanceError>)> = instances
        .par_iter()
        .map(|inst| {
            let start = Instant::now();
            let res = estimate_pose(&inst.landmarks, model, cfg);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let res = res.map(|r| {
                let est = r.angles.degrees();
                let truth = inst.truth.degrees();
                InstanceError {
                    abs_deg: std::array::from_fn(|k| angle_difference_deg(est[k], truth[k]).abs()),
                    wall_ms,
                }
            });
            (inst.id.clone(), res)
        })
        .collect();
    let mut errors = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok(e) => errors.push((id, Some(e))),
            Err(err) => {
                errors.push((id.clone(), None));
                failures.push((id, err));
            }
        }
    }
    Ok(BatchReport::from_errors(errors, failures))
}
