//! End-to-end pose estimation from four labeled landmarks.

use nalgebra::Vector3;

use crate::error::{Error, Result, Stage, StageExt};
use crate::geometry::{euler_from_rotation, EulerAngles, RotationMatrix};
use crate::landmarks::{FeaturePointSet2D, FeaturePointSet3D};
use crate::normalize::{normalize2d, normalize3d};
use crate::optimizer::{final_rotation, initial_rotation, lm_solve, LmConfig, ObjectiveContext};
use crate::sphere::{expand_params, ConstraintMode, FreeParams, MorphParams};

/// Penalty weight used when none is given.
pub const DEFAULT_ETA: f64 = 1.77;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub eta: f64,
    pub lm: LmConfig,
    pub mode: ConstraintMode,
    pub morph: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            eta: DEFAULT_ETA,
            lm: LmConfig::default(),
            mode: ConstraintMode::Symmetric,
            morph: true,
        }
    }
}

impl EstimationConfig {
    pub fn no_morph() -> Self {
        EstimationConfig {
            morph: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub angles: EulerAngles,
    pub rotation: RotationMatrix,
    /// LM iterations; zero when morphing is disabled.
    pub iterations: usize,
    /// Penalized objective at the returned morph (at zero morph when disabled).
    pub objective: f64,
    pub converged: bool,
    pub morph: Option<MorphParams>,
    /// Morphed normalized model points used for the final rotation.
    pub morphed_points: [Vector3<f64>; 4],
}

/// Estimates head pose from `landmarks`, matched to `model` by label.
///
/// The model's point order is the canonical order; in symmetric mode the
/// first two model points must be the midline pair and the last two the
/// mirrored pair.
pub fn estimate_pose(
    landmarks: &FeaturePointSet2D,
    model: &FeaturePointSet3D,
    cfg: &EstimationConfig,
) -> Result<EstimationResult> {
    if !(cfg.eta.is_finite() && cfg.eta >= 0.0) {
        return Err(
            Error::invalid(format!("penalty weight {} must be >= 0", cfg.eta)).at(Stage::Input),
        );
    }
    let landmarks = landmarks.reorder(model.labels()).stage(Stage::Input)?;
    model.check_non_coplanar().stage(Stage::Input)?;

    let norm2d = normalize2d(&landmarks).stage(Stage::Normalize)?;
    let norm3d = normalize3d(model).stage(Stage::Normalize)?;
    let r1 = initial_rotation(&norm2d, &norm3d).stage(Stage::InitialRotation)?;
    let targets = norm2d.as_four().stage(Stage::Normalize)?;
    let units = norm3d.as_four().stage(Stage::Normalize)?;
    let ctx =
        ObjectiveContext::new(targets, &units, r1, cfg.eta, cfg.mode).stage(Stage::SphereFit)?;

    if !cfg.morph {
        let zero = FreeParams::zeros(cfg.mode);
        let angles = euler_from_rotation(&r1).stage(Stage::EulerExtraction)?;
        return Ok(EstimationResult {
            angles,
            rotation: r1,
            iterations: 0,
            objective: ctx.objective(&zero).stage(Stage::Morph)?,
            converged: true,
            morph: None,
            morphed_points: *ctx.initial_points(),
        });
    }

    let outcome = lm_solve(&ctx, &cfg.lm).stage(Stage::Morph)?;
    let morphed = ctx.morphed_points(&outcome.params).stage(Stage::Morph)?;
    let rotation = final_rotation(&norm2d, &morphed).stage(Stage::FinalRotation)?;
    let angles = euler_from_rotation(&rotation).stage(Stage::EulerExtraction)?;
    Ok(EstimationResult {
        angles,
        rotation,
        iterations: outcome.iterations,
        objective: outcome.objective,
        converged: outcome.converged,
        morph: Some(expand_params(&outcome.params, cfg.mode).stage(Stage::Morph)?),
        morphed_points: morphed,
    })
}

/// The rotation straight from the unmorphed model.
pub fn estimate_pose_no_morph(
    landmarks: &FeaturePointSet2D,
    model: &FeaturePointSet3D,
) -> Result<EstimationResult> {
    estimate_pose(landmarks, model, &EstimationConfig::no_morph())
}
