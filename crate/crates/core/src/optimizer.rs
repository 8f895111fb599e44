//! Rotation from normalized correspondences and Levenberg–Marquardt refinement
//! of the spherical morph.
//!
//! The rotation `R¹` estimated from the unmorphed model is held fixed while
//! the morph offsets are optimized. The objective is
//!
//! ```text
//! E(Δ) = Σᵢ |m'ᵢ − [r1ᵀ; r2ᵀ]·M̂ᵢ(Δ)|² + η·Σᵢ |M̂ᵢ(Δ) − M̂ᵢ(0)|²
//! ```
//!
//! which is treated as a plain sum of squares over 20 residuals: eight
//! re-projection components followed by twelve penalty components scaled by
//! `√η`.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{complete_rotation, nearest_row_orthonormal, RotationMatrix};
use crate::normalize::{NormalizedSet2D, NormalizedSet3D};
use crate::sphere::{
    expand_params, fit_sphere, ConstraintMode, FreeParams, Sphere, SphericalPoint,
};

/// Condition number of `M'·M'ᵀ` above which the rotation solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Number of stacked residual components.
pub const RESIDUAL_LEN: usize = 20;

/// Least-squares `R' = m'·M'ᵀ·(M'·M'ᵀ)⁻¹` over the four correspondences,
/// projected to orthonormal rows and completed with `r3 = r1 × r2`.
pub fn rotation_from_correspondences(
    targets: &[Vector2<f64>; 4],
    points: &[Vector3<f64>; 4],
) -> Result<RotationMatrix> {
    let mut gram = Matrix3::zeros();
    let mut cross = Matrix2x3::zeros();
    for (m, p) in targets.iter().zip(points) {
        gram += p * p.transpose();
        cross += m * p.transpose();
    }
    if gram.iter().any(|v| !v.is_finite()) || cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGeometry(
            "non-finite correspondences".into(),
        ));
    }
    let eig = gram.symmetric_eigen().eigenvalues;
    let (hi, lo) = (eig.max(), eig.min());
    if lo.is_nan() || lo <= 0.0 || hi / lo > MAX_CONDITION {
        return Err(Error::DegenerateGeometry(format!(
            "model points are (nearly) coplanar: condition number {:e}",
            hi / lo
        )));
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("singular model gram matrix".into()))?;
    let linear = cross * inv;
    let rows = nearest_row_orthonormal(&linear).map_err(|e| match e {
        Error::DegenerateInput(msg) => Error::DegenerateGeometry(msg),
        other => other,
    })?;
    complete_rotation(&rows.row(0).transpose(), &rows.row(1).transpose())
}

/// `R¹` from the unmorphed normalized model.
pub fn initial_rotation(
    norm2d: &NormalizedSet2D,
    norm3d: &NormalizedSet3D,
) -> Result<RotationMatrix> {
    rotation_from_correspondences(&norm2d.as_four()?, &norm3d.as_four()?)
}

/// Optimal rotation from the morphed model points.
pub fn final_rotation(
    norm2d: &NormalizedSet2D,
    morphed: &[Vector3<f64>; 4],
) -> Result<RotationMatrix> {
    rotation_from_correspondences(&norm2d.as_four()?, morphed)
}

/// Everything the objective needs besides the free parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    targets: [Vector2<f64>; 4],
    sphere: Sphere,
    base: [SphericalPoint; 4],
    initial: [Vector3<f64>; 4],
    rotation: RotationMatrix,
    projection: Matrix2x3<f64>,
    eta: f64,
    mode: ConstraintMode,
    expansion: DMatrix<f64>,
}

impl ObjectiveContext {
    /// Builds a context for `points` (normalized model) under a fixed rotation.
    pub fn new(
        targets: [Vector2<f64>; 4],
        points: &[Vector3<f64>; 4],
        rotation: RotationMatrix,
        eta: f64,
        mode: ConstraintMode,
    ) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid(format!(
                "penalty weight {eta} must be finite and >= 0"
            )));
        }
        if rotation.orthonormality_error() > 1e-10 {
            return Err(Error::invalid("fixed rotation rows are not orthonormal"));
        }
        let sphere = fit_sphere(points)?;
        let mut base = [SphericalPoint {
            radius: 0.0,
            azimuth: 0.0,
            elevation: 0.0,
        }; 4];
        for (b, p) in base.iter_mut().zip(points) {
            *b = sphere.to_spherical(p)?;
        }
        let initial = base.map(|b| sphere.to_rectangular(&b));
        Ok(ObjectiveContext {
            targets,
            sphere,
            base,
            initial,
            projection: rotation.projection_rows(),
            rotation,
            eta,
            mode,
            expansion: mode.expansion_matrix(),
        })
    }

    /// Context with `R¹` solved from the unmorphed correspondences.
    pub fn from_normalized(
        norm2d: &NormalizedSet2D,
        norm3d: &NormalizedSet3D,
        eta: f64,
        mode: ConstraintMode,
    ) -> Result<Self> {
        let rotation = initial_rotation(norm2d, norm3d)?;
        Self::new(norm2d.as_four()?, &norm3d.as_four()?, rotation, eta, mode)
    }

    pub fn sphere(&self) -> &Sphere {
        &self.sphere
    }

    pub fn base(&self) -> &[SphericalPoint; 4] {
        &self.base
    }

    pub fn targets(&self) -> &[Vector2<f64>; 4] {
        &self.targets
    }

    pub fn initial_points(&self) -> &[Vector3<f64>; 4] {
        &self.initial
    }

    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    /// The same problem with a different penalty weight.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid(format!(
                "penalty weight {eta} must be finite and >= 0"
            )));
        }
        Ok(ObjectiveContext {
            eta,
            ..self.clone()
        })
    }

    fn check_len(&self, free: &FreeParams) -> Result<()> {
        if free.len() != self.mode.free_len() {
            return Err(Error::invalid(format!(
                "{} mode takes {} parameters, got {}",
                self.mode.name(),
                self.mode.free_len(),
                free.len()
            )));
        }
        Ok(())
    }

    /// Morphed model points for `free`.
    pub fn morphed_points(&self, free: &FreeParams) -> Result<[Vector3<f64>; 4]> {
        let morph = expand_params(free, self.mode)?;
        Ok(std::array::from_fn(|i| {
            self.sphere.apply_morph(&self.base[i], &morph.deltas[i])
        }))
    }

    pub fn residuals(&self, free: &FreeParams) -> Result<DVector<f64>> {
        let pts = self.morphed_points(free)?;
        let w = self.eta.sqrt();
        let mut r = DVector::zeros(RESIDUAL_LEN);
        for i in 0..4 {
            let rep = self.targets[i] - self.projection * pts[i];
            r[2 * i] = rep.x;
            r[2 * i + 1] = rep.y;
            let pen = (pts[i] - self.initial[i]) * w;
            r.fixed_rows_mut::<3>(8 + 3 * i).copy_from(&pen);
        }
        Ok(r)
    }

    pub fn objective(&self, free: &FreeParams) -> Result<f64> {
        Ok(self.residuals(free)?.norm_squared())
    }

    /// `(re-projection, penalty)` terms; the penalty is already multiplied by `η`.
    pub fn objective_parts(&self, free: &FreeParams) -> Result<(f64, f64)> {
        let r = self.residuals(free)?;
        Ok((r.rows(0, 8).norm_squared(), r.rows(8, 12).norm_squared()))
    }

    /// Analytic `∂r/∂free`, `20 × free_len`.
    pub fn jacobian(&self, free: &FreeParams) -> Result<DMatrix<f64>> {
        self.check_len(free)?;
        let morph = expand_params(free, self.mode)?;
        let l = self.sphere.radius;
        let w = self.eta.sqrt();
        let mut full = DMatrix::zeros(RESIDUAL_LEN, 8);
        for (i, (b, d)) in self.base.iter().zip(&morph.deltas).enumerate() {
            let (sa, ca) = (b.azimuth + d.azimuth).sin_cos();
            let (se, ce) = (b.elevation + d.elevation).sin_cos();
            let d_azim = Vector3::new(-se * sa, se * ca, 0.0) * l;
            let d_elev = Vector3::new(ce * ca, ce * sa, -se) * l;
            for (col, dp) in [(2 * i, d_azim), (2 * i + 1, d_elev)] {
                let dm = -(self.projection * dp);
                full[(2 * i, col)] = dm.x;
                full[(2 * i + 1, col)] = dm.y;
                full.fixed_view_mut::<3, 1>(8 + 3 * i, col)
                    .copy_from(&(dp * w));
            }
        }
        Ok(full * &self.expansion)
    }
}

/// Levenberg–Marquardt settings. Damping is scaled by `diag(JᵀJ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub increase: f64,
    pub decrease: f64,
    pub min_damping: f64,
    pub max_damping: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by no more than this.
    pub tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-3,
            increase: 10.0,
            decrease: 10.0,
            min_damping: 1e-12,
            max_damping: 1e8,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.initial_damping, self.min_damping, self.max_damping];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || !(self.increase > 1.0 && self.decrease > 1.0)
            || self.min_damping > self.max_damping
            || self.tolerance.is_nan()
            || self.tolerance < 0.0
        {
            return Err(Error::invalid("invalid Levenberg-Marquardt configuration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmIteration {
    pub iteration: usize,
    /// Objective after this iteration (unchanged when the step was rejected).
    pub objective: f64,
    /// Damping used for this step.
    pub damping: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LmTrace {
    pub initial_objective: f64,
    pub records: Vec<LmIteration>,
}

impl LmTrace {
    /// Objective values after each accepted step, preceded by the starting value.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(
                self.records
                    .iter()
                    .filter(|r| r.accepted)
                    .map(|r| r.objective),
            )
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: FreeParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: LmTrace,
}

fn numerical_failure(reason: &str, trace: &LmTrace) -> Error {
    Error::NumericalFailure {
        reason: reason.to_string(),
        trace: Box::new(trace.clone()),
    }
}

/// Minimizes the context objective starting from zero morph.
///
/// A step is kept only if it lowers the objective, so the result is never
/// worse than the unmorphed model. The run is converged when an accepted
/// step gains at most `cfg.tolerance`, when the gradient vanishes, or when
/// a step is rejected at maximum damping.
pub fn lm_solve(ctx: &ObjectiveContext, cfg: &LmConfig) -> Result<LmOutcome> {
    cfg.validate()?;
    let n = ctx.mode.free_len();
    let mut x = FreeParams::zeros(ctx.mode);
    let mut r = ctx.residuals(&x)?;
    let mut e = r.norm_squared();
    let mut trace = LmTrace {
        initial_objective: e,
        records: Vec::new(),
    };
    if !e.is_finite() {
        return Err(numerical_failure("initial objective is not finite", &trace));
    }
    let mut j = ctx.jacobian(&x)?;
    let mut lambda = cfg.initial_damping.clamp(cfg.min_damping, cfg.max_damping);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if j.iter().any(|v| !v.is_finite()) {
            return Err(numerical_failure("jacobian is not finite", &trace));
        }
        let g = j.tr_mul(&r);
        if g.amax() <= 1e-14 {
            converged = true;
            break;
        }
        let h = j.tr_mul(&j);
        let mut lhs = h.clone();
        for k in 0..n {
            lhs[(k, k)] += lambda * h[(k, k)].max(1e-12);
        }
        let step = lhs
            .clone()
            .cholesky()
            .map(|c| c.solve(&(-&g)))
            .or_else(|| lhs.clone().lu().solve(&(-&g)))
            .ok_or_else(|| numerical_failure("damped normal equations are singular", &trace))?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(numerical_failure("step is not finite", &trace));
        }
        let candidate = FreeParams(&x.0 + step);
        let r_new = ctx.residuals(&candidate)?;
        let e_new = r_new.norm_squared();
        if !e_new.is_finite() {
            return Err(numerical_failure("objective is not finite", &trace));
        }
        iterations += 1;
        if e_new < e {
            let gain = e - e_new;
            trace.records.push(LmIteration {
                iteration: iterations,
                objective: e_new,
                damping: lambda,
                accepted: true,
            });
            x = candidate;
            r = r_new;
            e = e_new;
            lambda = (lambda / cfg.decrease).max(cfg.min_damping);
            if gain <= cfg.tolerance {
                converged = true;
                break;
            }
            j = ctx.jacobian(&x)?;
        } else {
            trace.records.push(LmIteration {
                iteration: iterations,
                objective: e,
                damping: lambda,
                accepted: false,
            });
            if lambda >= cfg.max_damping {
                converged = true;
                break;
            }
            lambda = (lambda * cfg.increase).min(cfg.max_damping);
        }
    }

    Ok(LmOutcome {
        params: x,
        objective: e,
        iterations,
        converged,
        trace,
    })
}
