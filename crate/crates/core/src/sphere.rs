//! The sphere through four non-coplanar points, spherical coordinates on it,
//! and the morph parametrization that slides points over its surface.
//!
//! Elevation is measured from the `+z` pole and azimuth from `+x` towards
//! `+y`:
//!
//! ```text
//! x − x₀ = l·sin(elev)·cos(azim)
//! y − y₀ = l·sin(elev)·sin(azim)
//! z − z₀ = l·cos(elev)
//! ```

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::landmarks::is_non_coplanar;

/// Points farther than this fraction of the radius from the surface are
/// rejected by [`Sphere::to_spherical`].
pub const ON_SPHERE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub radius: f64,
    /// Radians in `(−π, π]`.
    pub azimuth: f64,
    /// Radians in `[0, π]`, zero at the `+z` pole.
    pub elevation: f64,
}

/// Offsets added to one point's spherical angles. The radius never changes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointMorph {
    pub azimuth: f64,
    pub elevation: f64,
}

/// Fits the unique sphere through four non-coplanar points.
///
/// Subtracting the first sphere equation from the other three gives the
/// linear system `P·c = b` with `P` rows `pᵢ − p₁` and
/// `bᵢ = (|pᵢ|² − |p₁|²)/2`; it is solved by LU with partial pivoting.
pub fn fit_sphere(points: &[Vector3<f64>; 4]) -> Result<Sphere> {
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("sphere points must be finite"));
    }
    if !is_non_coplanar(points) {
        return Err(Error::DegenerateInput(
            "cannot fit a sphere through coplanar points".into(),
        ));
    }
    let p1 = points[0];
    let rows = [points[1] - p1, points[2] - p1, points[3] - p1];
    let p = Matrix3::from_rows(&[
        rows[0].transpose(),
        rows[1].transpose(),
        rows[2].transpose(),
    ]);
    let n1 = p1.norm_squared();
    let b = Vector3::new(
        0.5 * (points[1].norm_squared() - n1),
        0.5 * (points[2].norm_squared() - n1),
        0.5 * (points[3].norm_squared() - n1),
    );
    let center = p
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::DegenerateInput("sphere system is singular".into()))?;
    let radius = (p1 - center).norm();
    Ok(Sphere { center, radius })
}

impl Sphere {
    pub fn to_spherical(&self, point: &Vector3<f64>) -> Result<SphericalPoint> {
        let d = point - self.center;
        let r = d.norm();
        if (r - self.radius).abs() > ON_SPHERE_TOLERANCE * self.radius {
            return Err(Error::invalid(format!(
                "point is {:e} off the sphere of radius {}",
                r - self.radius,
                self.radius
            )));
        }
        let elevation = (d.z / self.radius).clamp(-1.0, 1.0).acos();
        let azimuth = if elevation == 0.0 || elevation == std::f64::consts::PI {
            0.0
        } else {
            d.y.atan2(d.x)
        };
        Ok(SphericalPoint {
            radius: self.radius,
            azimuth,
            elevation,
        })
    }

    pub fn to_rectangular(&self, sp: &SphericalPoint) -> Vector3<f64> {
        self.center + unit_direction(sp.azimuth, sp.elevation) * sp.radius
    }

    /// Moves `base` over the sphere by the given angle offsets.
    pub fn apply_morph(&self, base: &SphericalPoint, delta: &PointMorph) -> Vector3<f64> {
        self.to_rectangular(&SphericalPoint {
            radius: base.radius,
            azimuth: base.azimuth + delta.azimuth,
            elevation: base.elevation + delta.elevation,
        })
    }
}

pub(crate) fn unit_direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    Vector3::new(se * ca, se * sa, ce)
}

/// How the optimizer's free parameters map onto the eight per-point offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintMode {
    /// Midline points (1, 2) keep their azimuth; the pair (3, 4) shares its
    /// elevation offset and mirrors its azimuth offset.
    /// Free vector: `(Δ1.elev, Δ2.elev, Δ3.elev = Δ4.elev, Δ3.azim = −Δ4.azim)`.
    #[default]
    Symmetric,
    /// Every offset is free: `(Δ1.azim, Δ1.elev, …, Δ4.azim, Δ4.elev)`.
    Free,
}

impl ConstraintMode {
    pub fn free_len(self) -> usize {
        match self {
            ConstraintMode::Symmetric => 4,
            ConstraintMode::Free => 8,
        }
    }

    /// Linear map from free parameters to `(Δ1.azim, Δ1.elev, …, Δ4.elev)`.
    pub fn expansion_matrix(self) -> DMatrix<f64> {
        match self {
            ConstraintMode::Free => DMatrix::identity(8, 8),
            ConstraintMode::Symmetric => {
                let mut e = DMatrix::zeros(8, 4);
                e[(1, 0)] = 1.0;
                e[(3, 1)] = 1.0;
                e[(5, 2)] = 1.0;
                e[(7, 2)] = 1.0;
                e[(4, 3)] = 1.0;
                e[(6, 3)] = -1.0;
                e
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstraintMode::Symmetric => "symmetric",
            ConstraintMode::Free => "free",
        }
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(ConstraintMode::Symmetric),
            "free" => Ok(ConstraintMode::Free),
            other => Err(Error::invalid(format!("unknown constraint mode '{other}'"))),
        }
    }
}

/// The reduced parameter vector searched by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParams(pub DVector<f64>);

impl FreeParams {
    pub fn zeros(mode: ConstraintMode) -> Self {
        FreeParams(DVector::zeros(mode.free_len()))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        FreeParams(DVector::from_column_slice(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-point offsets for all four points.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphParams {
    pub mode: ConstraintMode,
    pub deltas: [PointMorph; 4],
}

pub fn expand_params(free: &FreeParams, mode: ConstraintMode) -> Result<MorphParams> {
    let v = free.as_slice();
    if v.len() != mode.free_len() {
        return Err(Error::invalid(format!(
            "{} mode takes {} parameters, got {}",
            mode.name(),
            mode.free_len(),
            v.len()
        )));
    }
    let deltas = match mode {
        ConstraintMode::Symmetric => {
            let [a, b, c, d] = [v[0], v[1], v[2], v[3]];
            [
                PointMorph {
                    azimuth: 0.0,
                    elevation: a,
                },
                PointMorph {
                    azimuth: 0.0,
                    elevation: b,
                },
                PointMorph {
                    azimuth: d,
                    elevation: c,
                },
                PointMorph {
                    azimuth: -d,
                    elevation: c,
                },
            ]
        }
        ConstraintMode::Free => std::array::from_fn(|i| PointMorph {
            azimuth: v[2 * i],
            elevation: v[2 * i + 1],
        }),
    };
    Ok(MorphParams { mode, deltas })
}
