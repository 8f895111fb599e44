//! Centroid removal and per-point unit normalization.
//!
//! Each point is replaced by the unit vector from the set centroid towards
//! it. This removes image scale and translation from the 2D landmarks and
//! model scale from the 3D points.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::RotationMatrix;
use crate::landmarks::{FeaturePointSet2D, FeaturePointSet3D, FeaturePoints};

/// Deviations shorter than this fraction of the bounding-box diagonal are
/// treated as coincident with the centroid.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Unit deviation vectors together with the centroid they were taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSet<P> {
    pub centroid: P,
    pub labels: Vec<String>,
    pub units: Vec<P>,
}

pub type NormalizedSet2D = NormalizedSet<Vector2<f64>>;
pub type NormalizedSet3D = NormalizedSet<Vector3<f64>>;

pub fn centroid2d(set: &FeaturePointSet2D) -> Result<Vector2<f64>> {
    mean(set.points())
}

pub fn centroid3d(set: &FeaturePointSet3D) -> Result<Vector3<f64>> {
    mean(set.points())
}

fn mean<const D: usize>(points: &[nalgebra::SVector<f64, D>]) -> Result<nalgebra::SVector<f64, D>> {
    if points.is_empty() {
        return Err(Error::invalid("cannot take the centroid of an empty set"));
    }
    let sum = points
        .iter()
        .fold(nalgebra::SVector::<f64, D>::zeros(), |acc, p| acc + p);
    Ok(sum / points.len() as f64)
}

pub fn normalize2d(set: &FeaturePointSet2D) -> Result<NormalizedSet2D> {
    normalize(set)
}

pub fn normalize3d(set: &FeaturePointSet3D) -> Result<NormalizedSet3D> {
    normalize(set)
}

fn normalize<const D: usize>(
    set: &FeaturePoints<nalgebra::SVector<f64, D>>,
) -> Result<NormalizedSet<nalgebra::SVector<f64, D>>> {
    let points = set.points();
    let centroid = mean(points)?;
    let lo = points.iter().fold(points[0], |acc, p| acc.inf(p));
    let hi = points.iter().fold(points[0], |acc, p| acc.sup(p));
    let threshold = DEGENERACY_TOLERANCE * (hi - lo).norm();
    let mut units = Vec::with_capacity(points.len());
    for (label, p) in set.iter() {
        let d = p - centroid;
        let n = d.norm();
        if n.is_nan() || n <= threshold || n == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "landmark '{label}' coincides with the centroid"
            )));
        }
        units.push(d / n);
    }
    Ok(NormalizedSet {
        centroid,
        labels: set.labels().to_vec(),
        units,
    })
}

impl NormalizedSet3D {
    pub fn as_four(&self) -> Result<[Vector3<f64>; 4]> {
        self.units
            .as_slice()
            .try_into()
            .map_err(|_| Error::invalid(format!("expected 4 points, got {}", self.units.len())))
    }
}

impl NormalizedSet2D {
    pub fn as_four(&self) -> Result<[Vector2<f64>; 4]> {
        self.units
            .as_slice()
            .try_into()
            .map_err(|_| Error::invalid(format!("expected 4 points, got {}", self.units.len())))
    }
}

/// Length ratio of a model-space deviation before and after orthographic
/// projection by `[r1ᵀ; r2ᵀ]`.
///
/// Unit normalization of the 2D and 3D sets is only consistent with the
/// linear model `m' = R'·M'` when this ratio is 1, i.e. when the deviation
/// lies in the span of `r1` and `r2`.
pub fn projection_ratio(r: &RotationMatrix, deviation: &Vector3<f64>) -> Result<f64> {
    let n = deviation.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid("deviation must be non-zero and finite"));
    }
    Ok((r.projection_rows() * deviation).norm() / n)
}
