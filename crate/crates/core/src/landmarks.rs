//! Labeled 2D/3D feature point sets and the bundled reference face model.

use std::collections::HashSet;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

/// Relative threshold for the non-coplanarity test, scaled by the cube of the
/// largest pairwise distance.
pub const COPLANARITY_TOLERANCE: f64 = 1e-9;

pub const CHIN: &str = "chin";
pub const NOSE_TIP: &str = "nose_tip";
pub const LEFT_CANTHUS: &str = "left_canthus";
pub const RIGHT_CANTHUS: &str = "right_canthus";

/// An ordered list of uniquely labeled points.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePoints<P> {
    labels: Vec<String>,
    points: Vec<P>,
}

/// Pixel coordinates of image landmarks.
pub type FeaturePointSet2D = FeaturePoints<Vector2<f64>>;
/// Model coordinates of the reference face.
pub type FeaturePointSet3D = FeaturePoints<Vector3<f64>>;

impl<P: Clone> FeaturePoints<P> {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, P)>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut points = Vec::new();
        let mut seen = HashSet::new();
        for (label, point) in entries {
            let label = label.into();
            if label.is_empty() {
                return Err(Error::invalid("empty landmark label"));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::invalid(format!(
                    "duplicate landmark label '{label}'"
                )));
            }
            labels.push(label);
            points.push(point);
        }
        if points.is_empty() {
            return Err(Error::invalid("feature point set is empty"));
        }
        Ok(FeaturePoints { labels, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn get(&self, label: &str) -> Option<&P> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.points[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &P)> {
        self.labels.iter().map(String::as_str).zip(&self.points)
    }

    /// Re-orders the set to follow `order`, matching by label.
    ///
    /// Fails naming the first label of `order` that is missing here, or the
    /// first label present here but absent from `order`.
    pub fn reorder<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        let mut entries = Vec::with_capacity(order.len());
        for label in order {
            let label = label.as_ref();
            let p = self
                .get(label)
                .ok_or_else(|| Error::invalid(format!("missing landmark '{label}'")))?;
            entries.push((label.to_string(), p.clone()));
        }
        if let Some(extra) = self
            .labels
            .iter()
            .find(|l| !order.iter().any(|o| o.as_ref() == l.as_str()))
        {
            return Err(Error::invalid(format!("unexpected landmark '{extra}'")));
        }
        FeaturePoints::new(entries)
    }

    pub fn map<Q: Clone>(&self, f: impl FnMut(&P) -> Q) -> FeaturePoints<Q> {
        FeaturePoints {
            labels: self.labels.clone(),
            points: self.points.iter().map(f).collect(),
        }
    }
}

impl FeaturePointSet3D {
    /// The bundled bilaterally symmetric face model in millimetre-scale units.
    ///
    /// Midline points come first, then the left/right canthus pair; the
    /// symmetric morph constraints rely on this order.
    pub fn default_face() -> Self {
        FeaturePoints::new([
            (CHIN, Vector3::new(0.0, -62.0, -10.0)),
            (NOSE_TIP, Vector3::new(0.0, -20.0, 21.0)),
            (LEFT_CANTHUS, Vector3::new(-34.0, 18.0, 0.0)),
            (RIGHT_CANTHUS, Vector3::new(34.0, 18.0, 0.0)),
        ])
        .expect("bundled model is valid")
    }

    /// Requires exactly four points spanning a proper tetrahedron.
    pub fn check_non_coplanar(&self) -> Result<()> {
        let pts = self.as_four()?;
        if !is_non_coplanar(&pts) {
            return Err(Error::DegenerateGeometry(
                "the four model points are coplanar".into(),
            ));
        }
        Ok(())
    }

    pub fn as_four(&self) -> Result<[Vector3<f64>; 4]> {
        four(&self.points)
    }
}

impl FeaturePointSet2D {
    pub fn as_four(&self) -> Result<[Vector2<f64>; 4]> {
        four(&self.points)
    }
}

fn four<P: Copy>(points: &[P]) -> Result<[P; 4]> {
    points
        .try_into()
        .map_err(|_| Error::invalid(format!("expected 4 feature points, got {}", points.len())))
}

/// `|(p2−p1)·((p3−p1)×(p4−p1))| > tol · d_max³`.
pub fn is_non_coplanar(points: &[Vector3<f64>; 4]) -> bool {
    let [p1, p2, p3, p4] = points;
    let triple = (p2 - p1).dot(&(p3 - p1).cross(&(p4 - p1)));
    let mut d_max: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            d_max = d_max.max((points[i] - points[j]).norm());
        }
    }
    d_max > 0.0 && triple.abs() > COPLANARITY_TOLERANCE * d_max.powi(3)
}
