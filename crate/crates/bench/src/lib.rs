//! Fixtures shared by the criterion benchmarks.

use headpose_core::synthetic::{generate_scene, Projection, SceneSpec};
use headpose_core::{
    EulerAngles, FeaturePointSet2D, FeaturePointSet3D, Result, WeakPerspectiveCamera,
};

/// Weak-perspective landmarks of the bundled model on a 5×5×5 grid of
/// poses in ±30°.
pub fn grid_landmarks() -> Result<Vec<FeaturePointSet2D>> {
    let model = FeaturePointSet3D::default_face();
    let steps = [-30.0, -15.0, 0.0, 15.0, 30.0];
    let mut out = Vec::with_capacity(125);
    for p in steps {
        for y in steps {
            for r in steps {
                let spec = SceneSpec::new(
                    EulerAngles::from_degrees(p, y, r),
                    Projection::Weak(WeakPerspectiveCamera::default()),
                    model.clone(),
                );
                out.push(generate_scene(&spec)?.0);
            }
        }
    }
    Ok(out)
}
