//! Head pose (pitch, yaw, roll) from four non-coplanar facial landmarks.
//!
//! The pipeline normalizes the 2D landmarks and the 3D reference model to
//! unit deviations from their centroids, solves an initial rotation by least
//! squares, morphs the model over the sphere through its four normalized
//! points with Levenberg–Marquardt, re-solves the rotation and decomposes it
//! into Euler angles.
//!
//! ```
//! use headpose_core::{estimate_pose, EstimationConfig, FeaturePointSet3D};
//! use headpose_core::synthetic::{generate_scene, Projection, SceneSpec};
//! use headpose_core::{EulerAngles, WeakPerspectiveCamera};
//!
//! let model = FeaturePointSet3D::default_face();
//! let spec = SceneSpec::new(
//!     EulerAngles::from_degrees(10.0, -20.0, 5.0),
//!     Projection::Weak(WeakPerspectiveCamera::default()),
//!     model.clone(),
//! );
//! let (landmarks, _) = generate_scene(&spec).unwrap();
//! let result = estimate_pose(&landmarks, &model, &EstimationConfig::default()).unwrap();
//! println!("{:?}", result.angles.degrees());
//! ```

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod io;
pub mod landmarks;
pub mod normalize;
pub mod optimizer;
pub mod sphere;
pub mod synthetic;

pub use error::{Error, Result, Stage};
pub use estimator::{
    estimate_pose, estimate_pose_no_morph, EstimationConfig, EstimationResult, DEFAULT_ETA,
};
pub use geometry::{
    complete_rotation, compose_rotation, euler_from_rotation, nearest_row_orthonormal,
    project_full, project_weak, rot_x, rot_y, rot_z, EulerAngles, PinholeCamera, RotationMatrix,
    WeakPerspectiveCamera,
};
pub use landmarks::{FeaturePointSet2D, FeaturePointSet3D, FeaturePoints};
pub use normalize::{
    centroid2d, centroid3d, normalize2d, normalize3d, projection_ratio, NormalizedSet2D,
    NormalizedSet3D,
};
pub use optimizer::{
    final_rotation, initial_rotation, lm_solve, LmConfig, LmOutcome, LmTrace, ObjectiveContext,
};
pub use sphere::{
    expand_params, fit_sphere, ConstraintMode, FreeParams, MorphParams, PointMorph, Sphere,
    SphericalPoint,
};
