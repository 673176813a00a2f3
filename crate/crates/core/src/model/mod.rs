//! Statistical face model, scene parameters, mesh evaluation and camera.

mod bundle;
mod camera;
mod geometry;
mod params;
pub mod synthetic;
mod uvmap;

pub use bundle::{load_bundle, ModelBundle, LANDMARK_COUNT};
pub use camera::{camera_ray, perspective, to_camera, Camera, Intrinsics};
pub use geometry::{
    eval_albedos, eval_geometry, orthonormal_tangent, tangent_frames, vertex_albedo, vertex_normals, vertex_positions,
    Mesh,
};
pub use params::{Block, SceneParams};
pub use uvmap::{sample_bilinear, UvMap};
