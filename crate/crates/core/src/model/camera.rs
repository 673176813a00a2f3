use serde::{Deserialize, Serialize};

use crate::diff::Real;
use crate::error::{Error, Result};
use crate::math::{axis_angle_to_matrix, M3, V3};

/// Fixed pinhole intrinsics (pixels).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square image of side `size` with the principal point at the center
    /// and a focal length of three image widths.
    pub fn square(size: usize) -> Self {
        Intrinsics { f: 3.0 * size as f64, cx: size as f64 / 2.0, cy: size as f64 / 2.0, width: size, height: size }
    }
}

/// Pinhole camera; world point `v` maps to camera space as `Rᵀ(v − T)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub r: M3<f64>,
    pub t: V3<f64>,
    pub intr: Intrinsics,
}

impl Camera {
    pub fn new(rot: [f64; 3], trans: [f64; 3], intr: Intrinsics) -> Self {
        Camera { r: axis_angle_to_matrix(V3::from_array(rot)), t: V3::from_array(trans), intr }
    }

    pub fn to_camera(&self, v: [f64; 3]) -> V3<f64> {
        to_camera(&self.r, self.t, V3::from_array(v))
    }

    /// Pixel coordinates of a world point; errors when it is not in front.
    pub fn project(&self, v: [f64; 3]) -> Result<[f64; 2]> {
        let p = self.to_camera(v);
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        let (x, y) = perspective(p, &self.intr);
        Ok([x, y])
    }

    /// World-space direction of the ray through pixel position `(px, py)`.
    pub fn ray_dir(&self, px: f64, py: f64) -> V3<f64> {
        self.r.mul_vec(camera_ray(px, py, &self.intr))
    }
}

/// `Rᵀ (v − T)`.
pub fn to_camera<S: Real>(r: &M3<S>, t: V3<S>, v: V3<S>) -> V3<S> {
    r.tmul_vec(v - t)
}

pub fn perspective<S: Real>(p: V3<S>, intr: &Intrinsics) -> (S, S) {
    (p.x / p.z * intr.f + intr.cx, p.y / p.z * intr.f + intr.cy)
}

/// Camera-space direction (unnormalized, `z = 1`) through a pixel position.
pub fn camera_ray(px: f64, py: f64, intr: &Intrinsics) -> V3<f64> {
    V3::new((px - intr.cx) / intr.f, (py - intr.cy) / intr.f, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> Intrinsics {
        Intrinsics { f: 100.0, cx: 128.0, cy: 128.0, width: 256, height: 256 }
    }

    #[test]
    fn on_axis_point() {
        let c = Camera::new([0.0; 3], [0.0; 3], intr());
        assert_eq!(c.project([0.0, 0.0, 1.0]).unwrap(), [128.0, 128.0]);
        assert_eq!(c.project([0.5, 0.0, 1.0]).unwrap(), [178.0, 128.0]);
    }

    #[test]
    fn behind_camera_is_flagged() {
        let c = Camera::new([0.0; 3], [0.0; 3], intr());
        assert!(c.project([0.0, 0.0, -1.0]).is_err());
        assert!(c.project([0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn ray_through_projection_hits_point() {
        let c = Camera::new([0.1, -0.2, 0.05], [3.0, -2.0, -50.0], intr());
        let v = [1.0, 2.0, 3.0];
        let p = c.project(v).unwrap();
        let d = c.ray_dir(p[0], p[1]).normalize();
        let to = (V3::from_array(v) - c.t).normalize();
        assert!((d - to).norm() < 1e-12);
    }
}
