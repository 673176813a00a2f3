//! Irradiance `B = (1 − s)·B_d + s·B_s` from SH light, and tangent-space
//! normal mapping.

use crate::diff::Real;
use crate::error::{Error, Result};
use crate::math::{M3, V3};
use crate::sh::{sh_dot, ConvolvedKernels, SHLight, NCOEF};

/// One shading query in plain numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadePoint {
    /// Unit shading normal (possibly normal-mapped).
    pub normal: [f64; 3],
    pub diffuse: [f64; 3],
    /// Specular albedo; its RGB mean is the blend weight `s`.
    pub specular: [f64; 3],
    /// Unit vector from the surface toward the viewer.
    pub view: [f64; 3],
}

impl ShadePoint {
    pub fn reflection(&self) -> [f64; 3] {
        reflect(V3::from_array(self.normal), V3::from_array(self.view)).to_array()
    }

    pub fn specular_intensity(&self) -> f64 {
        specular_intensity(self.specular)
    }
}

/// Mirror `w` about `n`: `2(n·w)n − w`.
pub fn reflect<S: Real>(n: V3<S>, w: V3<S>) -> V3<S> {
    n.scale(n.dot(w) * 2.0) - w
}

/// Scalar blend weight: mean of the specular RGB.
pub fn specular_intensity<S: Real>(s: [S; 3]) -> S {
    (s[0] + s[1] + s[2]) / 3.0
}

/// SH light pre-multiplied by the diffuse and specular kernels, in any
/// scalar type; channel-major, 81 per channel.
#[derive(Clone, Debug)]
pub struct ConvLight<S> {
    pub diffuse: Vec<S>,
    pub specular: Vec<S>,
}

impl ConvLight<f64> {
    pub fn new(light: &SHLight, k: &ConvolvedKernels) -> Self {
        ConvLight {
            diffuse: light.convolve(&k.a).as_flattened().to_vec(),
            specular: light.convolve(&k.s).as_flattened().to_vec(),
        }
    }
}

impl<S: Real> ConvLight<S> {
    pub fn diffuse_channel(&self, c: usize) -> &[S] {
        &self.diffuse[c * NCOEF..(c + 1) * NCOEF]
    }

    pub fn specular_channel(&self, c: usize) -> &[S] {
        &self.specular[c * NCOEF..(c + 1) * NCOEF]
    }

    /// `c · Σ A_l B_lm Y_lm(n)` per channel.
    pub fn diffuse_at(&self, n: V3<S>, c: [S; 3]) -> [S; 3] {
        [0, 1, 2].map(|ch| c[ch] * sh_dot(self.diffuse_channel(ch), n))
    }

    /// `Σ S_l B_lm Y_lm(r)` per channel.
    pub fn specular_at(&self, r: V3<S>) -> [S; 3] {
        [0, 1, 2].map(|ch| sh_dot(self.specular_channel(ch), r))
    }

    /// Full blend for normal `n`, view vector `w`, and the two albedos.
    pub fn shade(&self, n: V3<S>, w: V3<S>, c: [S; 3], spec: [S; 3]) -> [S; 3] {
        let s = specular_intensity(spec);
        let bd = self.diffuse_at(n, c);
        let bs = self.specular_at(reflect(n, w));
        let keep = -s + 1.0;
        [0, 1, 2].map(|ch| bd[ch] * keep + bs[ch] * s)
    }
}

pub fn shade_diffuse(light: &SHLight, k: &ConvolvedKernels, n: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    ConvLight::new(light, k).diffuse_at(V3::from_array(n), c)
}

pub fn shade_specular(light: &SHLight, k: &ConvolvedKernels, r: [f64; 3]) -> [f64; 3] {
    ConvLight::new(light, k).specular_at(V3::from_array(r))
}

pub fn shade(point: &ShadePoint, light: &SHLight, k: &ConvolvedKernels) -> [f64; 3] {
    ConvLight::new(light, k).shade(
        V3::from_array(point.normal),
        V3::from_array(point.view),
        point.diffuse,
        point.specular,
    )
}

/// `normalize(t·n̄x + b·n̄y + n·n̄z)`; the tangent and bitangent are treated
/// as constants.
pub fn shading_normal<S: Real>(t: V3<f64>, b: V3<f64>, n: V3<S>, nbar: V3<S>) -> V3<S> {
    let m = V3::new(
        nbar.x * t.x + nbar.y * b.x + n.x * nbar.z,
        nbar.x * t.y + nbar.y * b.y + n.y * nbar.z,
        nbar.x * t.z + nbar.y * b.z + n.z * nbar.z,
    );
    m.normalize()
}

/// Map a tangent-space normal through the frame `[t | b | n]`.
pub fn apply_normal_map(frame: &M3<f64>, nbar: [f64; 3]) -> Result<[f64; 3]> {
    let (t, b, n) = (frame.col(0), frame.col(1), frame.col(2));
    let tol = 1e-6;
    let unit = |v: V3<f64>| (v.norm() - 1.0).abs() < tol;
    if !(unit(t) && unit(b) && unit(n)) || t.dot(b).abs() > tol || t.dot(n).abs() > tol || b.dot(n).abs() > tol {
        return Err(Error::DegenerateFrame);
    }
    Ok(shading_normal(t, b, n, V3::from_array(nbar)).to_array())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernels() -> ConvolvedKernels {
        ConvolvedKernels::new(0.35).unwrap()
    }

    #[test]
    fn blend_endpoints() {
        let mut light = SHLight::constant([0.8, 0.9, 1.0]);
        light.coeffs[0][2] = 0.3;
        light.coeffs[2][7] = -0.2;
        let k = kernels();
        let n = [0.0, 0.6, -0.8];
        let view = [0.0, 0.0, -1.0];
        let mut p = ShadePoint { normal: n, diffuse: [0.5, 0.4, 0.3], specular: [0.0; 3], view };
        assert_eq!(shade(&p, &light, &k), shade_diffuse(&light, &k, n, p.diffuse));
        p.specular = [1.0; 3];
        let r = p.reflection();
        assert_eq!(shade(&p, &light, &k), shade_specular(&light, &k, r));
        p.specular = [0.5; 3];
        let got = shade(&p, &light, &k);
        let d = shade_diffuse(&light, &k, n, p.diffuse);
        let s = shade_specular(&light, &k, r);
        for c in 0..3 {
            assert!((got[c] - 0.5 * (d[c] + s[c])).abs() < 1e-15);
        }
    }

    #[test]
    fn reflection_is_unit() {
        let p = ShadePoint {
            normal: [0.0, 0.6, -0.8],
            diffuse: [0.0; 3],
            specular: [0.0; 3],
            view: [0.48, 0.0, -0.8772684879784524],
        };
        let r = V3::from_array(p.reflection());
        assert!((r.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_light_and_zero_albedo() {
        let k = kernels();
        assert_eq!(shade_specular(&SHLight::zero(), &k, [0.0, 0.0, 1.0]), [0.0; 3]);
        let l = SHLight::constant([1.0; 3]);
        assert_eq!(shade_diffuse(&l, &k, [0.0, 0.0, 1.0], [0.0; 3]), [0.0; 3]);
    }

    #[test]
    fn normal_map_identity_and_tangent() {
        let f = M3::from_cols(V3::new(1.0, 0.0, 0.0), V3::new(0.0, 0.0, 1.0), V3::new(0.0, -1.0, 0.0));
        assert_eq!(apply_normal_map(&f, [0.0, 0.0, 1.0]).unwrap(), [0.0, -1.0, 0.0]);
        assert_eq!(apply_normal_map(&f, [1.0, 0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0]);
        let bad = M3::from_cols(V3::new(1.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 0.0, 1.0));
        assert!(matches!(apply_normal_map(&bad, [0.0, 0.0, 1.0]), Err(Error::DegenerateFrame)));
    }
}
