//! Real spherical harmonics up to band 8, convolution kernels, and the
//! lat-long environment map baked from SH light.
//!
//! Basis functions are evaluated with the polar axis along `+z` and without
//! the Condon–Shortley phase. Coefficient `(l, m)` lives at `l² + l + m`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::diff::{Dual3, Real};
use crate::error::{Error, Result};
use crate::math::V3;

pub const BANDS: usize = 9;
pub const NCOEF: usize = BANDS * BANDS;
pub const ENV_SIZE: usize = 64;

#[inline]
pub fn index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Band of flat coefficient index `k`.
pub fn band_of(k: usize) -> usize {
    (k as f64).sqrt() as usize
}

fn norm_consts() -> &'static [[f64; BANDS]; BANDS] {
    static K: OnceLock<[[f64; BANDS]; BANDS]> = OnceLock::new();
    K.get_or_init(|| {
        let fact = |n: usize| (1..=n).fold(1.0, |a, k| a * k as f64);
        let mut k = [[0.0; BANDS]; BANDS];
        for l in 0..BANDS {
            for m in 0..=l {
                k[l][m] = ((2 * l + 1) as f64 / (4.0 * PI) * fact(l - m) / fact(l + m)).sqrt();
            }
        }
        k
    })
}

/// All 81 basis values at `(x, y, z)`, assumed on the unit sphere.
///
/// Polynomial in the Cartesian components, so it can be evaluated on any
/// [`Real`], including [`Dual3`] for its Jacobian.
pub fn basis_generic<S: Real>(x: S, y: S, z: S) -> [S; NCOEF] {
    let k = norm_consts();
    let zero = x.lift(0.0);
    let mut out = [zero; NCOEF];
    // (x + iy)^m
    let mut re = x.lift(1.0);
    let mut im = zero;
    let mut qmm = x.lift(1.0);
    for m in 0..BANDS {
        if m > 0 {
            let nre = re * x - im * y;
            let nim = re * y + im * x;
            re = nre;
            im = nim;
            qmm = qmm * (2 * m - 1) as f64;
        }
        let mut q_prev2 = zero;
        let mut q_prev = qmm;
        for l in m..BANDS {
            let q = if l == m {
                qmm
            } else if l == m + 1 {
                z * qmm * (2 * m + 1) as f64
            } else {
                (z * q_prev * (2 * l - 1) as f64 - q_prev2 * (l + m - 1) as f64) / (l - m) as f64
            };
            if l > m {
                q_prev2 = q_prev;
                q_prev = q;
            }
            let c = l * l + l;
            if m == 0 {
                out[c] = q * k[l][0];
            } else {
                let s = q * (std::f64::consts::SQRT_2 * k[l][m]);
                out[c + m] = s * re;
                out[c - m] = s * im;
            }
        }
    }
    out
}

/// Real SH basis at a unit direction.
pub fn sh_basis(dir: [f64; 3]) -> Result<[f64; NCOEF]> {
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if (n - 1.0).abs() > 1e-6 || !n.is_finite() {
        return Err(Error::NonUnitDirection(n));
    }
    Ok(basis_generic(dir[0], dir[1], dir[2]))
}

/// Basis values and their gradients with respect to the direction.
pub fn basis_with_gradient(d: V3<f64>) -> ([f64; NCOEF], [[f64; 3]; NCOEF]) {
    let y = basis_generic(Dual3::seed(d.x, 0), Dual3::seed(d.y, 1), Dual3::seed(d.z, 2));
    let mut v = [0.0; NCOEF];
    let mut g = [[0.0; 3]; NCOEF];
    for k in 0..NCOEF {
        v[k] = y[k].v;
        g[k] = y[k].d;
    }
    (v, g)
}

/// Zonal coefficients of the clamped cosine, divided by π.
pub fn half_cosine_coeffs() -> [f64; BANDS] {
    let fact = |n: usize| (1..=n).fold(1.0, |a, k| a * k as f64);
    let mut a = [0.0; BANDS];
    for (l, al) in a.iter_mut().enumerate() {
        *al = match l {
            0 => 1.0,
            1 => 2.0 / 3.0,
            l if l % 2 == 1 => 0.0,
            l => {
                let sign = if (l / 2 - 1) % 2 == 0 { 1.0 } else { -1.0 };
                let h = l / 2;
                2.0 * sign / (((l + 2) * (l - 1)) as f64) * fact(l) / (2f64.powi(l as i32) * fact(h) * fact(h))
            }
        };
    }
    a
}

/// Exponent of the normalized Phong lobe used for a given roughness.
pub fn lobe_exponent(roughness: f64) -> f64 {
    (2.0 / (roughness * roughness) - 2.0).max(1.0)
}

/// Zonal coefficients `S_l = (e+1) ∫₀¹ xᵉ P_l(x) dx` of the specular lobe.
pub fn brdf_kernel_coeffs(roughness: f64) -> Result<[f64; BANDS]> {
    if !(roughness > 0.0 && roughness <= 1.0) {
        return Err(Error::RoughnessOutOfRange(roughness));
    }
    let e = lobe_exponent(roughness);
    // table[l][k] = ∫₀¹ x^(e+k) P_l(x) dx
    let mut table = [[0.0; BANDS]; BANDS];
    for k in 0..BANDS {
        table[0][k] = 1.0 / (e + k as f64 + 1.0);
        if k + 1 < BANDS {
            table[1][k] = 1.0 / (e + k as f64 + 2.0);
        }
    }
    for l in 1..BANDS - 1 {
        for k in 0..BANDS - l - 1 {
            table[l + 1][k] = ((2 * l + 1) as f64 * table[l][k + 1] - l as f64 * table[l - 1][k]) / (l + 1) as f64;
        }
    }
    let mut s = [0.0; BANDS];
    for l in 0..BANDS {
        s[l] = (e + 1.0) * table[l][0];
    }
    Ok(s)
}

/// Per-band kernels for diffuse (`a`) and specular (`s`) shading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvolvedKernels {
    pub a: [f64; BANDS],
    pub s: [f64; BANDS],
}

impl ConvolvedKernels {
    pub fn new(roughness: f64) -> Result<Self> {
        Ok(ConvolvedKernels { a: half_cosine_coeffs(), s: brdf_kernel_coeffs(roughness)? })
    }
}

/// Three channels of 81 SH light coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SHLight {
    pub coeffs: [[f64; NCOEF]; 3],
}

impl TryFrom<Vec<Vec<f64>>> for SHLight {
    type Error = String;
    fn try_from(v: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        if v.len() != 3 || v.iter().any(|c| c.len() != NCOEF) {
            return Err(format!("sh-light: expected 3x{NCOEF} coefficients"));
        }
        let mut coeffs = [[0.0; NCOEF]; 3];
        for (dst, src) in coeffs.iter_mut().zip(&v) {
            dst.copy_from_slice(src);
        }
        if coeffs.iter().flatten().any(|c| !c.is_finite()) {
            return Err("sh-light: non-finite coefficient".into());
        }
        Ok(SHLight { coeffs })
    }
}

impl From<SHLight> for Vec<Vec<f64>> {
    fn from(l: SHLight) -> Self {
        l.coeffs.iter().map(|c| c.to_vec()).collect()
    }
}

impl SHLight {
    pub fn zero() -> Self {
        SHLight { coeffs: [[0.0; NCOEF]; 3] }
    }

    /// Light of constant radiance `rgb` in every direction.
    pub fn constant(rgb: [f64; 3]) -> Self {
        let mut l = Self::zero();
        let y00 = 0.5 / PI.sqrt();
        for c in 0..3 {
            l.coeffs[c][0] = rgb[c] / y00;
        }
        l
    }

    /// Unclamped radiance in direction `dir`.
    /// Radiance `rgb · (1 + a·ω)`; non-negative everywhere when `|a| ≤ 1`.
    pub fn linear(rgb: [f64; 3], a: [f64; 3]) -> Self {
        let mut l = Self::constant(rgb);
        let y1 = (3.0 / (4.0 * PI)).sqrt();
        for c in 0..3 {
            l.coeffs[c][index(1, -1)] = rgb[c] * a[1] / y1;
            l.coeffs[c][index(1, 0)] = rgb[c] * a[2] / y1;
            l.coeffs[c][index(1, 1)] = rgb[c] * a[0] / y1;
        }
        l
    }

    pub fn eval(&self, dir: [f64; 3]) -> [f64; 3] {
        let y = basis_generic(dir[0], dir[1], dir[2]);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = self.coeffs[c].iter().zip(&y).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Coefficients multiplied per band by `kernel`.
    pub fn convolve(&self, kernel: &[f64; BANDS]) -> [[f64; NCOEF]; 3] {
        let mut out = self.coeffs;
        for ch in out.iter_mut() {
            for (k, v) in ch.iter_mut().enumerate() {
                *v *= kernel[band_of(k)];
            }
        }
        out
    }
}

/// `Σ_k coeffs[k] · Y_k(dir)` as a single recorded node.
///
/// Parents are the 81 coefficients (partial `Y_k`) and the three direction
/// components (partial `Σ coeffs[k] ∂Y_k/∂dir`).
pub fn sh_dot<S: Real>(coeffs: &[S], dir: V3<S>) -> S {
    let (y, g) = basis_with_gradient(dir.value());
    let mut value = 0.0;
    let mut dd = [0.0; 3];
    let mut parents = Vec::with_capacity(NCOEF + 3);
    for k in 0..NCOEF {
        let c = coeffs[k].value();
        value += c * y[k];
        for a in 0..3 {
            dd[a] += c * g[k][a];
        }
        parents.push((coeffs[k], y[k]));
    }
    parents.push((dir.x, dd[0]));
    parents.push((dir.y, dd[1]));
    parents.push((dir.z, dd[2]));
    dir.x.custom(value, &parents)
}

/// Unit direction at the center of env texel `(i, j)`; `i` runs along
/// azimuth, `j` along the polar angle measured from `-y` (up).
pub fn env_direction(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), -theta.cos(), theta.sin() * phi.sin()]
}

/// Env-map `(theta, phi)` of a direction.
pub fn env_angles(d: [f64; 3]) -> (f64, f64) {
    let rho = (d[0] * d[0] + d[2] * d[2]).sqrt();
    let theta = rho.atan2(-d[1]);
    let mut phi = d[2].atan2(d[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    (theta, phi)
}

fn env_tables() -> &'static (Vec<[f64; NCOEF]>, Vec<f64>) {
    static T: OnceLock<(Vec<[f64; NCOEF]>, Vec<f64>)> = OnceLock::new();
    T.get_or_init(|| {
        let n = ENV_SIZE;
        let mut ys = Vec::with_capacity(n * n);
        let mut omega = Vec::with_capacity(n * n);
        let dphi = 2.0 * PI / n as f64;
        let dtheta = PI / n as f64;
        for j in 0..n {
            let theta = (j as f64 + 0.5) * dtheta;
            let w = dphi * ((j as f64 * dtheta).cos() - ((j + 1) as f64 * dtheta).cos());
            for i in 0..n {
                let phi = (i as f64 + 0.5) * dphi;
                let d = env_direction(theta, phi);
                ys.push(basis_generic(d[0], d[1], d[2]));
                omega.push(w);
            }
        }
        (ys, omega)
    })
}

/// SH basis at the center of every env texel, row-major.
pub fn env_texel_basis() -> &'static [[f64; NCOEF]] {
    &env_tables().0
}

/// Exact solid angle of every env texel, row-major.
pub fn env_solid_angles() -> &'static [f64] {
    &env_tables().1
}

/// 64×64 lat-long radiance map, clamped at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvMap {
    pub data: Vec<[f64; 3]>,
}

impl EnvMap {
    pub const SIZE: usize = ENV_SIZE;

    pub fn solid_angles(&self) -> &'static [f64] {
        env_solid_angles()
    }

    /// Interpolated radiance lookup.
    pub fn lookup(&self, dir: [f64; 3]) -> [f64; 3] {
        let w = env_taps(V3::from_array(dir)).0;
        let mut out = [0.0; 3];
        for (idx, wt) in w {
            for c in 0..3 {
                out[c] += wt * self.data[idx][c];
            }
        }
        out
    }
}

pub fn bake_envmap(light: &SHLight) -> EnvMap {
    let ys = env_texel_basis();
    let data = ys
        .iter()
        .map(|y| {
            let mut t = [0.0; 3];
            for c in 0..3 {
                let v: f64 = light.coeffs[c].iter().zip(y).map(|(a, b)| a * b).sum();
                t[c] = v.max(0.0);
            }
            t
        })
        .collect();
    EnvMap { data }
}

/// Number of texels one env lookup reads.
pub const ENV_TAPS: usize = 16;

/// Uniform cubic B-spline weights for fractional offset `t` (taps at
/// −1, 0, 1, 2) and their derivatives.
pub fn bspline_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let s = 1.0 - t;
    (
        [
            s * s * s / 6.0,
            (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
            (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0,
            t * t * t / 6.0,
        ],
        [-s * s / 2.0, (3.0 * t * t - 4.0 * t) / 2.0, (-3.0 * t * t + 2.0 * t + 1.0) / 2.0, t * t / 2.0],
    )
}

/// Cubic B-spline taps `(texel, weight)` for a direction plus the gradient
/// of each weight with respect to the (unnormalized) direction. Azimuth
/// wraps; rows clamp at the poles. The lookup is C² in the direction.
pub fn env_taps(d: V3<f64>) -> ([(usize, f64); ENV_TAPS], [[f64; 3]; ENV_TAPS]) {
    let n = ENV_SIZE as f64;
    let rho2 = d.x * d.x + d.z * d.z;
    let rho = rho2.sqrt();
    let r2 = rho2 + d.y * d.y;
    let theta = rho.atan2(-d.y);
    let mut phi = d.z.atan2(d.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    // gradients of theta and phi
    let (dth, dph) = if rho > 1e-12 {
        ([d.x * -d.y / (rho * r2), rho / r2, d.z * -d.y / (rho * r2)], [-d.z / rho2, 0.0, d.x / rho2])
    } else {
        ([0.0; 3], [0.0; 3])
    };
    let u = phi / (2.0 * PI) * n - 0.5;
    let v = theta / PI * n - 0.5;
    let (du, dv) = (n / (2.0 * PI), n / PI);
    let (u0, v0) = (u.floor(), v.floor());
    let (wu, dwu) = bspline_weights(u - u0);
    let (wv, dwv) = bspline_weights(v - v0);
    let size = ENV_SIZE as i64;
    let mut taps = [(0, 0.0); ENV_TAPS];
    let mut g = [[0.0; 3]; ENV_TAPS];
    for b in 0..4 {
        let j = (v0 as i64 + b as i64 - 1).clamp(0, size - 1) as usize;
        for a in 0..4 {
            let i = (u0 as i64 + a as i64 - 1).rem_euclid(size) as usize;
            let k = 4 * b + a;
            taps[k] = (j * ENV_SIZE + i, wu[a] * wv[b]);
            for c in 0..3 {
                g[k][c] = dwu[a] * du * dph[c] * wv[b] + wu[a] * dwv[b] * dv * dth[c];
            }
        }
    }
    (taps, g)
}

/// Differentiable env lookup: one node whose parents are the 16 texel
/// values of `channel` and the direction.
pub fn env_lookup<S: Real>(texel: impl Fn(usize) -> S, dir: V3<S>) -> S {
    let (taps, g) = env_taps(dir.value());
    let mut value = 0.0;
    let mut dd = [0.0; 3];
    let mut parents = Vec::with_capacity(ENV_TAPS + 3);
    for (t, (idx, w)) in taps.iter().enumerate() {
        let tv = texel(*idx);
        let x = tv.value();
        value += w * x;
        for a in 0..3 {
            dd[a] += g[t][a] * x;
        }
        parents.push((tv, *w));
    }
    parents.push((dir.x, dd[0]));
    parents.push((dir.y, dd[1]));
    parents.push((dir.z, dd[2]));
    dir.x.custom(value, &parents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_value() {
        let y = sh_basis([0.6, 0.0, 0.8]).unwrap();
        assert!((y[0] - 0.2820947918).abs() < 1e-10);
    }

    #[test]
    fn zonal_alignment() {
        let y = sh_basis([0.0, 0.0, 1.0]).unwrap();
        assert_eq!(y[index(1, -1)], 0.0);
        assert_eq!(y[index(1, 1)], 0.0);
        assert!(y[index(1, 0)] > 0.0);
    }

    #[test]
    fn known_low_bands() {
        let d = [0.48, 0.6, 0.64];
        let y = sh_basis(d).unwrap();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((y[1] - c1 * d[1]).abs() < 1e-14);
        assert!((y[2] - c1 * d[2]).abs() < 1e-14);
        assert!((y[3] - c1 * d[0]).abs() < 1e-14);
        let c2 = 0.5 * (15.0 / PI).sqrt();
        assert!((y[4] - c2 * d[0] * d[1]).abs() < 1e-14);
        assert!((y[6] - 0.25 * (5.0 / PI).sqrt() * (3.0 * d[2] * d[2] - 1.0)).abs() < 1e-14);
        assert!((y[8] - 0.25 * (15.0 / PI).sqrt() * (d[0] * d[0] - d[1] * d[1])).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_unit() {
        assert!(matches!(sh_basis([1.0, 1.0, 0.0]), Err(Error::NonUnitDirection(_))));
    }

    #[test]
    fn closed_form_kernel_values() {
        let a = half_cosine_coeffs();
        assert_eq!(a[0], 1.0);
        assert!((a[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[2] - 0.25).abs() < 1e-15);
        assert!((a[4] + 1.0 / 24.0).abs() < 1e-15);
        assert!((a[6] - 1.0 / 64.0).abs() < 1e-15);
        assert!(a[8].abs() < a[0].abs());
        for l in [3, 5, 7] {
            assert_eq!(a[l], 0.0);
        }
    }

    #[test]
    fn roughness_range() {
        assert!(brdf_kernel_coeffs(0.0).is_err());
        assert!(brdf_kernel_coeffs(1.5).is_err());
        let s = brdf_kernel_coeffs(1.0).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dc_light_bakes_flat() {
        let l = SHLight::constant([2.0, 0.5, 1.0]);
        let env = bake_envmap(&l);
        for t in &env.data {
            assert!((t[0] - 2.0).abs() < 1e-12);
            assert!((t[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn solid_angles_cover_sphere() {
        let s: f64 = env_solid_angles().iter().sum();
        assert!((s - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn env_angles_roundtrip() {
        let d = env_direction(1.1, 4.0);
        let (t, p) = env_angles(d);
        assert!((t - 1.1).abs() < 1e-12 && (p - 4.0).abs() < 1e-12);
    }

    #[test]
    fn env_lookup_weights_sum_to_one_and_match_fd() {
        let d = V3::new(0.3, -0.4, 0.5);
        let (taps, g) = env_taps(d);
        let s: f64 = taps.iter().map(|t| t.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
        let h = 1e-7;
        for a in 0..3 {
            let mut dp = d;
            let mut dm = d;
            match a {
                0 => {
                    dp.x += h;
                    dm.x -= h
                }
                1 => {
                    dp.y += h;
                    dm.y -= h
                }
                _ => {
                    dp.z += h;
                    dm.z -= h
                }
            }
            let (tp, _) = env_taps(dp);
            let (tm, _) = env_taps(dm);
            for k in 0..ENV_TAPS {
                let fd = (tp[k].1 - tm[k].1) / (2.0 * h);
                assert!((fd - g[k][a]).abs() < 1e-5, "tap {k} axis {a}: {fd} vs {}", g[k][a]);
            }
        }
    }

    #[test]
    fn bspline_partition_and_linear_precision() {
        for t in [0.0, 0.25, 0.5, 0.9] {
            let (w, dw) = bspline_weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(dw.iter().sum::<f64>().abs() < 1e-15);
            // taps at -1, 0, 1, 2 reproduce the offset itself
            let x: f64 = w.iter().enumerate().map(|(k, w)| w * (k as f64 - 1.0)).sum();
            assert!((x - t).abs() < 1e-15);
        }
    }

    #[test]
    fn light_json_roundtrip() {
        let mut l = SHLight::constant([1.0, 2.0, 3.0]);
        l.coeffs[1][40] = -0.25;
        let s = serde_json::to_string(&l).unwrap();
        let back: SHLight = serde_json::from_str(&s).unwrap();
        assert_eq!(l, back);
        assert!(serde_json::from_str::<SHLight>("[[1.0]]").is_err());
    }
}
