//! Vertex position error, normal angular error and SSIM.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Angular thresholds in degrees; an error counts when strictly below.
pub const ANGLE_THRESHOLDS: [f64; 3] = [20.0, 25.0, 30.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub degrees: f64,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<Threshold>,
    /// Input normals that were not unit length and got renormalized.
    #[serde(default)]
    pub renormalized: usize,
}

impl MetricReport {
    fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyMask);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Ok(MetricReport { mean, std: var.sqrt(), count: xs.len(), thresholds: Vec::new(), renormalized: 0 })
    }

    /// One-line human-readable summary.
    pub fn table_row(&self, name: &str) -> String {
        let mut s = format!("{name:<24} {:>12.6} {:>12.6} {:>8}", self.mean, self.std, self.count);
        for t in &self.thresholds {
            let _ = write!(s, " <{:.0}°: {:>6.2}%", t.degrees, t.percent);
        }
        s
    }
}

fn check_mask(mask: Option<&[bool]>, n: usize) -> Result<()> {
    match mask {
        Some(m) if m.len() != n => Err(Error::MetricSize(m.len(), n)),
        _ => Ok(()),
    }
}

/// Euclidean distances between corresponding vertices (identity
/// correspondence) over an optional mask.
pub fn vertex_position_error(pred: &[[f64; 3]], gt: &[[f64; 3]], mask: Option<&[bool]>) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::MetricSize(pred.len(), gt.len()));
    }
    check_mask(mask, pred.len())?;
    let d: Vec<f64> = (0..pred.len())
        .filter(|&i| mask.is_none_or(|m| m[i]))
        .map(|i| {
            let (p, g) = (pred[i], gt[i]);
            ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt()
        })
        .collect();
    MetricReport::from_samples(&d)
}

fn unit(n: [f64; 3], fixed: &mut usize) -> [f64; 3] {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (len - 1.0).abs() > 1e-6 {
        *fixed += 1;
        return n.map(|c| c / len);
    }
    n
}

/// Per-pixel angle in degrees between two normal fields inside `mask`,
/// with the share of pixels strictly below each of [`ANGLE_THRESHOLDS`].
pub fn normal_angular_error(pred: &[[f64; 3]], gt: &[[f64; 3]], mask: &[bool]) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::MetricSize(pred.len(), gt.len()));
    }
    check_mask(Some(mask), pred.len())?;
    let mut fixed = 0;
    let angles: Vec<f64> = (0..pred.len())
        .filter(|&i| mask[i])
        .map(|i| {
            let (p, g) = (unit(pred[i], &mut fixed), unit(gt[i], &mut fixed));
            let c = (p[0] * g[0] + p[1] * g[1] + p[2] * g[2]).clamp(-1.0, 1.0);
            c.acos().to_degrees()
        })
        .collect();
    let mut r = MetricReport::from_samples(&angles)?;
    r.renormalized = fixed;
    r.thresholds = ANGLE_THRESHOLDS
        .iter()
        .map(|&t| Threshold {
            degrees: t,
            percent: 100.0 * angles.iter().filter(|&&a| a < t).count() as f64 / angles.len() as f64,
        })
        .collect();
    Ok(r)
}

/// [`normal_angular_error`] over the pixels present in both normal images.
pub fn normal_image_error(pred: &[Option<[f64; 3]>], gt: &[Option<[f64; 3]>]) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::MetricSize(pred.len(), gt.len()));
    }
    let mask: Vec<bool> = pred.iter().zip(gt).map(|(a, b)| a.is_some() && b.is_some()).collect();
    let fill = |v: &[Option<[f64; 3]>]| -> Vec<[f64; 3]> { v.iter().map(|n| n.unwrap_or([0.0, 0.0, 1.0])).collect() };
    normal_angular_error(&fill(pred), &fill(gt), &mask)
}

/// Root-mean-square difference over all channels of the pixels in `mask`
/// (every pixel when `None`).
pub fn photometric_rmse(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::ImageSize { module: "metrics", expected: (a.width, a.height), found: (b.width, b.height) });
    }
    check_mask(mask, a.len())?;
    let (mut se, mut n) = (0.0, 0usize);
    for k in (0..a.len()).filter(|&k| mask.is_none_or(|m| m[k])) {
        for c in 0..3 {
            se += (a.data[k][c] - b.data[k][c]).powi(2);
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((se / n as f64).sqrt())
}

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean SSIM over all 8×8 windows (stride 1) of the display luminance.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::ImageSize { module: "metrics", expected: (a.width, a.height), found: (b.width, b.height) });
    }
    ssim_gray(&a.display_luminance(), &b.display_luminance(), a.width, a.height)
}

/// Mean SSIM of two row-major grey images.
pub fn ssim_gray(x: &[f64], y: &[f64], width: usize, height: usize) -> Result<f64> {
    let k = SSIM_WINDOW;
    if width < k || height < k {
        return Err(Error::MetricSize(width.min(height), k));
    }
    // summed-area tables of x, y, x², y², xy
    let w1 = width + 1;
    let mut tables = vec![[0.0f64; 5]; w1 * (height + 1)];
    for j in 0..height {
        for i in 0..width {
            let (a, b) = (x[j * width + i], y[j * width + i]);
            let v = [a, b, a * a, b * b, a * b];
            for c in 0..5 {
                tables[(j + 1) * w1 + i + 1][c] =
                    v[c] + tables[j * w1 + i + 1][c] + tables[(j + 1) * w1 + i][c] - tables[j * w1 + i][c];
            }
        }
    }
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..=height - k {
        for i in 0..=width - k {
            let s = |c: usize| {
                tables[(j + k) * w1 + i + k][c] - tables[j * w1 + i + k][c] - tables[(j + k) * w1 + i][c]
                    + tables[j * w1 + i][c]
            };
            let (mx, my) = (s(0) / n, s(1) / n);
            let vx = (s(2) / n - mx * mx).max(0.0);
            let vy = (s(3) / n - my * my).max(0.0);
            let cov = s(4) / n - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_offset_vertices() {
        let gt = vec![[0.0, 1.0, 2.0], [3.0, -1.0, 0.5]];
        let pred: Vec<_> = gt.iter().map(|v| [v[0] + 1.0, v[1], v[2]]).collect();
        let r = vertex_position_error(&pred, &gt, None).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-15 && r.std.abs() < 1e-15);
        assert!(matches!(vertex_position_error(&pred, &gt, Some(&[false, false])), Err(Error::EmptyMask)));
    }

    #[test]
    fn strict_thresholds() {
        let a = 25f64.to_radians();
        let gt = vec![[0.0, 0.0, 1.0]; 4];
        let pred = vec![[a.sin(), 0.0, a.cos()]; 4];
        let r = normal_angular_error(&pred, &gt, &[true; 4]).unwrap();
        assert!((r.mean - 25.0).abs() < 1e-9);
        let p: Vec<f64> = r.thresholds.iter().map(|t| t.percent).collect();
        assert_eq!(p, [0.0, 0.0, 100.0]);
    }

    #[test]
    fn ssim_identity_and_inverse() {
        let mut img = Image::new(12, 10);
        for (k, p) in img.data.iter_mut().enumerate() {
            *p = [(k % 7) as f64 / 7.0; 3];
        }
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        let mut inv = img.clone();
        for p in &mut inv.data {
            *p = p.map(|c| 1.0 - c);
        }
        assert!(ssim(&img, &inv).unwrap() < 1.0);
    }
}
