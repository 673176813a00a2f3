//! Independent reference implementations used only by tests.
//!
//! Everything here is written the slow, obvious way and shares no code with
//! the `facefit` crate.

use std::f64::consts::PI;

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let p = legendre(n, x);
            let pm = legendre(n - 1, x);
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs.push(x);
        ws.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (xs, ws)
}

/// `∫_a^b f` by `n`-point Gauss–Legendre.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let (m, h) = ((a + b) / 2.0, (b - a) / 2.0);
    xs.iter().zip(&ws).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

/// Band-`l` zonal coefficient of max(cos θ, 0), divided by π:
/// `2 ∫_0^1 P_l(t) t dt`.
pub fn clamped_cosine_band(l: usize) -> f64 {
    2.0 * integrate(|t| legendre(l, t) * t, 0.0, 1.0, 64)
}

/// `(1/π) ∫ L(ω) max(n·ω, 0) dω` on an `n_theta × n_phi` midpoint grid
/// over the hemisphere around `n`.
pub fn hemisphere_irradiance(radiance: impl Fn([f64; 3]) -> f64, n: [f64; 3], n_theta: usize, n_phi: usize) -> f64 {
    let (t, b) = frame(n);
    let mut sum = 0.0;
    let (dth, dph) = (PI / 2.0 / n_theta as f64, 2.0 * PI / n_phi as f64);
    for i in 0..n_theta {
        let th = (i as f64 + 0.5) * dth;
        let (st, ct) = th.sin_cos();
        for j in 0..n_phi {
            let ph = (j as f64 + 0.5) * dph;
            let (sp, cp) = ph.sin_cos();
            let w: [f64; 3] = std::array::from_fn(|k| st * cp * t[k] + st * sp * b[k] + ct * n[k]);
            sum += radiance(w) * ct * st;
        }
    }
    sum * dth * dph / PI
}

fn frame(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let t = normalize(cross(a, n));
    (t, cross(n, t))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let l = dot(a, a).sqrt();
    a.map(|c| c / l)
}

/// Ray/triangle distance via the supporting plane and three edge
/// half-plane tests.
pub fn ray_triangle(o: [f64; 3], d: [f64; 3], p: [[f64; 3]; 3]) -> Option<f64> {
    let nrm = cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let denom = dot(nrm, d);
    if denom == 0.0 {
        return None;
    }
    let t = dot(nrm, sub(p[0], o)) / denom;
    let x = [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]];
    for k in 0..3 {
        let (a, b) = (p[k], p[(k + 1) % 3]);
        if dot(cross(sub(b, a), sub(x, a)), nrm) < 0.0 {
            return None;
        }
    }
    Some(t)
}

/// Does any triangle block the ray inside `(tmin, tmax)`? Tests every
/// triangle.
pub fn brute_occluded(verts: &[[f64; 3]], tris: &[[u32; 3]], o: [f64; 3], d: [f64; 3], tmin: f64, tmax: f64) -> bool {
    tris.iter().any(|t| {
        let p = t.map(|i| verts[i as usize]);
        matches!(ray_triangle(o, d, p), Some(s) if s > tmin && s < tmax)
    })
}

/// Nearest hit over all triangles: `(triangle, t)`.
pub fn brute_closest(
    verts: &[[f64; 3]],
    tris: &[[u32; 3]],
    o: [f64; 3],
    d: [f64; 3],
    tmin: f64,
    tmax: f64,
) -> Option<(usize, f64)> {
    let mut best = None;
    for (i, t) in tris.iter().enumerate() {
        let p = t.map(|k| verts[k as usize]);
        if let Some(s) = ray_triangle(o, d, p) {
            if s > tmin && s < tmax && best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    best
}

/// Angle in degrees between two (not necessarily unit) vectors via atan2.
pub fn angle_degrees(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = cross(a, b);
    dot(c, c).sqrt().atan2(dot(a, b)).to_degrees()
}

/// Mean SSIM over all `k × k` windows, computed window by window with
/// two-pass means and population (co)variances.
pub fn ssim_direct(x: &[f64], y: &[f64], width: usize, height: usize, k: usize, c1: f64, c2: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for j in 0..=height - k {
        for i in 0..=width - k {
            let idx = |a: usize, b: usize| (j + b) * width + i + a;
            let n = (k * k) as f64;
            let (mut mx, mut my) = (0.0, 0.0);
            for b in 0..k {
                for a in 0..k {
                    mx += x[idx(a, b)];
                    my += y[idx(a, b)];
                }
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for b in 0..k {
                for a in 0..k {
                    let (dx, dy) = (x[idx(a, b)] - mx, y[idx(a, b)] - my);
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            vx /= n;
            vy /= n;
            cov /= n;
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}
