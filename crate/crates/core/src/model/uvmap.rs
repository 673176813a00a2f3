use serde::{Deserialize, Serialize};

use crate::diff::Real;

/// Square RGB map in uv space; texel `(i, j)` has its center at
/// `((i + 0.5) / res, (j + 0.5) / res)` and is stored at `j * res + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UvMap {
    pub res: usize,
    pub data: Vec<[f64; 3]>,
}

impl UvMap {
    pub fn filled(res: usize, v: [f64; 3]) -> Self {
        UvMap { res, data: vec![v; res * res] }
    }

    pub fn sample(&self, uv: [f64; 2]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = sample_bilinear(self.res, |t| self.data[t][c], uv[0], uv[1]);
        }
        out
    }
}

/// Bilinear lookup with smoothstep weights and clamp-to-edge addressing,
/// generic over the scalar type of both the texels and the coordinates.
///
/// The smoothstep keeps the result continuously differentiable in `(u, v)`
/// across texel boundaries. Written as nested lerps so a constant
/// neighbourhood returns its value exactly.
pub fn sample_bilinear<S: Real>(res: usize, texel: impl Fn(usize) -> S, u: S, v: S) -> S {
    let rf = res as f64;
    let (i0, fx) = (u * rf - 0.5).floor_frac();
    let (j0, fy) = (v * rf - 0.5).floor_frac();
    let (fx, fy) = (fx.smoothstep(), fy.smoothstep());
    let clampi = |k: i64| k.clamp(0, res as i64 - 1) as usize;
    let (ia, ib) = (clampi(i0), clampi(i0 + 1));
    let (ja, jb) = (clampi(j0), clampi(j0 + 1));
    let lerp = |a: S, b: S, t: S| a + (b - a) * t;
    let top = lerp(texel(ja * res + ia), texel(ja * res + ib), fx);
    let bottom = lerp(texel(jb * res + ia), texel(jb * res + ib), fx);
    lerp(top, bottom, fy)
}
