use crate::diff::{dot_const, Real};
use crate::error::{Error, Result};
use crate::math::{M3, V3};

use super::bundle::ModelBundle;

/// Evaluated mesh with per-vertex shading frames.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    /// Identity-only surface `a_s + Σ_s α`.
    pub neutral: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    pub tangents: Vec<[f64; 3]>,
    pub bitangents: Vec<[f64; 3]>,
}

impl Mesh {
    /// Frame `[t | b | n]` of vertex `i`.
    pub fn frame(&self, i: usize) -> M3<f64> {
        M3::from_cols(
            V3::from_array(self.tangents[i]),
            V3::from_array(self.bitangents[i]),
            V3::from_array(self.normals[i]),
        )
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what: what.into(), expected, found });
    }
    Ok(())
}

/// `mean + basis · coeffs` for row `r`, as one recorded node per coordinate.
pub(crate) fn affine_row<S: Real>(anchor: S, mean: &[f64], basis: &[f64], coeffs: &[S], r: usize) -> S {
    let k = coeffs.len();
    if k == 0 {
        return anchor.lift(mean[r]);
    }
    dot_const(anchor, coeffs, &basis[r * k..(r + 1) * k]) + mean[r]
}

/// Vertex positions `a_s + Σ_s α + Σ_e δ`, generic over the scalar type.
pub fn vertex_positions<S: Real>(b: &ModelBundle, anchor: S, alpha: &[S], delta: &[S]) -> Vec<V3<S>> {
    let mut coeffs = Vec::with_capacity(alpha.len() + delta.len());
    coeffs.extend_from_slice(alpha);
    coeffs.extend_from_slice(delta);
    let (ks, ke) = (b.k_shape, b.k_expr);
    let mut row = vec![0.0; ks + ke];
    (0..b.n_vertices)
        .map(|i| {
            let mut c = [anchor; 3];
            for (a, ca) in c.iter_mut().enumerate() {
                let r = 3 * i + a;
                row[..ks].copy_from_slice(&b.shape_basis[r * ks..(r + 1) * ks]);
                row[ks..].copy_from_slice(&b.expr_basis[r * ke..(r + 1) * ke]);
                *ca = if coeffs.is_empty() {
                    anchor.lift(b.mean_shape[r])
                } else {
                    dot_const(anchor, &coeffs, &row) + b.mean_shape[r]
                };
            }
            V3::new(c[0], c[1], c[2])
        })
        .collect()
}

/// Per-vertex albedo `mean + basis · β` for one of the two albedo models.
pub fn vertex_albedo<S: Real>(mean: &[f64], basis: &[f64], anchor: S, beta: &[S]) -> Vec<[S; 3]> {
    (0..mean.len() / 3)
        .map(|i| {
            [
                affine_row(anchor, mean, basis, beta, 3 * i),
                affine_row(anchor, mean, basis, beta, 3 * i + 1),
                affine_row(anchor, mean, basis, beta, 3 * i + 2),
            ]
        })
        .collect()
}

/// Area-weighted vertex normals, generic over the scalar type.
pub fn vertex_normals<S: Real>(verts: &[V3<S>], tris: &[[u32; 3]]) -> Vec<V3<S>> {
    let mut acc: Vec<Option<V3<S>>> = vec![None; verts.len()];
    for t in tris {
        let [a, b, c] = t.map(|i| verts[i as usize]);
        // twice the area times the unit normal
        let face = (b - a).cross(c - a);
        for &i in t {
            let slot = &mut acc[i as usize];
            *slot = Some(match *slot {
                Some(s) => s + face,
                None => face,
            });
        }
    }
    acc.into_iter()
        .zip(verts)
        .map(|(n, v)| match n {
            Some(n) => n.normalize(),
            // isolated vertex: any unit vector toward the camera
            None => V3::new(v.x.lift(0.0), v.x.lift(0.0), v.x.lift(-1.0)),
        })
        .collect()
}

/// Per-vertex tangents and bitangents from uv gradients, orthonormalized
/// against `normals`; `b = n × t`.
pub fn tangent_frames(
    verts: &[[f64; 3]],
    normals: &[[f64; 3]],
    uv: &[[f64; 2]],
    tris: &[[u32; 3]],
) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let mut acc = vec![V3::zero(); verts.len()];
    for t in tris {
        let [i0, i1, i2] = t.map(|i| i as usize);
        let p0 = V3::from_array(verts[i0]);
        let dp1 = V3::from_array(verts[i1]) - p0;
        let dp2 = V3::from_array(verts[i2]) - p0;
        let du1 = uv[i1][0] - uv[i0][0];
        let dv1 = uv[i1][1] - uv[i0][1];
        let du2 = uv[i2][0] - uv[i0][0];
        let dv2 = uv[i2][1] - uv[i0][1];
        let det = du1 * dv2 - du2 * dv1;
        if det.abs() < 1e-20 {
            continue;
        }
        let tan = (dp1.scale(dv2) - dp2.scale(dv1)).scale(1.0 / det);
        for i in [i0, i1, i2] {
            acc[i] = acc[i] + tan;
        }
    }
    let mut ts = Vec::with_capacity(verts.len());
    let mut bs = Vec::with_capacity(verts.len());
    for (t, n) in acc.into_iter().zip(normals) {
        let n = V3::from_array(*n);
        let (t, b) = orthonormal_tangent(t, n);
        ts.push(t.to_array());
        bs.push(b.to_array());
    }
    (ts, bs)
}

/// Gram-Schmidt `t` against unit `n`; falls back to an arbitrary basis when
/// `t` is (nearly) parallel to `n`.
pub fn orthonormal_tangent(t: V3<f64>, n: V3<f64>) -> (V3<f64>, V3<f64>) {
    let g = t - n.scale(t.dot(n));
    let len = g.norm();
    let t = if len > 1e-9 * (1.0 + t.norm()) { g.scale(1.0 / len) } else { crate::math::onb(n).0 };
    // one more pass to remove rounding drift
    let t = (t - n.scale(t.dot(n))).normalize();
    (t, n.cross(t))
}

/// Evaluate shape and expression coefficients into a mesh with frames.
pub fn eval_geometry(b: &ModelBundle, alpha: &[f64], delta: &[f64]) -> Result<Mesh> {
    check_len("alpha", b.k_shape, alpha.len())?;
    check_len("delta", b.k_expr, delta.len())?;
    let zeros = vec![0.0; b.k_expr];
    let neutral: Vec<[f64; 3]> = vertex_positions(b, 0.0, alpha, &zeros).into_iter().map(V3::to_array).collect();
    let v = vertex_positions(b, 0.0, alpha, delta);
    let normals: Vec<[f64; 3]> = vertex_normals(&v, &b.triangles).into_iter().map(V3::to_array).collect();
    let vertices: Vec<[f64; 3]> = v.into_iter().map(V3::to_array).collect();
    let (tangents, bitangents) = tangent_frames(&vertices, &normals, &b.uv, &b.triangles);
    Ok(Mesh { vertices, neutral, normals, tangents, bitangents })
}

/// Diffuse and specular per-vertex albedo from the shared coefficient `β`,
/// unclamped, each flattened to `3N`.
pub fn eval_albedos(b: &ModelBundle, beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("beta", b.k_refl, beta.len())?;
    let flat = |mean: &[f64], basis: &[f64]| -> Vec<f64> {
        vertex_albedo(mean, basis, 0.0, beta).into_iter().flatten().collect()
    };
    Ok((flat(&b.mean_diffuse, &b.diffuse_basis), flat(&b.mean_specular, &b.specular_basis)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synthetic::synthetic_bundle;

    #[test]
    fn zero_coefficients_give_the_mean() {
        let b = synthetic_bundle(12);
        let m = eval_geometry(&b, &vec![0.0; b.k_shape], &vec![0.0; b.k_expr]).unwrap();
        for i in 0..b.n_vertices {
            for a in 0..3 {
                assert_eq!(m.vertices[i][a], b.mean_shape[3 * i + a]);
            }
        }
    }

    #[test]
    fn unit_coefficient_selects_a_column() {
        let b = synthetic_bundle(12);
        let mut alpha = vec![0.0; b.k_shape];
        alpha[0] = 1.0;
        let m = eval_geometry(&b, &alpha, &vec![0.0; b.k_expr]).unwrap();
        for r in 0..3 * b.n_vertices {
            let got = m.vertices[r / 3][r % 3] - b.mean_shape[r];
            assert!((got - b.shape_basis[r * b.k_shape]).abs() < 1e-12);
        }
        let (c, s) = eval_albedos(&b, &vec![0.0; b.k_refl]).unwrap();
        assert_eq!(c, b.mean_diffuse);
        assert_eq!(s, b.mean_specular);
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let b = synthetic_bundle(8);
        assert!(eval_geometry(&b, &[0.0; 3], &vec![0.0; b.k_expr]).is_err());
        assert!(eval_albedos(&b, &[0.0; 2]).is_err());
    }

    #[test]
    fn frames_are_orthonormal() {
        let b = synthetic_bundle(16);
        let m = eval_geometry(&b, &vec![0.3; b.k_shape], &vec![0.5; b.k_expr]).unwrap();
        for i in 0..b.n_vertices {
            let f = m.frame(i);
            let p = f.transpose().mul_mat(&f);
            for r in 0..3 {
                let row = p.rows[r].to_array();
                for (c, v) in row.iter().enumerate() {
                    let e = if r == c { 1.0 } else { 0.0 };
                    assert!((v - e).abs() < 1e-9, "vertex {i}");
                }
            }
        }
    }

    #[test]
    fn normals_face_the_camera_at_the_center() {
        let b = synthetic_bundle(17);
        let m = eval_geometry(&b, &vec![0.0; b.k_shape], &vec![0.0; b.k_expr]).unwrap();
        let c = 8 * 17 + 8;
        assert!(m.normals[c][2] < -0.9);
    }
}
