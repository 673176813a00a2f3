use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;

/// Statistical face model: means and bases for shape, expression and the
/// two albedos, plus topology and uv atlas.
///
/// Arrays are stored as `f64` but always hold values representable in
/// `f32`, which is the on-disk precision.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub n_vertices: usize,
    pub k_shape: usize,
    pub k_expr: usize,
    pub k_refl: usize,
    pub mean_shape: Vec<f64>,
    /// `3N × K_s`, row-major.
    pub shape_basis: Vec<f64>,
    pub expr_basis: Vec<f64>,
    pub mean_diffuse: Vec<f64>,
    pub diffuse_basis: Vec<f64>,
    pub mean_specular: Vec<f64>,
    pub specular_basis: Vec<f64>,
    pub prior_var_shape: Vec<f64>,
    pub prior_var_refl: Vec<f64>,
    pub triangles: Vec<[u32; 3]>,
    pub uv: Vec<[f64; 2]>,
    pub landmark_vertex_ids: Vec<u32>,
    pub mirror: Vec<u32>,
    pub texture_resolution: usize,
    pub(crate) topo: Topology,
}

/// Derived lookup tables, rebuilt whenever a bundle is constructed.
#[derive(Clone, Debug, Default)]
pub(crate) struct Topology {
    /// First-ring neighbours of every vertex, sorted.
    pub neighbors: Vec<Vec<u32>>,
    /// For every uv texel, the triangle covering its center and barycentrics.
    pub texel_hits: Vec<Option<(u32, [f64; 3])>>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct ArrayEntry {
    file: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct Manifest {
    format: String,
    n_vertices: usize,
    n_triangles: usize,
    k_shape: usize,
    k_expr: usize,
    k_refl: usize,
    texture_resolution: usize,
    arrays: BTreeMap<String, ArrayEntry>,
}

const FORMAT: &str = "facefit-bundle-1";

fn mismatch(what: &str, expected: usize, found: usize) -> Error {
    Error::DimensionMismatch { what: what.to_string(), expected, found }
}

fn round32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

impl ModelBundle {
    /// Validate the arrays and build the derived tables.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(mut b: ModelBundle) -> Result<ModelBundle> {
        for v in [
            &mut b.mean_shape,
            &mut b.shape_basis,
            &mut b.expr_basis,
            &mut b.mean_diffuse,
            &mut b.diffuse_basis,
            &mut b.mean_specular,
            &mut b.specular_basis,
            &mut b.prior_var_shape,
            &mut b.prior_var_refl,
        ] {
            round32(v);
        }
        for uv in &mut b.uv {
            uv[0] = uv[0] as f32 as f64;
            uv[1] = uv[1] as f32 as f64;
        }
        b.validate()?;
        b.topo = Topology::build(&b);
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let n3 = 3 * self.n_vertices;
        let checks = [
            ("mean_shape", n3, self.mean_shape.len()),
            ("shape_basis", n3 * self.k_shape, self.shape_basis.len()),
            ("expr_basis", n3 * self.k_expr, self.expr_basis.len()),
            ("mean_diffuse", n3, self.mean_diffuse.len()),
            ("diffuse_basis", n3 * self.k_refl, self.diffuse_basis.len()),
            ("mean_specular", n3, self.mean_specular.len()),
            ("specular_basis", n3 * self.k_refl, self.specular_basis.len()),
            ("prior_var_shape", self.k_shape, self.prior_var_shape.len()),
            ("prior_var_refl", self.k_refl, self.prior_var_refl.len()),
            ("uv", self.n_vertices, self.uv.len()),
            ("mirror", self.n_vertices, self.mirror.len()),
            ("landmarks", LANDMARK_COUNT, self.landmark_vertex_ids.len()),
        ];
        for (what, e, f) in checks {
            if e != f {
                return Err(mismatch(what, e, f));
            }
        }
        let n = self.n_vertices as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidBundle(format!("triangle {t:?} references a vertex >= {n}")));
        }
        if self.landmark_vertex_ids.iter().any(|&i| i >= n) {
            return Err(Error::InvalidBundle("landmark vertex id out of range".into()));
        }
        for (i, &m) in self.mirror.iter().enumerate() {
            if m >= n || self.mirror[m as usize] as usize != i {
                return Err(Error::MirrorNotInvolution(i));
            }
        }
        if self.uv.iter().any(|uv| !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1])) {
            return Err(Error::InvalidBundle("uv coordinate outside [0,1]".into()));
        }
        if self.texture_resolution == 0 {
            return Err(Error::InvalidBundle("texture_resolution is zero".into()));
        }
        if self.prior_var_shape.iter().chain(&self.prior_var_refl).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidBundle("prior variances must be positive".into()));
        }
        Ok(())
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.topo.neighbors[i]
    }

    /// Triangle and barycentrics under the center of uv texel `t`.
    pub fn texel_hit(&self, t: usize) -> Option<(u32, [f64; 3])> {
        self.topo.texel_hits[t]
    }

    /// Texel mirrored across `u = 0.5`.
    pub fn texel_mirror(&self, t: usize) -> usize {
        let r = self.texture_resolution;
        let (i, j) = (t % r, t / r);
        j * r + (r - 1 - i)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n3 = 3 * self.n_vertices;
        let mut arrays = BTreeMap::new();
        let mut put_f32 = |name: &str, data: &[f64], shape: Vec<usize>| -> Result<()> {
            let bytes: Vec<u8> = data.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
            let file = format!("{name}.f32");
            fs::write(dir.join(&file), bytes).map_err(|e| Error::io(dir.join(&file), e))?;
            arrays.insert(name.to_string(), ArrayEntry { file, dtype: "f32".into(), shape });
            Ok(())
        };
        put_f32("mean_shape", &self.mean_shape, vec![n3])?;
        put_f32("shape_basis", &self.shape_basis, vec![n3, self.k_shape])?;
        put_f32("expr_basis", &self.expr_basis, vec![n3, self.k_expr])?;
        put_f32("mean_diffuse", &self.mean_diffuse, vec![n3])?;
        put_f32("diffuse_basis", &self.diffuse_basis, vec![n3, self.k_refl])?;
        put_f32("mean_specular", &self.mean_specular, vec![n3])?;
        put_f32("specular_basis", &self.specular_basis, vec![n3, self.k_refl])?;
        put_f32("prior_var_shape", &self.prior_var_shape, vec![self.k_shape])?;
        put_f32("prior_var_refl", &self.prior_var_refl, vec![self.k_refl])?;
        let uv: Vec<f64> = self.uv.iter().flatten().copied().collect();
        put_f32("uv", &uv, vec![self.n_vertices, 2])?;
        let mut put_int = |name: &str, dtype: &str, data: Vec<u8>, shape: Vec<usize>| -> Result<()> {
            let file = format!("{name}.{dtype}");
            fs::write(dir.join(&file), data).map_err(|e| Error::io(dir.join(&file), e))?;
            arrays.insert(name.to_string(), ArrayEntry { file, dtype: dtype.into(), shape });
            Ok(())
        };
        let tris: Vec<u8> = self.triangles.iter().flatten().flat_map(|i| i.to_le_bytes()).collect();
        put_int("triangles", "u32", tris, vec![self.triangles.len(), 3])?;
        let lm: Vec<u8> = self.landmark_vertex_ids.iter().flat_map(|&i| (i as i32).to_le_bytes()).collect();
        put_int("landmarks", "i32", lm, vec![LANDMARK_COUNT])?;
        let mirror: Vec<u8> = self.mirror.iter().flat_map(|&i| (i as i32).to_le_bytes()).collect();
        put_int("mirror", "i32", mirror, vec![self.n_vertices])?;
        let manifest = Manifest {
            format: FORMAT.into(),
            n_vertices: self.n_vertices,
            n_triangles: self.triangles.len(),
            k_shape: self.k_shape,
            k_expr: self.k_expr,
            k_refl: self.k_refl,
            texture_resolution: self.texture_resolution,
            arrays,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Load and validate a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(Error::MissingFile(mpath));
    }
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.format != FORMAT {
        return Err(Error::format(&mpath, format!("unknown format {:?}", m.format)));
    }
    let n3 = 3 * m.n_vertices;
    let read = |name: &str, expected_shape: &[usize], dtype: &str| -> Result<Vec<u8>> {
        let entry = m.arrays.get(name).ok_or_else(|| Error::InvalidBundle(format!("manifest lacks array {name}")))?;
        if entry.dtype != dtype {
            return Err(Error::InvalidBundle(format!("{name}: dtype {} (expected {dtype})", entry.dtype)));
        }
        if entry.shape.len() != expected_shape.len() {
            return Err(mismatch(&format!("{name} rank"), expected_shape.len(), entry.shape.len()));
        }
        for (axis, (&e, &f)) in expected_shape.iter().zip(&entry.shape).enumerate() {
            if e != f {
                return Err(mismatch(&format!("{name} axis {axis}"), e, f));
            }
        }
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let count: usize = expected_shape.iter().product();
        if bytes.len() != count * 4 {
            return Err(mismatch(&format!("{name} element count"), count, bytes.len() / 4));
        }
        Ok(bytes)
    };
    let f32s = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        Ok(read(name, shape, "f32")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    };
    let ints = |name: &str, shape: &[usize], dtype: &str| -> Result<Vec<i64>> {
        Ok(read(name, shape, dtype)?
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                if dtype == "u32" {
                    u32::from_le_bytes(b) as i64
                } else {
                    i32::from_le_bytes(b) as i64
                }
            })
            .collect())
    };
    let to_u32 = |name: &str, v: Vec<i64>| -> Result<Vec<u32>> {
        v.into_iter()
            .map(|x| u32::try_from(x).map_err(|_| Error::InvalidBundle(format!("{name}: negative index {x}"))))
            .collect()
    };
    let uv = f32s("uv", &[m.n_vertices, 2])?;
    let tris = to_u32("triangles", ints("triangles", &[m.n_triangles, 3], "u32")?)?;
    let b = ModelBundle {
        n_vertices: m.n_vertices,
        k_shape: m.k_shape,
        k_expr: m.k_expr,
        k_refl: m.k_refl,
        mean_shape: f32s("mean_shape", &[n3])?,
        shape_basis: f32s("shape_basis", &[n3, m.k_shape])?,
        expr_basis: f32s("expr_basis", &[n3, m.k_expr])?,
        mean_diffuse: f32s("mean_diffuse", &[n3])?,
        diffuse_basis: f32s("diffuse_basis", &[n3, m.k_refl])?,
        mean_specular: f32s("mean_specular", &[n3])?,
        specular_basis: f32s("specular_basis", &[n3, m.k_refl])?,
        prior_var_shape: f32s("prior_var_shape", &[m.k_shape])?,
        prior_var_refl: f32s("prior_var_refl", &[m.k_refl])?,
        triangles: tris.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        uv: uv.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        landmark_vertex_ids: to_u32("landmarks", ints("landmarks", &[LANDMARK_COUNT], "i32")?)?,
        mirror: to_u32("mirror", ints("mirror", &[m.n_vertices], "i32")?)?,
        texture_resolution: m.texture_resolution,
        topo: Topology::default(),
    };
    ModelBundle::from_parts(b)
}

impl Topology {
    fn build(b: &ModelBundle) -> Topology {
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); b.n_vertices];
        for t in &b.triangles {
            for k in 0..3 {
                let (a, c) = (t[k], t[(k + 1) % 3]);
                neighbors[a as usize].push(c);
                neighbors[c as usize].push(a);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        Topology { neighbors, texel_hits: rasterize_uv(b) }
    }
}

/// For each texel center, the covering triangle in uv space.
///
/// Texels whose center falls outside every triangle take the nearest point
/// of the closest triangle so that every texel of a fully covered atlas
/// maps somewhere; texels farther than one texel from any triangle are left
/// empty.
fn rasterize_uv(b: &ModelBundle) -> Vec<Option<(u32, [f64; 3])>> {
    let r = b.texture_resolution;
    let rf = r as f64;
    let mut out: Vec<Option<(u32, [f64; 3])>> = vec![None; r * r];
    let mut best = vec![f64::INFINITY; r * r];
    for (ti, t) in b.triangles.iter().enumerate() {
        let p = t.map(|i| b.uv[i as usize]);
        let lo_u = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let hi_u = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_v = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let hi_v = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let i0 = ((lo_u * rf - 1.5).floor().max(0.0)) as usize;
        let i1 = ((hi_u * rf + 0.5).ceil() as usize).min(r - 1);
        let j0 = ((lo_v * rf - 1.5).floor().max(0.0)) as usize;
        let j1 = ((hi_v * rf + 0.5).ceil() as usize).min(r - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let q = [(i as f64 + 0.5) / rf, (j as f64 + 0.5) / rf];
                let (bary, dist) = closest_bary(p, q);
                let idx = j * r + i;
                if dist < best[idx] && dist <= 1.0 / rf {
                    best[idx] = dist;
                    out[idx] = Some((ti as u32, bary));
                }
            }
        }
    }
    out
}

/// Barycentrics of the point of triangle `p` closest to `q`, and the distance.
fn closest_bary(p: [[f64; 2]; 3], q: [f64; 2]) -> ([f64; 3], f64) {
    let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let d = [q[0] - p[0][0], q[1] - p[0][1]];
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    if det.abs() < 1e-300 {
        return ([1.0, 0.0, 0.0], f64::INFINITY);
    }
    let b1 = (d[0] * e2[1] - d[1] * e2[0]) / det;
    let b2 = (e1[0] * d[1] - e1[1] * d[0]) / det;
    let b0 = 1.0 - b1 - b2;
    if b0 >= 0.0 && b1 >= 0.0 && b2 >= 0.0 {
        return ([b0, b1, b2], 0.0);
    }
    // clamp to the nearest edge
    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    for k in 0..3 {
        let a = p[k];
        let c = p[(k + 1) % 3];
        let ac = [c[0] - a[0], c[1] - a[1]];
        let len2 = ac[0] * ac[0] + ac[1] * ac[1];
        let s = if len2 > 0.0 { (((q[0] - a[0]) * ac[0] + (q[1] - a[1]) * ac[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let x = [a[0] + s * ac[0] - q[0], a[1] + s * ac[1] - q[1]];
        let dist = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if dist < best.1 {
            let mut bary = [0.0; 3];
            bary[k] = 1.0 - s;
            bary[(k + 1) % 3] = s;
            best = (bary, dist);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synthetic::synthetic_bundle;

    #[test]
    fn save_load_roundtrip_is_bit_identical() {
        let b = synthetic_bundle(12);
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let c = load_bundle(dir.path()).unwrap();
        assert_eq!(b.mean_shape, c.mean_shape);
        assert_eq!(b.shape_basis, c.shape_basis);
        assert_eq!(b.expr_basis, c.expr_basis);
        assert_eq!(b.diffuse_basis, c.diffuse_basis);
        assert_eq!(b.specular_basis, c.specular_basis);
        assert_eq!(b.uv, c.uv);
        assert_eq!(b.triangles, c.triangles);
        assert_eq!(b.mirror, c.mirror);
        assert_eq!(b.landmark_vertex_ids, c.landmark_vertex_ids);
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn column_count_mismatch() {
        let b = synthetic_bundle(10);
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let mpath = dir.path().join("manifest.json");
        let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m["arrays"]["shape_basis"]["shape"][1] = 7.into();
        fs::write(&mpath, m.to_string()).unwrap();
        match load_bundle(dir.path()) {
            Err(Error::DimensionMismatch { expected, found, .. }) => {
                assert_eq!((expected, found), (8, 7))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn broken_mirror() {
        let mut b = synthetic_bundle(10);
        b.mirror[3] = 5;
        assert!(matches!(ModelBundle::from_parts(b), Err(Error::MirrorNotInvolution(_))));
    }

    #[test]
    fn every_texel_is_covered_on_the_grid_atlas() {
        let b = synthetic_bundle(16);
        let r = b.texture_resolution;
        for t in 0..r * r {
            let (tri, bary) = b.texel_hit(t).expect("covered");
            assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(bary.iter().all(|&x| x >= -1e-12));
            assert!((tri as usize) < b.n_triangles());
        }
    }
}
