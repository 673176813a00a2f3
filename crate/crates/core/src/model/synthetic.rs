//! Procedural face-like bundle: an ellipsoidal cap with Gaussian features,
//! bilaterally symmetric, on a regular uv grid.

use super::bundle::{ModelBundle, Topology, LANDMARK_COUNT};

pub const DEFAULT_GRID: usize = 48;
pub const K_SHAPE: usize = 8;
pub const K_EXPR: usize = 6;
pub const K_REFL: usize = 8;
pub const TEXTURE_RESOLUTION: usize = 64;

const RADII: [f64; 3] = [75.0, 95.0, 85.0];

fn gauss(u: f64, v: f64, cu: f64, cv: f64, su: f64, sv: f64) -> f64 {
    let a = (u - cu) / su;
    let b = (v - cv) / sv;
    (-0.5 * (a * a + b * b)).exp()
}

/// Same bump placed at `cu` and its mirror `1 - cu`.
fn pair(u: f64, v: f64, cu: f64, cv: f64, su: f64, sv: f64) -> f64 {
    gauss(u, v, cu, cv, su, sv) + gauss(u, v, 1.0 - cu, cv, su, sv)
}

fn angles(u: f64, v: f64) -> (f64, f64) {
    ((u - 0.5) * 2.4, (v - 0.5) * 2.0)
}

fn ellipsoid(u: f64, v: f64) -> [f64; 3] {
    let (phi, psi) = angles(u, v);
    let [a, b, c] = RADII;
    [a * phi.sin() * psi.cos(), b * psi.sin(), -c * phi.cos() * psi.cos()]
}

fn outward(p: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = RADII;
    let g = [p[0] / (a * a), p[1] / (b * b), p[2] / (c * c)];
    let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    [g[0] / n, g[1] / n, g[2] / n]
}

/// Relief of the mean face along the outward normal, in millimeters.
fn relief(u: f64, v: f64) -> f64 {
    25.0 * gauss(u, v, 0.5, 0.55, 0.045, 0.1) - 8.0 * pair(u, v, 0.35, 0.42, 0.06, 0.05)
        + 4.0 * pair(u, v, 0.35, 0.33, 0.07, 0.025)
        + 5.0 * gauss(u, v, 0.5, 0.76, 0.08, 0.03)
        + 6.0 * gauss(u, v, 0.5, 0.93, 0.1, 0.05)
        + 3.0 * pair(u, v, 0.28, 0.62, 0.1, 0.1)
}

/// A single vector mode evaluated at `(u, v)` and base point `p` with normal `n`.
type Mode = fn(f64, f64, [f64; 3], [f64; 3]) -> [f64; 3];

fn along(n: [f64; 3], s: f64) -> [f64; 3] {
    [n[0] * s, n[1] * s, n[2] * s]
}

const SHAPE_MODES: [Mode; K_SHAPE] = [
    |_, _, p, _| [0.08 * p[0], 0.0, 0.0],
    |_, _, p, _| [0.0, 0.07 * p[1], 0.0],
    |_, _, p, _| [0.0, 0.0, 0.08 * (p[2] + 40.0)],
    |u, v, _, n| along(n, 7.0 * gauss(u, v, 0.5, 0.55, 0.05, 0.11)),
    |u, v, _, _| {
        let g = gauss(u, v, 0.5, 0.92, 0.12, 0.06);
        [0.0, 4.0 * g, -6.0 * g]
    },
    |u, v, _, n| along(n, 5.0 * pair(u, v, 0.27, 0.62, 0.1, 0.1)),
    |_, v, _, _| [0.0, 0.0, -6.0 * (1.0 - v) * (1.0 - v)],
    |_, v, p, _| [0.1 * p[0] * v * v, 0.0, 0.0],
];

const EXPR_MODES: [Mode; K_EXPR] = [
    // jaw open
    |u, v, _, _| {
        let w = ((v - 0.72) / 0.2).clamp(0.0, 1.0) * gauss(u, v, 0.5, 0.85, 0.2, 0.3);
        [0.0, 9.0 * w, 2.0 * w]
    },
    // smile
    |u, v, _, _| {
        let l = gauss(u, v, 0.42, 0.75, 0.05, 0.04);
        let r = gauss(u, v, 0.58, 0.75, 0.05, 0.04);
        [3.0 * (r - l), -4.0 * (l + r), 0.0]
    },
    // brow raise
    |u, v, _, _| [0.0, -5.0 * pair(u, v, 0.35, 0.32, 0.08, 0.04), 0.0],
    // cheek puff
    |u, v, _, n| along(n, 6.0 * pair(u, v, 0.3, 0.68, 0.08, 0.08)),
    // lips pucker
    |u, v, _, _| [0.0, 0.0, -5.0 * gauss(u, v, 0.5, 0.76, 0.06, 0.04)],
    // eye squint
    |u, v, _, _| [0.0, 2.0 * pair(u, v, 0.35, 0.39, 0.05, 0.02), 0.0],
];

fn skin(u: f64, v: f64) -> [f64; 3] {
    let lips = gauss(u, v, 0.5, 0.76, 0.07, 0.025);
    let brows = pair(u, v, 0.35, 0.33, 0.07, 0.018);
    let sockets = pair(u, v, 0.35, 0.42, 0.05, 0.03);
    let mut c = [0.72, 0.53, 0.43];
    let lip_c = [0.62, 0.30, 0.30];
    let brow_c = [0.28, 0.19, 0.14];
    for k in 0..3 {
        c[k] += (lip_c[k] - c[k]) * lips.min(1.0);
        c[k] += (brow_c[k] - c[k]) * brows.min(1.0);
        c[k] *= 1.0 - 0.15 * sockets.min(1.0);
    }
    c
}

type ColorMode = fn(f64, f64) -> [f64; 3];

const DIFFUSE_MODES: [ColorMode; K_REFL] = [
    |_, _| [0.05, 0.05, 0.05],
    |_, _| [0.04, -0.01, -0.015],
    |_, _| [0.02, 0.02, -0.03],
    |u, v| {
        let g = gauss(u, v, 0.5, 0.76, 0.07, 0.025);
        [0.06 * g, -0.03 * g, -0.02 * g]
    },
    |u, v| {
        let g = pair(u, v, 0.35, 0.33, 0.07, 0.018);
        [-0.06 * g, -0.05 * g, -0.04 * g]
    },
    |u, v| {
        let g = pair(u, v, 0.27, 0.62, 0.09, 0.08);
        [0.04 * g, -0.005 * g, 0.0]
    },
    |_, v| [0.03 * (0.5 - v), 0.025 * (0.5 - v), 0.02 * (0.5 - v)],
    |u, _| {
        let d = (u - 0.5) * (u - 0.5);
        [-0.08 * d, -0.07 * d, -0.06 * d]
    },
];

fn shine(u: f64, v: f64) -> f64 {
    0.08 + 0.12 * gauss(u, v, 0.5, 0.55, 0.06, 0.12) + 0.08 * gauss(u, v, 0.5, 0.15, 0.2, 0.1)
}

const SPECULAR_MODES: [ColorMode; K_REFL] = [
    |_, _| [0.01, 0.01, 0.01],
    |_, _| [0.0, 0.0, 0.0],
    |_, _| [0.005, 0.005, 0.005],
    |u, v| {
        let g = gauss(u, v, 0.5, 0.76, 0.07, 0.025);
        [0.02 * g; 3]
    },
    |_, _| [0.0, 0.0, 0.0],
    |u, v| [0.01 * pair(u, v, 0.27, 0.62, 0.09, 0.08); 3],
    |_, v| [0.02 * (0.5 - v); 3],
    |u, v| [0.02 * gauss(u, v, 0.5, 0.55, 0.06, 0.12); 3],
];

/// Named landmark positions in uv, in the usual 68-point order.
fn landmark_uvs() -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(LANDMARK_COUNT);
    // jaw 0..16
    for k in 0..17 {
        let t = k as f64 / 16.0;
        let a = (t - 0.5) * std::f64::consts::PI;
        pts.push([0.5 + 0.4 * a.sin(), 0.5 + 0.44 * a.cos()]);
    }
    // brows 17..26
    for u0 in [0.22, 0.56] {
        for k in 0..5 {
            let t = k as f64 / 4.0;
            let arch = 0.035 * (1.0 - (2.0 * t - 1.0).powi(2));
            pts.push([u0 + 0.22 * t, 0.33 - arch]);
        }
    }
    // nose bridge 27..30
    for k in 0..4 {
        pts.push([0.5, 0.40 + 0.055 * k as f64]);
    }
    // nostrils 31..35
    for k in 0..5 {
        let t = k as f64 / 4.0;
        pts.push([0.44 + 0.12 * t, 0.64 + 0.015 * (1.0 - (2.0 * t - 1.0).powi(2))]);
    }
    // eyes 36..47
    for cu in [0.35, 0.65] {
        let ring = [(-1.0, 0.0), (-0.5, -0.6), (0.5, -0.6), (1.0, 0.0), (0.5, 0.6), (-0.5, 0.6)];
        for (du, dv) in ring {
            pts.push([cu + 0.07 * du, 0.42 + 0.03 * dv]);
        }
    }
    // outer mouth 48..59
    for k in 0..12 {
        let a = k as f64 / 12.0 * 2.0 * std::f64::consts::PI;
        pts.push([0.5 - 0.12 * a.cos(), 0.77 - 0.04 * a.sin()]);
    }
    // inner mouth 60..67
    for k in 0..8 {
        let a = k as f64 / 8.0 * 2.0 * std::f64::consts::PI;
        pts.push([0.5 - 0.08 * a.cos(), 0.77 - 0.015 * a.sin()]);
    }
    pts
}

/// Build the synthetic bundle on a `grid × grid` vertex lattice.
pub fn synthetic_bundle(grid: usize) -> ModelBundle {
    assert!(grid >= 4, "grid must be at least 4");
    let n = grid * grid;
    let coord = |k: usize| k as f64 / (grid - 1) as f64;
    let mut uv = Vec::with_capacity(n);
    let mut mean_shape = vec![0.0; 3 * n];
    let mut shape_basis = vec![0.0; 3 * n * K_SHAPE];
    let mut expr_basis = vec![0.0; 3 * n * K_EXPR];
    let mut mean_diffuse = vec![0.0; 3 * n];
    let mut diffuse_basis = vec![0.0; 3 * n * K_REFL];
    let mut mean_specular = vec![0.0; 3 * n];
    let mut specular_basis = vec![0.0; 3 * n * K_REFL];
    let mut mirror = Vec::with_capacity(n);
    for j in 0..grid {
        for i in 0..grid {
            let idx = j * grid + i;
            // mirrored vertices are evaluated at exactly mirrored u so that
            // symmetry holds bit for bit
            let (u, flip) = if 2 * i + 1 > grid { (coord(grid - 1 - i), true) } else { (coord(i), false) };
            let v = coord(j);
            let sx = if flip { -1.0 } else { 1.0 };
            let ur = if flip { 1.0 - u } else { u };
            uv.push([ur, v]);
            mirror.push((j * grid + (grid - 1 - i)) as u32);
            let e = ellipsoid(u, v);
            let nrm = outward(e);
            let h = relief(u, v);
            let p = [e[0] + nrm[0] * h, e[1] + nrm[1] * h, e[2] + nrm[2] * h];
            let pm = [sx * p[0], p[1], p[2]];
            mean_shape[3 * idx..3 * idx + 3].copy_from_slice(&pm);
            for (k, mode) in SHAPE_MODES.iter().enumerate() {
                let d = mode(u, v, p, nrm);
                let d = [sx * d[0], d[1], d[2]];
                for a in 0..3 {
                    shape_basis[(3 * idx + a) * K_SHAPE + k] = d[a];
                }
            }
            for (k, mode) in EXPR_MODES.iter().enumerate() {
                let d = mode(u, v, p, nrm);
                let d = [sx * d[0], d[1], d[2]];
                for a in 0..3 {
                    expr_basis[(3 * idx + a) * K_EXPR + k] = d[a];
                }
            }
            let c = skin(u, v);
            let s = shine(u, v);
            for a in 0..3 {
                mean_diffuse[3 * idx + a] = c[a];
                mean_specular[3 * idx + a] = s;
            }
            for (k, (dm, sm)) in DIFFUSE_MODES.iter().zip(SPECULAR_MODES.iter()).enumerate() {
                let dc = dm(u, v);
                let sc = sm(u, v);
                for a in 0..3 {
                    diffuse_basis[(3 * idx + a) * K_REFL + k] = dc[a];
                    specular_basis[(3 * idx + a) * K_REFL + k] = sc[a];
                }
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * (grid - 1) * (grid - 1));
    for j in 0..grid - 1 {
        for i in 0..grid - 1 {
            let a = (j * grid + i) as u32;
            let b = a + 1;
            let c = a + grid as u32;
            let d = c + 1;
            // wound so that geometric normals face -z, toward the camera
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    let landmark_vertex_ids = landmark_uvs()
        .into_iter()
        .map(|[u, v]| {
            let i = (u * (grid - 1) as f64).round() as usize;
            let j = (v.clamp(0.0, 1.0) * (grid - 1) as f64).round() as usize;
            (j.min(grid - 1) * grid + i.min(grid - 1)) as u32
        })
        .collect();
    ModelBundle::from_parts(ModelBundle {
        n_vertices: n,
        k_shape: K_SHAPE,
        k_expr: K_EXPR,
        k_refl: K_REFL,
        mean_shape,
        shape_basis,
        expr_basis,
        mean_diffuse,
        diffuse_basis,
        mean_specular,
        specular_basis,
        prior_var_shape: vec![1.0; K_SHAPE],
        prior_var_refl: vec![1.0; K_REFL],
        triangles,
        uv,
        landmark_vertex_ids,
        mirror,
        texture_resolution: TEXTURE_RESOLUTION,
        topo: Topology::default(),
    })
    .expect("synthetic bundle is valid")
}

/// Bundle around a fixed mesh: constant albedos, a single all-zero mode in
/// every basis, identity mirror and all landmarks on vertex 0.
pub fn mesh_bundle(
    verts: &[[f64; 3]],
    triangles: Vec<[u32; 3]>,
    uv: Vec<[f64; 2]>,
    diffuse: [f64; 3],
    specular: f64,
    texture_resolution: usize,
) -> ModelBundle {
    let n = verts.len();
    ModelBundle::from_parts(ModelBundle {
        n_vertices: n,
        k_shape: 1,
        k_expr: 1,
        k_refl: 1,
        mean_shape: verts.as_flattened().to_vec(),
        shape_basis: vec![0.0; 3 * n],
        expr_basis: vec![0.0; 3 * n],
        mean_diffuse: diffuse.repeat(n),
        diffuse_basis: vec![0.0; 3 * n],
        mean_specular: vec![specular; 3 * n],
        specular_basis: vec![0.0; 3 * n],
        prior_var_shape: vec![1.0],
        prior_var_refl: vec![1.0],
        triangles,
        uv,
        landmark_vertex_ids: vec![0; crate::model::LANDMARK_COUNT],
        mirror: (0..n as u32).collect(),
        texture_resolution,
        topo: Default::default(),
    })
    .expect("fixture mesh is valid")
}

/// Quads of a `grid × grid` lattice, wound like the face so normals of a
/// surface parameterized like it face `-z`.
fn lattice_triangles(grid: usize, offset: u32) -> Vec<[u32; 3]> {
    let mut tris = Vec::with_capacity(2 * (grid - 1) * (grid - 1));
    for j in 0..grid - 1 {
        for i in 0..grid - 1 {
            let a = offset + (j * grid + i) as u32;
            let b = a + 1;
            let c = a + grid as u32;
            let d = c + 1;
            tris.push([a, c, b]);
            tris.push([b, c, d]);
        }
    }
    tris
}

/// Convex spherical cap of `radius` centered at the origin and facing the
/// camera, spanning `span` radians in both directions.
pub fn sphere_cap_bundle(radius: f64, grid: usize, span: f64, diffuse: [f64; 3], specular: f64) -> ModelBundle {
    let coord = |k: usize| k as f64 / (grid - 1) as f64;
    let mut verts = Vec::with_capacity(grid * grid);
    let mut uv = Vec::with_capacity(grid * grid);
    for j in 0..grid {
        for i in 0..grid {
            let (u, v) = (coord(i), coord(j));
            let (phi, psi) = ((u - 0.5) * span, (v - 0.5) * span);
            verts.push([radius * phi.sin() * psi.cos(), radius * psi.sin(), -radius * phi.cos() * psi.cos()]);
            uv.push([u, v]);
        }
    }
    mesh_bundle(&verts, lattice_triangles(grid, 0), uv, diffuse, specular, TEXTURE_RESOLUTION)
}

/// A square floor in the `z = 0` plane facing the camera with a thin wall
/// standing on it along `x = wall_x`, reaching `height` toward the camera.
pub fn blocker_bundle(grid: usize, half: f64, wall_x: f64, height: f64) -> ModelBundle {
    let coord = |k: usize| k as f64 / (grid - 1) as f64;
    let mut verts = Vec::with_capacity(2 * grid * grid);
    let mut uv = Vec::with_capacity(2 * grid * grid);
    for j in 0..grid {
        for i in 0..grid {
            let (u, v) = (coord(i), coord(j));
            verts.push([(2.0 * u - 1.0) * half, (2.0 * v - 1.0) * half, 0.0]);
            uv.push([0.5 * u, v]);
        }
    }
    for j in 0..grid {
        for i in 0..grid {
            let (u, v) = (coord(i), coord(j));
            verts.push([wall_x, (2.0 * v - 1.0) * half, -u * height]);
            uv.push([0.5 + 0.5 * u, v]);
        }
    }
    let mut tris = lattice_triangles(grid, 0);
    tris.extend(lattice_triangles(grid, (grid * grid) as u32));
    mesh_bundle(&verts, tris, uv, [0.8; 3], 0.0, TEXTURE_RESOLUTION)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let b = synthetic_bundle(DEFAULT_GRID);
        assert_eq!(b.n_vertices, 2304);
        assert_eq!(b.n_triangles(), 4418);
        assert_eq!(b.mean_shape.len(), 3 * 2304);
        assert_eq!(b.landmark_vertex_ids.len(), 68);
    }

    #[test]
    fn bilateral_symmetry() {
        let b = synthetic_bundle(DEFAULT_GRID);
        for i in 0..b.n_vertices {
            let m = b.mirror[i] as usize;
            assert_eq!(b.mirror[m] as usize, i);
            assert_eq!(b.mean_shape[3 * i], -b.mean_shape[3 * m]);
            assert_eq!(b.mean_shape[3 * i + 1], b.mean_shape[3 * m + 1]);
            assert_eq!(b.mean_shape[3 * i + 2], b.mean_shape[3 * m + 2]);
            assert_eq!(b.mean_diffuse[3 * i], b.mean_diffuse[3 * m]);
            for k in 0..K_SHAPE {
                assert_eq!(b.shape_basis[3 * i * K_SHAPE + k], -b.shape_basis[3 * m * K_SHAPE + k]);
            }
        }
    }

    #[test]
    fn faces_the_camera() {
        let b = synthetic_bundle(16);
        let t = b.triangles[b.n_triangles() / 2];
        let p: Vec<[f64; 3]> = t
            .iter()
            .map(|&i| {
                let i = i as usize;
                [b.mean_shape[3 * i], b.mean_shape[3 * i + 1], b.mean_shape[3 * i + 2]]
            })
            .collect();
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        assert!(e1[0] * e2[1] - e1[1] * e2[0] < 0.0);
    }
}
