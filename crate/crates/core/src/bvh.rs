//! Bounding volume hierarchy over a triangle mesh, for closest-hit and
//! shadow queries in `f64`.

use crate::math::V3;

const LEAF_SIZE: usize = 4;

/// Result of a closest-hit query; `(u, v)` weight vertices 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub tri: u32,
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: [f64::INFINITY; 3], hi: [f64::NEG_INFINITY; 3] }
    }

    fn grow(&mut self, p: [f64; 3]) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(p[k]);
            self.hi[k] = self.hi[k].max(p[k]);
        }
    }

    fn merge(&mut self, o: &Aabb) {
        self.grow(o.lo);
        self.grow(o.hi);
    }

    fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.lo[k] <= o.lo[k] && o.hi[k] <= self.hi[k])
    }

    /// Slab test; `inv` is the componentwise reciprocal direction.
    fn hit(&self, o: [f64; 3], inv: [f64; 3], tmin: f64, tmax: f64) -> bool {
        let (mut t0, mut t1) = (tmin, tmax);
        for k in 0..3 {
            let a = (self.lo[k] - o[k]) * inv[k];
            let b = (self.hi[k] - o[k]) * inv[k];
            // NaN (0 * inf) means the ray lies in the slab plane: keep it
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
        }
        t0 <= t1
    }
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; inner: index of the right child (the
    /// left child follows the node).
    start: u32,
    count: u32,
}

/// Immutable BVH; shared read-only across threads.
#[derive(Clone, Debug)]
pub struct Bvh {
    verts: Vec<[f64; 3]>,
    tris: Vec<[u32; 3]>,
    nodes: Vec<Node>,
    order: Vec<u32>,
}

/// Möller–Trumbore ray/triangle test, two-sided; returns `(t, u, v)`.
pub fn intersect_triangle(
    o: [f64; 3],
    d: [f64; 3],
    p0: [f64; 3],
    p1: [f64; 3],
    p2: [f64; 3],
) -> Option<(f64, f64, f64)> {
    let (o, d) = (V3::from_array(o), V3::from_array(d));
    let p0 = V3::from_array(p0);
    let e1 = V3::from_array(p1) - p0;
    let e2 = V3::from_array(p2) - p0;
    let pv = d.cross(e2);
    let det = e1.dot(pv);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - p0;
    let u = s.dot(pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = d.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(q) * inv, u, v))
}

impl Bvh {
    pub fn build(verts: &[[f64; 3]], tris: &[[u32; 3]]) -> Bvh {
        let mut bvh = Bvh {
            verts: verts.to_vec(),
            tris: tris.to_vec(),
            nodes: Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1),
            order: (0..tris.len() as u32).collect(),
        };
        let centroids: Vec<[f64; 3]> = tris
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| verts[i as usize]);
                [0, 1, 2].map(|k| (a[k] + b[k] + c[k]) / 3.0)
            })
            .collect();
        if !tris.is_empty() {
            bvh.split(0, tris.len(), &centroids);
        }
        bvh
    }

    fn tri_bounds(&self, t: u32) -> Aabb {
        let mut b = Aabb::empty();
        for i in self.tris[t as usize] {
            b.grow(self.verts[i as usize]);
        }
        b
    }

    fn split(&mut self, start: usize, end: usize, centroids: &[[f64; 3]]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            bounds.merge(&self.tri_bounds(t));
            cb.grow(centroids[t as usize]);
        }
        // pad so that hits exactly on a box face are never culled
        let pad = 1e-9 * (0..3).map(|k| bounds.hi[k] - bounds.lo[k]).fold(1.0, f64::max);
        for k in 0..3 {
            bounds.lo[k] -= pad;
            bounds.hi[k] += pad;
        }
        let id = self.nodes.len();
        self.nodes.push(Node { bounds, start: start as u32, count: (end - start) as u32 });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..3).max_by(|&a, &b| (cb.hi[a] - cb.lo[a]).total_cmp(&(cb.hi[b] - cb.lo[b]))).unwrap_or(0);
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
        });
        self.split(start, mid, centroids);
        let right = self.split(mid, end, centroids);
        self.nodes[id].start = right as u32;
        self.nodes[id].count = 0;
        id
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    fn triangle(&self, t: u32) -> [[f64; 3]; 3] {
        self.tris[t as usize].map(|i| self.verts[i as usize])
    }

    /// Visit leaves whose boxes the ray overlaps within `(tmin, tmax)`;
    /// `f` returns a new `tmax` or `None` to stop.
    fn walk(&self, o: [f64; 3], d: [f64; 3], tmin: f64, mut tmax: f64, mut f: impl FnMut(u32, f64) -> Option<f64>) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = d.map(|x| 1.0 / x);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds.hit(o, inv, tmin, tmax) {
                continue;
            }
            if node.count > 0 {
                for k in node.start..node.start + node.count {
                    match f(self.order[k as usize], tmax) {
                        Some(t) => tmax = t,
                        None => return,
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(n + 1);
            }
        }
    }

    /// Nearest hit with `t` in `(tmin, tmax)`; ties go to the lower index.
    pub fn closest_hit(&self, o: [f64; 3], d: [f64; 3], tmin: f64, tmax: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        self.walk(o, d, tmin, tmax, |t, cur| {
            let [a, b, c] = self.triangle(t);
            if let Some((tt, u, v)) = intersect_triangle(o, d, a, b, c) {
                if tt > tmin && tt <= cur {
                    let better = match best {
                        Some(h) => tt < h.t || (tt == h.t && t < h.tri),
                        None => true,
                    };
                    if better {
                        best = Some(Hit { tri: t, t: tt, u, v });
                        return Some(tt);
                    }
                }
            }
            Some(cur)
        });
        best
    }

    /// True iff no triangle is hit with `t` in `(tmin, tmax)`.
    pub fn shadow_query(&self, o: [f64; 3], d: [f64; 3], tmin: f64, tmax: f64) -> bool {
        let mut visible = true;
        self.walk(o, d, tmin, tmax, |t, cur| {
            let [a, b, c] = self.triangle(t);
            match intersect_triangle(o, d, a, b, c) {
                Some((tt, _, _)) if tt > tmin && tt < tmax => {
                    visible = false;
                    None
                }
                _ => Some(cur),
            }
        });
        visible
    }

    /// Structural check: every triangle in exactly one leaf and every box
    /// containing its children.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![0u32; self.tris.len()];
        let mut ok = true;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            if self.nodes.is_empty() {
                break;
            }
            let node = &self.nodes[n];
            if node.count > 0 {
                ok &= node.count as usize <= LEAF_SIZE;
                for k in node.start..node.start + node.count {
                    let t = self.order[k as usize];
                    seen[t as usize] += 1;
                    ok &= node.bounds.contains(&self.tri_bounds(t));
                }
            } else {
                for c in [n + 1, node.start as usize] {
                    ok &= node.bounds.contains(&self.nodes[c].bounds);
                    stack.push(c);
                }
            }
        }
        ok && seen.iter().all(|&c| c == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_mesh() -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
        let mut v = Vec::new();
        let mut t = Vec::new();
        for k in 0..10 {
            let z = k as f64;
            let b = v.len() as u32;
            v.extend([[-1.0, -1.0, z], [1.0, -1.0, z], [1.0, 1.0, z], [-1.0, 1.0, z]]);
            t.push([b, b + 1, b + 2]);
            t.push([b, b + 2, b + 3]);
        }
        (v, t)
    }

    #[test]
    fn closest_hit_picks_nearest_layer() {
        let (v, t) = quad_mesh();
        let bvh = Bvh::build(&v, &t);
        assert!(bvh.check_invariants());
        let h = bvh.closest_hit([0.1, 0.2, -5.0], [0.0, 0.0, 1.0], 0.0, f64::INFINITY).unwrap();
        assert!((h.t - 5.0).abs() < 1e-12);
        assert!(h.tri < 2);
        let h = bvh.closest_hit([0.1, 0.2, 3.5], [0.0, 0.0, 1.0], 0.0, f64::INFINITY).unwrap();
        assert!((h.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shadow_queries() {
        let (v, t) = quad_mesh();
        let bvh = Bvh::build(&v, &t);
        assert!(!bvh.shadow_query([0.0, 0.3, -1.0], [0.0, 0.0, 1.0], 1e-6, f64::INFINITY));
        assert!(bvh.shadow_query([0.0, 0.3, -1.0], [0.0, 0.0, -1.0], 1e-6, f64::INFINITY));
        assert!(bvh.shadow_query([0.0, 0.3, -1.0], [0.0, 0.0, 1.0], 1e-6, 0.5));
        assert!(bvh.shadow_query([5.0, 0.3, -1.0], [0.0, 0.0, 1.0], 1e-6, f64::INFINITY));
    }
}
