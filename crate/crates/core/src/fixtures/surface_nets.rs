//! Surface nets polygonization of a signed distance function.

use std::collections::HashMap;

/// A signed distance field, negative inside.
pub(crate) trait Sdf: Sync {
    fn eval(&self, p: [f64; 3]) -> f64;

    fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let e = 1e-6;
        let mut g = [0.0; 3];
        for (d, gd) in g.iter_mut().enumerate() {
            let (mut a, mut b) = (p, p);
            a[d] += e;
            b[d] -= e;
            *gd = (self.eval(a) - self.eval(b)) / (2.0 * e);
        }
        g
    }

    /// Newton steps along the gradient onto the zero level set.
    fn project(&self, mut p: [f64; 3]) -> [f64; 3] {
        for _ in 0..6 {
            let f = self.eval(p);
            if f.abs() < 1e-13 {
                break;
            }
            let g = self.gradient(p);
            let g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            if g2 < 1e-20 {
                break;
            }
            for d in 0..3 {
                p[d] -= f * g[d] / g2;
            }
        }
        p
    }
}

pub(crate) struct Capsule {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub r: f64,
}

impl Capsule {
    /// Axis parameter in `[0, 1]` and distance to the axis segment.
    pub fn axis_distance(&self, p: [f64; 3]) -> (f64, f64) {
        let ab = sub(self.b, self.a);
        let ap = sub(p, self.a);
        let len2 = dot(ab, ab);
        let t = if len2 > 0.0 { (dot(ap, ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let c = [self.a[0] + t * ab[0], self.a[1] + t * ab[1], self.a[2] + t * ab[2]];
        (t, norm(sub(p, c)))
    }
}

impl Sdf for Capsule {
    fn eval(&self, p: [f64; 3]) -> f64 {
        self.axis_distance(p).1 - self.r
    }
}

/// Smooth union of several capsules (polynomial smooth minimum).
pub(crate) struct Blend {
    pub parts: Vec<Capsule>,
    pub k: f64,
}

impl Sdf for Blend {
    fn eval(&self, p: [f64; 3]) -> f64 {
        let mut d = f64::INFINITY;
        for part in &self.parts {
            let e = part.eval(p);
            d = if d.is_infinite() { e } else { smin(d, e, self.k) };
        }
        d
    }
}

fn smin(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Polygonizes the zero level set of `sdf` inside `[lo, hi]` on a grid of
/// spacing `h` shifted by `offset`. Returns outward-oriented triangles
/// (quads split along their shorter diagonal) with vertices projected onto
/// the surface.
pub(crate) fn surface_nets(
    sdf: &dyn Sdf,
    lo: [f64; 3],
    hi: [f64; 3],
    h: f64,
    offset: [f64; 3],
) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let origin = [lo[0] - 2.0 * h + offset[0], lo[1] - 2.0 * h + offset[1], lo[2] - 2.0 * h + offset[2]];
    let dims: [usize; 3] = std::array::from_fn(|d| ((hi[d] - origin[d]) / h).ceil() as usize + 3);
    let idx = |i: usize, j: usize, k: usize| (k * dims[1] + j) * dims[0] + i;
    let point =
        |i: usize, j: usize, k: usize| [origin[0] + i as f64 * h, origin[1] + j as f64 * h, origin[2] + k as f64 * h];

    let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = sdf.eval(point(i, j, k));
                // Keep grid samples off the surface so every crossing is strict.
                values[idx(i, j, k)] = if v == 0.0 { 1e-300 } else { v };
            }
        }
    }

    // One vertex per cell with a sign change, at the mean edge crossing.
    let mut cell_vertex: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    const CORNERS: [[usize; 3]; 8] =
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]];
    const EDGES: [[usize; 2]; 12] =
        [[0, 1], [2, 3], [4, 5], [6, 7], [0, 2], [1, 3], [4, 6], [5, 7], [0, 4], [1, 5], [2, 6], [3, 7]];
    for k in 0..dims[2] - 1 {
        for j in 0..dims[1] - 1 {
            for i in 0..dims[0] - 1 {
                let f: [f64; 8] = std::array::from_fn(|c| {
                    let o = CORNERS[c];
                    values[idx(i + o[0], j + o[1], k + o[2])]
                });
                if f.iter().all(|&v| v > 0.0) || f.iter().all(|&v| v < 0.0) {
                    continue;
                }
                let mut acc = [0.0; 3];
                let mut count = 0.0;
                for [a, b] in EDGES {
                    if (f[a] < 0.0) == (f[b] < 0.0) {
                        continue;
                    }
                    let t = f[a] / (f[a] - f[b]);
                    let (pa, pb) = (CORNERS[a], CORNERS[b]);
                    for d in 0..3 {
                        acc[d] += pa[d] as f64 + t * (pb[d] as f64 - pa[d] as f64);
                    }
                    count += 1.0;
                }
                let p = point(i, j, k);
                let local = [p[0] + acc[0] / count * h, p[1] + acc[1] / count * h, p[2] + acc[2] / count * h];
                cell_vertex.insert(idx(i, j, k), vertices.len());
                vertices.push(sdf.project(local));
            }
        }
    }

    // One quad per grid edge with a sign change, joining the four cells
    // around it; oriented so the normal points from inside to outside.
    let mut faces = Vec::new();
    for k in 1..dims[2] - 1 {
        for j in 1..dims[1] - 1 {
            for i in 1..dims[0] - 1 {
                let base = [i, j, k];
                let f0 = values[idx(i, j, k)];
                for d in 0..3 {
                    let mut end = base;
                    end[d] += 1;
                    if end[d] >= dims[d] {
                        continue;
                    }
                    let f1 = values[idx(end[0], end[1], end[2])];
                    if (f0 < 0.0) == (f1 < 0.0) {
                        continue;
                    }
                    let (u, v) = ((d + 1) % 3, (d + 2) % 3);
                    let cell = |du: usize, dv: usize| {
                        let mut c = base;
                        c[u] -= 1 - du;
                        c[v] -= 1 - dv;
                        cell_vertex[&idx(c[0], c[1], c[2])]
                    };
                    let mut quad = [cell(0, 0), cell(1, 0), cell(1, 1), cell(0, 1)];
                    if f0 > 0.0 {
                        quad.reverse();
                    }
                    let d02 = norm(sub(vertices[quad[0]], vertices[quad[2]]));
                    let d13 = norm(sub(vertices[quad[1]], vertices[quad[3]]));
                    if d02 <= d13 {
                        faces.push([quad[0], quad[1], quad[2]]);
                        faces.push([quad[0], quad[2], quad[3]]);
                    } else {
                        faces.push([quad[1], quad[2], quad[3]]);
                        faces.push([quad[1], quad[3], quad[0]]);
                    }
                }
            }
        }
    }
    (vertices, faces)
}

/// True when every edge has exactly two incident faces with opposite
/// orientations and the surface is connected.
pub(crate) fn is_closed_manifold(n: usize, faces: &[[usize; 3]]) -> bool {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for f in faces {
        for e in 0..3 {
            *directed.entry((f[e], f[(e + 1) % 3])).or_default() += 1;
        }
    }
    if directed.iter().any(|(&(a, b), &c)| c != 1 || directed.get(&(b, a)) != Some(&1)) {
        return false;
    }
    // Vertex links must be single fans (no pinch points).
    let mut around: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for f in faces {
        for e in 0..3 {
            around[f[e]].push((f[(e + 1) % 3], f[(e + 2) % 3]));
        }
    }
    for ring in &around {
        if ring.is_empty() {
            return false;
        }
        let next: HashMap<usize, usize> = ring.iter().copied().collect();
        let start = ring[0].0;
        let (mut cur, mut steps) = (start, 0);
        loop {
            cur = next[&cur];
            steps += 1;
            if cur == start || steps > ring.len() {
                break;
            }
        }
        if steps != ring.len() {
            return false;
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for f in faces {
        for e in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[e]));
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).all(|i| find(&mut parent, i) == 0)
}
