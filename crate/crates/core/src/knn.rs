//! Exact nearest-neighbour search over rows of a dense matrix.

use faer::Mat;
use rayon::prelude::*;

const LEAF_SIZE: usize = 12;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// A kd-tree over `n` points of arbitrary dimension.
///
/// Queries return the point of smallest squared distance; among points at
/// exactly the same distance the smallest index wins, so results do not
/// depend on the tree layout.
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    root: Node,
}

impl KdTree {
    /// Builds a tree from the rows of `m`.
    pub fn from_rows(m: &Mat<f64>) -> Self {
        let (n, d) = (m.nrows(), m.ncols());
        let mut points = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                points.push(m[(i, j)]);
            }
        }
        Self::from_flat(points, d)
    }

    pub fn from_points(pts: &[[f64; 3]]) -> Self {
        Self::from_flat(pts.iter().flatten().copied().collect(), 3)
    }

    fn from_flat(points: Vec<f64>, dim: usize) -> Self {
        let n = points.len().checked_div(dim).unwrap_or(0);
        let mut order: Vec<usize> = (0..n).collect();
        let root = build(&points, dim, &mut order, 0, n);
        KdTree { dim, points, order, root }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest point to `q` as `(index, squared distance)`. `hint` seeds the
    /// search with a likely candidate, which only affects speed.
    pub fn nearest(&self, q: &[f64], hint: Option<usize>) -> (usize, f64) {
        assert_eq!(q.len(), self.dim, "query dimension");
        assert!(!self.is_empty(), "query on an empty tree");
        let mut best = match hint {
            Some(h) if h < self.len() => (dist2(self.point(h), q), h),
            _ => (f64::INFINITY, usize::MAX),
        };
        let mut off = vec![0.0; self.dim];
        self.search(&self.root, q, 0.0, &mut off, &mut best);
        (best.1, best.0)
    }

    fn search(&self, node: &Node, q: &[f64], bound: f64, off: &mut [f64], best: &mut (f64, usize)) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = dist2_bounded(self.point(i), q, best.0);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        *best = (d, i);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, bound, off, best);
                let old = off[*dim];
                let far_bound = bound - old * old + diff * diff;
                if far_bound <= best.0 {
                    off[*dim] = diff;
                    self.search(far, q, far_bound, off, best);
                    off[*dim] = old;
                }
            }
        }
    }

    /// Nearest neighbour of every row of `queries`, in parallel.
    pub fn nearest_rows(&self, queries: &Mat<f64>, hints: Option<&[usize]>) -> Vec<usize> {
        let d = queries.ncols();
        (0..queries.nrows())
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |buf, i| {
                    for j in 0..d {
                        buf[j] = queries[(i, j)];
                    }
                    self.nearest(buf, hints.map(|h| h[i])).0
                },
            )
            .collect()
    }

    pub fn nearest_points(&self, queries: &[[f64; 3]]) -> Vec<usize> {
        queries.par_iter().map(|q| self.nearest(q, None).0).collect()
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE || dim == 0 {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let mut best_dim = 0;
    let mut best_spread = -1.0;
    for d in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in slice.iter() {
            let v = points[i * dim + d];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_dim = d;
        }
    }
    if best_spread <= 0.0 {
        return Node::Leaf { start, end };
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a * dim + best_dim].total_cmp(&points[b * dim + best_dim]));
    let value = points[slice[mid] * dim + best_dim];
    let left = build(points, dim, order, start, start + mid);
    let right = build(points, dim, order, start + mid, end);
    Node::Split { dim: best_dim, value, left: Box::new(left), right: Box::new(right) }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance with early exit once it exceeds `limit`.
fn dist2_bounded(a: &[f64], b: &[f64], limit: f64) -> f64 {
    let mut s = 0.0;
    for (ca, cb) in a.chunks(8).zip(b.chunks(8)) {
        for (x, y) in ca.iter().zip(cb) {
            s += (x - y) * (x - y);
        }
        if s > limit {
            return s;
        }
    }
    s
}

/// Brute-force reference used by tests and for tiny inputs.
pub fn brute_nearest(rows: &Mat<f64>, q: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for i in 0..rows.nrows() {
        let d: f64 = (0..rows.ncols()).map(|j| (rows[(i, j)] - q[j]).powi(2)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}
