use super::SpectralError;
use crate::mesh::{MeshId, TriMesh};
use crate::scalar::Scalar;

/// Cotangent values are clamped to this magnitude.
pub const COT_CLAMP: f64 = 1e6;

/// Compressed sparse rows for a symmetric matrix. Column indices are
/// sorted within each row and structural zeros from the mesh are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SymCsr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymCsr {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = s;
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.col_idx[p]] = self.values[p];
            }
        }
        d
    }

    fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymCsr { n, row_ptr, col_idx, values }
    }
}

/// Cotangent stiffness `W` and lumped mass `A` of a mesh.
///
/// `W` is positive semi-definite: off-diagonal entries are
/// `-(cot α + cot β) / 2` and each diagonal entry makes its row sum to zero.
#[derive(Debug, Clone)]
pub struct CotanOperator {
    pub stiffness: SymCsr,
    pub mass: Vec<f64>,
    /// Connected-component label per vertex.
    pub components: Vec<usize>,
    pub n_components: usize,
    pub mesh_id: MeshId,
}

impl CotanOperator {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn total_area(&self) -> f64 {
        self.mass.iter().sum()
    }
}

pub fn assemble_cotan<T: Scalar>(mesh: &TriMesh<T>) -> Result<CotanOperator, SpectralError> {
    if !mesh.isolated_vertices().is_empty() {
        return Err(SpectralError::IsolatedVertices { count: mesh.isolated_vertices().len() });
    }
    let n = mesh.n_vertices();
    let v: Vec<[f64; 3]> = mesh.vertices().iter().map(|&p| crate::scalar::cast3(p)).collect();
    let mut trip = Vec::with_capacity(mesh.n_faces() * 12);
    for (fi, f) in mesh.faces().iter().enumerate() {
        for c in 0..3 {
            let (k, i, j) = (f[c], f[(c + 1) % 3], f[(c + 2) % 3]);
            let u = sub(&v[i], &v[k]);
            let w = sub(&v[j], &v[k]);
            let cross = norm(&crossp(&u, &w));
            if cross == 0.0 || !cross.is_finite() {
                return Err(SpectralError::DegenerateTriangle { face: fi });
            }
            let cot = (dot(&u, &w) / cross).clamp(-COT_CLAMP, COT_CLAMP);
            let h = 0.5 * cot;
            trip.push((i, j, -h));
            trip.push((j, i, -h));
            trip.push((i, i, h));
            trip.push((j, j, h));
        }
    }
    let stiffness = SymCsr::from_triplets(n, trip);
    let mass = mesh.vertex_areas().iter().map(|a| a.as_f64()).collect();
    let (components, n_components) = mesh.connected_components();
    Ok(CotanOperator { stiffness, mass, components, n_components, mesh_id: mesh.content_hash() })
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn crossp(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
