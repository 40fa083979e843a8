//! Triangle meshes, lumped vertex areas and mesh file formats.

mod io;
mod landmarks;

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

pub use io::{load_mesh, load_mesh_as, save_mesh, MeshFormat};
pub use landmarks::{load_landmark_list, load_landmarks, save_landmarks, zip_landmarks, LandmarkSet};

/// Faces whose area falls below this fraction of the squared bounding-box
/// diagonal are rejected.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but the mesh has {n} vertices")]
    IndexOutOfRange { face: usize, index: usize, n: usize },
    #[error("face {face} repeats vertex {index}")]
    RepeatedVertex { face: usize, index: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("rotation is not orthonormal (deviation {deviation:e})")]
    NonOrthonormalRotation { deviation: f64 },
    #[error("vertex count mismatch: expected {expected}, got {got}")]
    VertexCountMismatch { expected: usize, got: usize },
    #[error("invalid landmarks: {0}")]
    InvalidLandmarks(String),
}

/// Content hash of a mesh's coordinates and connectivity.
///
/// Used to key spectral caches and to check that serialized maps and
/// regressors are applied to the meshes they were computed on.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MeshId(pub [u8; 32]);

impl MeshId {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        Some(MeshId(out))
    }

    /// Short prefix for log and error messages.
    pub fn short(&self) -> String {
        self.to_hex()[..12].to_string()
    }
}

impl fmt::Debug for MeshId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MeshId({})", self.short())
    }
}

impl fmt::Display for MeshId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// An immutable triangle mesh with barycentric lumped vertex areas.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T: Scalar = f64> {
    vertices: Vec<[T; 3]>,
    faces: Vec<[usize; 3]>,
    vertex_areas: Vec<T>,
    isolated: Vec<usize>,
}

impl<T: Scalar> TriMesh<T> {
    /// Validates connectivity and computes lumped areas.
    ///
    /// Vertices not referenced by any face are kept (they have zero area) and
    /// reported by [`TriMesh::isolated_vertices`].
    pub fn new(vertices: Vec<[T; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: i, n });
                }
            }
            if f[0] == f[1] || f[0] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi, index: f[0] });
            }
            if f[1] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi, index: f[1] });
            }
        }

        let diag = bbox_diagonal(&vertices).as_f64();
        let min_area = DEGENERATE_AREA_RATIO * diag * diag;
        let third = T::lit(1.0 / 3.0);
        let mut vertex_areas = vec![T::zero(); n];
        let mut referenced = vec![false; n];
        for (fi, f) in faces.iter().enumerate() {
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area.as_f64() > 0.0 && area.as_f64() >= min_area) {
                return Err(MeshError::DegenerateFace { face: fi, area: area.as_f64() });
            }
            for &i in f {
                vertex_areas[i] += area * third;
                referenced[i] = true;
            }
        }
        let isolated = (0..n).filter(|&i| !referenced[i]).collect();
        Ok(TriMesh { vertices, faces, vertex_areas, isolated })
    }

    /// Same connectivity, new coordinates. Areas are recomputed.
    pub fn with_vertices(&self, vertices: Vec<[T; 3]>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::VertexCountMismatch { expected: self.vertices.len(), got: vertices.len() });
        }
        TriMesh::new(vertices, self.faces.clone())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[[T; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_areas(&self) -> &[T] {
        &self.vertex_areas
    }

    pub fn isolated_vertices(&self) -> &[usize] {
        &self.isolated
    }

    pub fn face_area(&self, f: usize) -> T {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    /// Sum of face areas.
    pub fn total_area(&self) -> T {
        (0..self.faces.len()).fold(T::zero(), |acc, f| acc + self.face_area(f))
    }

    pub fn bbox(&self) -> ([T; 3], [T; 3]) {
        bbox(&self.vertices)
    }

    pub fn bbox_diagonal(&self) -> T {
        bbox_diagonal(&self.vertices)
    }

    pub fn centroid(&self) -> [T; 3] {
        let mut c = [T::zero(); 3];
        for v in &self.vertices {
            for d in 0..3 {
                c[d] += v[d];
            }
        }
        let inv = T::one() / T::from_usize(self.vertices.len().max(1)).unwrap();
        c.map(|x| x * inv)
    }

    /// Hash of the coordinates (as `f64` bit patterns) and faces.
    pub fn content_hash(&self) -> MeshId {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        h.update((self.faces.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for x in v {
                h.update(x.as_f64().to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        MeshId(h.finalize().into())
    }

    /// Sorted 1-ring neighbourhoods.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Unique undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn mean_edge_length(&self) -> T {
        let edges = self.edges();
        let sum = edges.iter().fold(T::zero(), |acc, &(i, j)| acc + dist(&self.vertices[i], &self.vertices[j]));
        sum / T::from_usize(edges.len().max(1)).unwrap()
    }

    /// Connected components over face connectivity; isolated vertices form
    /// singleton components. Returns the label per vertex and the count.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.faces {
            for e in 1..3 {
                let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[e]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut root_label = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if root_label[r] == usize::MAX {
                root_label[r] = count;
                count += 1;
            }
            label[i] = root_label[r];
        }
        (label, count)
    }

    pub fn cast<U: Scalar>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| crate::scalar::cast3(v)).collect(),
            faces: self.faces.clone(),
            vertex_areas: self.vertex_areas.iter().map(|&a| U::lit(a.as_f64())).collect(),
            isolated: self.isolated.clone(),
        }
    }

    /// Uniformly scales about the centroid so that the total area is one.
    pub fn normalized_area(&self) -> Result<Self, MeshError> {
        let s = T::one() / self.total_area().sqrt();
        let c = self.centroid();
        let v = self
            .vertices
            .iter()
            .map(|p| [(p[0] - c[0]) * s + c[0], (p[1] - c[1]) * s + c[1], (p[2] - c[2]) * s + c[2]])
            .collect();
        self.with_vertices(v)
    }
}

/// Applies `x ↦ R x + t`. Connectivity is kept and areas are recomputed.
pub fn rigid_transform<T: Scalar>(
    mesh: &TriMesh<T>,
    rotation: &Matrix3<T>,
    translation: &Vector3<T>,
) -> Result<TriMesh<T>, MeshError> {
    let dev = (rotation.transpose() * rotation - Matrix3::identity()).amax().as_f64();
    let det = (rotation.determinant().as_f64() - 1.0).abs();
    let tol = 1e-10_f64.max(100.0 * T::eps().as_f64());
    if !(dev <= tol && det <= tol) {
        return Err(MeshError::NonOrthonormalRotation { deviation: dev.max(det) });
    }
    let v = mesh
        .vertices
        .iter()
        .map(|p| {
            let q = rotation * Vector3::new(p[0], p[1], p[2]) + translation;
            [q.x, q.y, q.z]
        })
        .collect();
    mesh.with_vertices(v)
}

pub(crate) fn triangle_area<T: Scalar>(a: &[T; 3], b: &[T; 3], c: &[T; 3]) -> T {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    (cx * cx + cy * cy + cz * cz).sqrt() * T::lit(0.5)
}

pub(crate) fn dist<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn bbox<T: Scalar>(v: &[[T; 3]]) -> ([T; 3], [T; 3]) {
    let mut lo = [T::zero(); 3];
    let mut hi = [T::zero(); 3];
    if let Some(first) = v.first() {
        lo = *first;
        hi = *first;
    }
    for p in v {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

fn bbox_diagonal<T: Scalar>(v: &[[T; 3]]) -> T {
    let (lo, hi) = bbox(v);
    dist(&lo, &hi)
}
