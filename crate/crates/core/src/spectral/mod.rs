//! Laplace–Beltrami eigenbases and Fourier projection of vertex functions.
//!
//! The basis is A-orthonormal (`ΦᵀAΦ = I` for the diagonal lumped mass `A`),
//! so the Moore–Penrose pseudo-inverse used for projection is simply
//! `Φ† = ΦᵀA`. Each eigenvector is sign-normalized so that its entry of
//! largest magnitude is positive.

mod cache;
mod cotan;
mod eigen;

use faer::Mat;

use crate::mesh::{MeshId, TriMesh};
use crate::scalar::Scalar;

pub use cache::{basis_cache_path, eigenbasis_cached, load_basis, read_basis, save_basis, write_basis};
pub use cotan::{assemble_cotan, CotanOperator, SymCsr, COT_CLAMP};
pub use eigen::{eigenbasis, eigenbasis_with, EigenMethod, EigenOptions};

#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    #[error("mesh has {count} isolated vertices; the mass matrix would be singular")]
    IsolatedVertices { count: usize },
    #[error("triangle {face} is degenerate")]
    DegenerateTriangle { face: usize },
    #[error("requested k = {k} eigenpairs but the mesh has only {n} vertices")]
    KTooLarge { k: usize, n: usize },
    #[error("eigensolver did not converge after {op_applications} operator applications; worst residual {worst_residual:e} (per-mode residuals: {residuals:?})")]
    ConvergenceFailure { op_applications: usize, worst_residual: f64, residuals: Vec<f64> },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: expected {expected} rows, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed basis file: {0}")]
    Format(String),
}

/// Truncated generalized eigenbasis `WΦ = AΦΛ` of a mesh.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    phi: Mat<f64>,
    lambda: Vec<f64>,
    mass: Vec<f64>,
    mesh_id: MeshId,
}

impl SpectralBasis {
    pub fn from_parts(phi: Mat<f64>, lambda: Vec<f64>, mass: Vec<f64>, mesh_id: MeshId) -> Result<Self, SpectralError> {
        if phi.ncols() != lambda.len() {
            return Err(SpectralError::DimensionMismatch { expected: phi.ncols(), got: lambda.len() });
        }
        if phi.nrows() != mass.len() {
            return Err(SpectralError::DimensionMismatch { expected: phi.nrows(), got: mass.len() });
        }
        Ok(SpectralBasis { phi, lambda, mass, mesh_id })
    }

    /// Truncation order.
    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    /// Number of mesh vertices.
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// `n × k` eigenvectors, one per column.
    pub fn phi(&self) -> &Mat<f64> {
        &self.phi
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    /// The first `k` modes. Panics if `k` exceeds the basis size.
    pub fn truncated(&self, k: usize) -> SpectralBasis {
        assert!(k <= self.k(), "cannot truncate a {}-mode basis to {k}", self.k());
        SpectralBasis {
            phi: self.phi.subcols(0, k).to_owned(),
            lambda: self.lambda[..k].to_vec(),
            mass: self.mass.clone(),
            mesh_id: self.mesh_id,
        }
    }

    /// Fourier coefficients `ΦᵀA f` of the columns of `f` (`n × c`).
    pub fn project(&self, f: &Mat<f64>) -> Result<Mat<f64>, SpectralError> {
        self.project_first(self.k(), f)
    }

    /// Projection onto the first `k` modes only.
    pub fn project_first(&self, k: usize, f: &Mat<f64>) -> Result<Mat<f64>, SpectralError> {
        if f.nrows() != self.n() {
            return Err(SpectralError::DimensionMismatch { expected: self.n(), got: f.nrows() });
        }
        let af = Mat::from_fn(f.nrows(), f.ncols(), |i, j| self.mass[i] * f[(i, j)]);
        Ok(self.phi.subcols(0, k.min(self.k())).transpose() * &af)
    }

    /// Fourier coefficients of vertex coordinates (`k × 3`).
    pub fn project_points<T: Scalar>(&self, points: &[[T; 3]]) -> Result<Mat<f64>, SpectralError> {
        self.project(&points_to_mat(points))
    }

    /// Evaluates `Φ · coeffs` for a `k × c` coefficient matrix.
    pub fn reconstruct(&self, coeffs: &Mat<f64>) -> Result<Mat<f64>, SpectralError> {
        if coeffs.nrows() != self.k() {
            return Err(SpectralError::DimensionMismatch { expected: self.k(), got: coeffs.nrows() });
        }
        Ok(&self.phi * coeffs)
    }

    /// Band-limits `f`: `ΦΦᵀA f`.
    pub fn low_pass(&self, f: &Mat<f64>) -> Result<Mat<f64>, SpectralError> {
        self.reconstruct(&self.project(f)?)
    }

    /// A-weighted inner product of two vertex functions.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.mass).map(|((x, y), m)| x * y * m).sum()
    }
}

/// Convenience: eigenbasis of a mesh with default options.
pub fn mesh_eigenbasis<T: Scalar>(mesh: &TriMesh<T>, k: usize) -> Result<SpectralBasis, SpectralError> {
    eigenbasis(&assemble_cotan(mesh)?, k)
}

/// Packs points as an `n × 3` matrix.
pub fn points_to_mat<T: Scalar>(points: &[[T; 3]]) -> Mat<f64> {
    Mat::from_fn(points.len(), 3, |i, j| points[i][j].as_f64())
}

/// Unpacks an `n × 3` matrix into points.
pub fn mat_to_points(m: &Mat<f64>) -> Vec<[f64; 3]> {
    (0..m.nrows()).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect()
}
