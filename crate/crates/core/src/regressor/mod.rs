//! Joint regressors.
//!
//! A spatial regressor `R` (`Q × n`) maps vertex coordinates to joint
//! positions, `J = RX`. Its spectral counterpart `R̂ = RΦ` (`Q × k`) acts on
//! Fourier coefficients instead, `J = R̂X̂`, which is what lets it travel
//! through a functional map to another shape.

mod fit;
mod io;
mod skeleton;
mod weights;

use faer::Mat;

use crate::mesh::MeshId;
use crate::spectral::SpectralBasis;

pub use fit::{energy_terms, fit_spatial_regressor, EnergyBreakdown, FitDiagnostics, OptConfig, Solver, WeightsConfig};
pub use io::{
    load_skeleton, load_spatial_regressor, load_spectral_regressor, load_weights, read_skeleton,
    read_spatial_regressor, read_spectral_regressor, read_weights, save_skeleton, save_spatial_regressor,
    save_spectral_regressor, save_weights, skeleton_to_json, write_spatial_regressor, write_spectral_regressor,
    write_weights,
};
pub use skeleton::Skeleton;
pub use weights::{SkinWeights, MAX_INFLUENCES};

/// Default threshold for counting a skinning weight as non-zero.
pub const MASK_THRESHOLD: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum RegressorError {
    #[error("joint '{joint}' has no vertex weighted by both it and its parent")]
    EmptyJointSupport { joint: String },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("joint hierarchy contains a cycle through joint {joint}")]
    CyclicHierarchy { joint: usize },
    #[error("invalid skinning weights: {0}")]
    InvalidWeights(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("optimization diverged at iteration {iteration}: energy {energy:e} exceeds 10x the best value {best:e}")]
    Divergence { iteration: usize, energy: f64, best: f64 },
    #[error("optimization produced a non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), RegressorError> {
    if expected == got {
        Ok(())
    } else {
        Err(RegressorError::DimensionMismatch { what, expected, got })
    }
}

/// Binary joint-to-vertex support `F` (`Q × n`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n: usize,
    rows: Vec<Vec<bool>>,
}

impl Mask {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        let n = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == n), "ragged mask");
        Mask { n, rows }
    }

    pub fn full(q: usize, n: usize) -> Self {
        Mask { n, rows: vec![vec![true; n]; q] }
    }

    pub fn n_joints(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn get(&self, q: usize, i: usize) -> bool {
        self.rows[q][i]
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.rows[q]
    }

    /// Number of vertices in the support of joint `q`.
    pub fn support(&self, q: usize) -> usize {
        self.rows[q].iter().filter(|&&b| b).count()
    }
}

/// `F[q,i] = 1` iff vertex `i` is weighted above `threshold` by joint `q` and
/// by its parent; for the root, by the root alone.
pub fn build_mask(skeleton: &Skeleton, weights: &SkinWeights, threshold: f64) -> Result<Mask, RegressorError> {
    check_dim("weight columns", skeleton.len(), weights.n_joints())?;
    let n = weights.n_vertices();
    let mut rows = vec![vec![false; n]; skeleton.len()];
    for i in 0..n {
        for q in 0..skeleton.len() {
            let own = weights.get(i, q) > threshold;
            rows[q][i] = match skeleton.parent(q) {
                Some(p) => own && weights.get(i, p) > threshold,
                None => own,
            };
        }
    }
    let mask = Mask { n, rows };
    for q in 0..skeleton.len() {
        if mask.support(q) == 0 {
            return Err(RegressorError::EmptyJointSupport { joint: skeleton.name(q).to_string() });
        }
    }
    Ok(mask)
}

/// `R` together with its mask and the diagnostics of the fit that produced it.
#[derive(Debug, Clone)]
pub struct SpatialRegressor {
    /// `Q × n`.
    pub r: Mat<f64>,
    pub mask: Mask,
    /// Content hash of the mesh the regressor was fitted on.
    pub mesh_id: MeshId,
    pub diagnostics: Option<FitDiagnostics>,
}

impl SpatialRegressor {
    pub fn n_joints(&self) -> usize {
        self.r.nrows()
    }

    pub fn n_vertices(&self) -> usize {
        self.r.ncols()
    }

    /// `RX` for an `n × 3` coordinate matrix.
    pub fn apply(&self, x: &Mat<f64>) -> Result<Mat<f64>, RegressorError> {
        check_dim("vertex rows", self.n_vertices(), x.nrows())?;
        Ok(&self.r * x)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_joints()).map(|q| (0..self.n_vertices()).map(|i| self.r[(q, i)]).sum()).collect()
    }

    /// Copy with every row rescaled to sum to exactly one.
    pub fn row_normalized(&self) -> SpatialRegressor {
        let sums = self.row_sums();
        let mut out = self.clone();
        for q in 0..self.n_joints() {
            for i in 0..self.n_vertices() {
                out.r[(q, i)] /= sums[q];
            }
        }
        out
    }

    /// `Σ_{F=0} R² / Σ R²`.
    pub fn masked_out_fraction(&self) -> f64 {
        let (mut out, mut all) = (0.0, 0.0);
        for q in 0..self.n_joints() {
            for i in 0..self.n_vertices() {
                let v = self.r[(q, i)] * self.r[(q, i)];
                all += v;
                if !self.mask.get(q, i) {
                    out += v;
                }
            }
        }
        if all > 0.0 {
            out / all
        } else {
            0.0
        }
    }
}

/// `R̂ = RΦ` (`Q × k`) tied to the basis it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRegressor {
    pub r_hat: Mat<f64>,
    pub basis_id: MeshId,
}

impl SpectralRegressor {
    pub fn k(&self) -> usize {
        self.r_hat.ncols()
    }

    pub fn n_joints(&self) -> usize {
        self.r_hat.nrows()
    }

    /// `R̂X̂` for a `k × 3` coefficient matrix.
    pub fn apply(&self, coeffs: &Mat<f64>) -> Result<Mat<f64>, RegressorError> {
        check_dim("coefficient rows", self.k(), coeffs.nrows())?;
        Ok(&self.r_hat * coeffs)
    }

    /// The first `k` columns.
    pub fn truncated(&self, k: usize) -> SpectralRegressor {
        SpectralRegressor { r_hat: self.r_hat.subcols(0, k).to_owned(), basis_id: self.basis_id }
    }
}

/// `R̂ = RΦ`, exact.
pub fn to_spectral(r: &SpatialRegressor, basis: &SpectralBasis) -> Result<SpectralRegressor, RegressorError> {
    to_spectral_matrix(&r.r, basis)
}

pub fn to_spectral_matrix(r: &Mat<f64>, basis: &SpectralBasis) -> Result<SpectralRegressor, RegressorError> {
    check_dim("regressor columns", basis.n(), r.ncols())?;
    Ok(SpectralRegressor { r_hat: r * basis.phi(), basis_id: basis.mesh_id() })
}

/// `R̂ΦᵀA`: the band-limited spatial regressor. Lossy unless the rows of `R`
/// already lie in the span of `AΦ`.
pub fn to_spatial(r_hat: &SpectralRegressor, basis: &SpectralBasis) -> Result<Mat<f64>, RegressorError> {
    check_dim("spectral regressor columns", basis.k(), r_hat.k())?;
    let mut r = &r_hat.r_hat * basis.phi().transpose();
    for i in 0..basis.n() {
        let a = basis.mass()[i];
        for q in 0..r.nrows() {
            r[(q, i)] *= a;
        }
    }
    Ok(r)
}
