//! Functional maps between spectral bases.
//!
//! A [`FunctionalMap`] from a source shape to a target shape is a
//! `k_target × k_source` matrix taking source Fourier coefficients to target
//! coefficients, `C = Ψ†ΠΦ`. The matching point-to-point map assigns every
//! target vertex a source vertex.

mod io;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::knn::KdTree;
use crate::mesh::MeshId;
use crate::spectral::SpectralBasis;

pub use io::{load_fmap, read_fmap, save_fmap, save_fmap_csv, write_fmap, write_fmap_csv};

/// Conditioning above which a descriptor system counts as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum FmapError {
    #[error("no landmarks given")]
    EmptyLandmarks,
    #[error("landmark {index} is out of range for a mesh with {n} vertices")]
    LandmarkOutOfRange { index: usize, n: usize },
    #[error("descriptor system is rank deficient (condition number {cond:e}); add landmarks or descriptor times")]
    RankDeficiency { cond: f64 },
    #[error("basis has {available} modes but {needed} are needed")]
    BasisTooSmall { needed: usize, available: usize },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("assignment entry {index} at position {position} is out of range for {n} source vertices")]
    InvalidAssignment { position: usize, index: usize, n: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed functional map file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    /// `target_k × source_k`.
    pub c: Mat<f64>,
    pub source_k: usize,
    pub target_k: usize,
    pub source_id: MeshId,
    pub target_id: MeshId,
}

impl FunctionalMap {
    pub fn new(c: Mat<f64>, source_id: MeshId, target_id: MeshId) -> Self {
        FunctionalMap { source_k: c.ncols(), target_k: c.nrows(), c, source_id, target_id }
    }

    pub fn identity(k: usize, id: MeshId) -> Self {
        Self::new(Mat::identity(k, k), id, id)
    }

    /// Maps source coefficients (`source_k × c`) to target coefficients.
    pub fn apply(&self, coeffs: &Mat<f64>) -> Result<Mat<f64>, FmapError> {
        check_dim("coefficient rows", self.source_k, coeffs.nrows())?;
        Ok(&self.c * coeffs)
    }

    /// `‖C Λ_src − Λ_tgt C‖_F`, the Laplacian commutativity defect.
    pub fn commutativity_defect(&self, src: &SpectralBasis, tgt: &SpectralBasis) -> f64 {
        let (ls, lt) = (src.lambda(), tgt.lambda());
        let mut s = 0.0;
        for i in 0..self.target_k {
            for j in 0..self.source_k {
                let d = self.c[(i, j)] * (ls[j] - lt[i]);
                s += d * d;
            }
        }
        s.sqrt()
    }
}

/// For every target vertex, the index of a source vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointToPointMap {
    pub assignment: Vec<usize>,
}

impl PointToPointMap {
    pub fn new(assignment: Vec<usize>, n_source: usize) -> Result<Self, FmapError> {
        if let Some((position, &index)) = assignment.iter().enumerate().find(|(_, &i)| i >= n_source) {
            return Err(FmapError::InvalidAssignment { position, index, n: n_source });
        }
        Ok(PointToPointMap { assignment })
    }

    pub fn identity(n: usize) -> Self {
        PointToPointMap { assignment: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Fraction of entries equal to `other`'s.
    pub fn agreement(&self, other: &[usize]) -> f64 {
        let same = self.assignment.iter().zip(other).filter(|(a, b)| a == b).count();
        same as f64 / self.assignment.len().max(1) as f64
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), FmapError> {
    if expected == got {
        Ok(())
    } else {
        Err(FmapError::DimensionMismatch { what, expected, got })
    }
}

fn check_k(basis: &SpectralBasis, k: usize) -> Result<(), FmapError> {
    if k > basis.k() {
        Err(FmapError::BasisTooSmall { needed: k, available: basis.k() })
    } else {
        Ok(())
    }
}

/// `count` logarithmically spaced diffusion times spanning `[1e-3, 1e-1]·area`.
pub fn default_times(area: f64, count: usize) -> Vec<f64> {
    log_times(1e-3 * area, 1e-1 * area, count)
}

pub fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![(lo * hi).sqrt()],
        _ => (0..count).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp()).collect(),
    }
}

/// Heat-diffused landmark indicators, one column per (landmark, time) pair
/// in landmark-major order, each scaled to unit A-norm.
pub fn landmark_descriptors(basis: &SpectralBasis, landmarks: &[usize], times: &[f64]) -> Result<Mat<f64>, FmapError> {
    if landmarks.is_empty() {
        return Err(FmapError::EmptyLandmarks);
    }
    let n = basis.n();
    if let Some(&index) = landmarks.iter().find(|&&l| l >= n) {
        return Err(FmapError::LandmarkOutOfRange { index, n });
    }
    let phi = basis.phi();
    let k = basis.k();
    let mut coeffs = Mat::<f64>::zeros(k, landmarks.len() * times.len());
    for (a, &l) in landmarks.iter().enumerate() {
        for (b, &t) in times.iter().enumerate() {
            for i in 0..k {
                coeffs[(i, a * times.len() + b)] = (-basis.lambda()[i] * t).exp() * phi[(l, i)];
            }
        }
    }
    let mut desc = phi * &coeffs;
    for j in 0..desc.ncols() {
        let norm = basis.inner(col(&desc, j), col(&desc, j)).sqrt();
        if norm > 0.0 {
            for i in 0..n {
                desc[(i, j)] /= norm;
            }
        }
    }
    Ok(desc)
}

/// Least-squares functional map of size `k × k` from descriptor pairs:
/// minimizes `‖CÂ − B̂‖² + μ‖CΛ_src − Λ_tgt C‖²` row by row, where `Â` and
/// `B̂` are the descriptor coefficients. `mu_commute` is relative: the
/// absolute weight is `mu_commute · ‖Â‖²_F / ‖Λ_src‖²_F`.
pub fn fit_fmap(
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    src_desc: &Mat<f64>,
    tgt_desc: &Mat<f64>,
    k: usize,
    mu_commute: f64,
) -> Result<FunctionalMap, FmapError> {
    check_k(src, k)?;
    check_k(tgt, k)?;
    check_dim("source descriptor rows", src.n(), src_desc.nrows())?;
    check_dim("target descriptor rows", tgt.n(), tgt_desc.nrows())?;
    check_dim("descriptor columns", src_desc.ncols(), tgt_desc.ncols())?;
    let a = src.project_first(k, src_desc).expect("rows checked");
    let b = tgt.project_first(k, tgt_desc).expect("rows checked");
    let ls = &src.lambda()[..k];
    let lt = &tgt.lambda()[..k];
    let lambda_sq: f64 = ls.iter().map(|l| l * l).sum();
    let mu = if mu_commute > 0.0 && lambda_sq > 0.0 { mu_commute * a.squared_norm_l2() / lambda_sq } else { 0.0 };
    let gram = &a * a.transpose();
    let rhs = &a * b.transpose();
    let mut c = Mat::<f64>::zeros(k, k);
    for r in 0..k {
        let mut sys = gram.clone();
        for j in 0..k {
            sys[(j, j)] += mu * (ls[j] - lt[r]).powi(2);
        }
        let cond = condition_number(&sys);
        if cond.is_nan() || cond > MAX_CONDITION {
            return Err(FmapError::RankDeficiency { cond });
        }
        let llt = sys.llt(Side::Lower).map_err(|_| FmapError::RankDeficiency { cond })?;
        let sol = llt.solve(rhs.col(r).as_mat());
        for j in 0..k {
            c[(r, j)] = sol[(j, 0)];
        }
    }
    Ok(FunctionalMap::new(c, src.mesh_id(), tgt.mesh_id()))
}

fn condition_number(sym: &Mat<f64>) -> f64 {
    match sym.self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => {
            let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().cloned().fold(0.0, f64::max);
            if lo <= 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Nearest-neighbour recovery: target vertex `j` goes to
/// `argminᵢ ‖(Φ Cᵀ)ᵢ − Ψⱼ‖`, ties to the smallest `i`.
pub fn fmap_to_p2p(src: &SpectralBasis, tgt: &SpectralBasis, c: &FunctionalMap) -> Result<PointToPointMap, FmapError> {
    fmap_to_p2p_hinted(src, tgt, c, None)
}

fn embeddings(src: &SpectralBasis, tgt: &SpectralBasis, c: &FunctionalMap) -> Result<(Mat<f64>, Mat<f64>), FmapError> {
    check_k(src, c.source_k)?;
    check_k(tgt, c.target_k)?;
    let emb_src = src.phi().subcols(0, c.source_k) * c.c.transpose();
    let emb_tgt = tgt.phi().subcols(0, c.target_k).to_owned();
    Ok((emb_src, emb_tgt))
}

/// As [`fmap_to_p2p`]; `hints` (a previous assignment) only speeds up the
/// search.
pub fn fmap_to_p2p_hinted(
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    c: &FunctionalMap,
    hints: Option<&[usize]>,
) -> Result<PointToPointMap, FmapError> {
    let (emb_src, emb_tgt) = embeddings(src, tgt, c)?;
    let tree = KdTree::from_rows(&emb_src);
    Ok(PointToPointMap { assignment: tree.nearest_rows(&emb_tgt, hints) })
}

/// The reverse nearest-neighbour search in the same embedding: every source
/// vertex gets its closest target vertex.
pub fn fmap_to_p2p_reverse(
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    c: &FunctionalMap,
) -> Result<PointToPointMap, FmapError> {
    let (emb_src, emb_tgt) = embeddings(src, tgt, c)?;
    let tree = KdTree::from_rows(&emb_tgt);
    Ok(PointToPointMap { assignment: tree.nearest_rows(&emb_src, None) })
}

/// `C = Ψ_kᵀ A_tgt Π Φ_k` for the given assignment.
pub fn p2p_to_fmap(
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    p2p: &PointToPointMap,
    k: usize,
) -> Result<FunctionalMap, FmapError> {
    check_k(src, k)?;
    check_k(tgt, k)?;
    check_dim("assignment length", tgt.n(), p2p.len())?;
    PointToPointMap::new(p2p.assignment.clone(), src.n())?;
    let phi = src.phi();
    let pulled = Mat::from_fn(tgt.n(), k, |j, b| tgt.mass()[j] * phi[(p2p.assignment[j], b)]);
    let c = tgt.phi().subcols(0, k).transpose() * &pulled;
    Ok(FunctionalMap::new(c, src.mesh_id(), tgt.mesh_id()))
}

/// ZoomOut: alternate map-to-points and points-to-map conversions while
/// growing the map by `step` modes until it is `k_final × k_final`.
pub fn zoomout_refine(
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    c0: &FunctionalMap,
    k_final: usize,
    step: usize,
) -> Result<FunctionalMap, FmapError> {
    Ok(zoomout_refine_traced(src, tgt, c0, k_final, step)?.0)
}

/// [`zoomout_refine`] that also reports the number of iterations.
pub fn zoomout_refine_traced(
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    c0: &FunctionalMap,
    k_final: usize,
    step: usize,
) -> Result<(FunctionalMap, usize), FmapError> {
    check_k(src, k_final)?;
    check_k(tgt, k_final)?;
    check_dim("initial map columns", c0.target_k, c0.source_k)?;
    let step = step.max(1);
    let mut c = c0.clone();
    let mut k = c0.source_k;
    let mut hints: Option<Vec<usize>> = None;
    let mut iterations = 0;
    while k < k_final {
        let p2p = fmap_to_p2p_hinted(src, tgt, &c, hints.as_deref())?;
        k = (k + step).min(k_final);
        c = p2p_to_fmap(src, tgt, &p2p, k)?;
        hints = Some(p2p.assignment);
        iterations += 1;
    }
    Ok((c, iterations))
}

fn col(m: &Mat<f64>, j: usize) -> &[f64] {
    m.col(j).try_as_col_major().expect("contiguous column").as_slice()
}
