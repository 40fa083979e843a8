//! Generalized symmetric eigensolver for `Wφ = λAφ`.
//!
//! The kernel of `W` (one indicator per connected component) is known in
//! closed form and deflated up front. The remaining modes are found with a
//! block Krylov method on the shift-inverted operator `(W − σA)⁻¹A`, which is
//! self-adjoint in the A-inner product, using full A-orthogonalization,
//! Rayleigh–Ritz extraction and thick restarts.

use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CotanOperator, SpectralBasis, SpectralError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense for small meshes, shift-invert otherwise.
    Auto,
    ShiftInvert,
    /// Full dense eigendecomposition; O(n³).
    Dense,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Shift σ; the factorized matrix is `W − σA`.
    pub shift: f64,
    /// Relative residual tolerance on the shift-inverted problem.
    pub tol: f64,
    /// Relative residual tolerance `‖Wφ − λAφ‖ / ‖Wφ‖` on the original problem.
    pub residual_tol: f64,
    /// Operator applications are capped at `max_op_factor · k`.
    pub max_op_factor: usize,
    /// Krylov block size; 0 picks one from `k`.
    pub block_size: usize,
    pub seed: u64,
    /// `Auto` uses the dense solver at or below this many vertices.
    pub dense_threshold: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            method: EigenMethod::Auto,
            shift: -1e-8,
            tol: 1e-10,
            residual_tol: 1e-9,
            max_op_factor: 300,
            block_size: 0,
            seed: 0x5eed_ba5e,
            dense_threshold: 400,
        }
    }
}

pub fn eigenbasis(op: &CotanOperator, k: usize) -> Result<SpectralBasis, SpectralError> {
    eigenbasis_with(op, k, &EigenOptions::default())
}

/// The `k` smallest eigenpairs, A-orthonormal, sign-normalized, ascending.
pub fn eigenbasis_with(op: &CotanOperator, k: usize, opts: &EigenOptions) -> Result<SpectralBasis, SpectralError> {
    let n = op.n();
    if k >= n {
        return Err(SpectralError::KTooLarge { k, n });
    }
    let kernel = kernel_vectors(op);
    let c = kernel.ncols();
    let (mut phi, mut lambda) = if k <= c {
        (kernel.subcols(0, k).to_owned(), vec![0.0; k])
    } else {
        let dense = match opts.method {
            EigenMethod::Dense => true,
            EigenMethod::ShiftInvert => false,
            EigenMethod::Auto => n <= opts.dense_threshold,
        };
        let (x, l) = if dense { dense_modes(op, k - c)? } else { ShiftInvert::new(op, &kernel, opts)?.solve(k - c)? };
        let mut phi = Mat::zeros(n, k);
        phi.subcols_mut(0, c).copy_from(&kernel);
        phi.subcols_mut(c, k - c).copy_from(&x);
        let mut lambda = vec![0.0; c];
        lambda.extend(l);
        (phi, lambda)
    };
    sort_modes(&mut phi, &mut lambda, c.min(k));
    normalize_signs(&mut phi);
    SpectralBasis::from_parts(phi, lambda, op.mass.clone(), op.mesh_id)
}

/// A-normalized indicator functions of the connected components.
fn kernel_vectors(op: &CotanOperator) -> Mat<f64> {
    let mut area = vec![0.0; op.n_components];
    for (i, &lab) in op.components.iter().enumerate() {
        area[lab] += op.mass[i];
    }
    Mat::from_fn(op.n(), op.n_components, |i, j| if op.components[i] == j { 1.0 / area[j].sqrt() } else { 0.0 })
}

/// Stable ascending sort of the non-kernel modes by eigenvalue.
fn sort_modes(phi: &mut Mat<f64>, lambda: &mut [f64], skip: usize) {
    let mut order: Vec<usize> = (skip..lambda.len()).collect();
    order.sort_by(|&a, &b| lambda[a].total_cmp(&lambda[b]));
    let src = phi.clone();
    let old = lambda.to_vec();
    for (dst, &from) in (skip..lambda.len()).zip(&order) {
        phi.col_mut(dst).copy_from(src.col(from));
        lambda[dst] = old[from];
    }
}

/// Makes the entry of largest magnitude in every column positive; the first
/// such entry wins ties.
pub(crate) fn normalize_signs(phi: &mut Mat<f64>) {
    for j in 0..phi.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..phi.nrows() {
            let v = phi[(i, j)];
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..phi.nrows() {
                phi[(i, j)] = -phi[(i, j)];
            }
        }
    }
}

/// Dense route: eigendecomposition of `A^{-1/2} W A^{-1/2}`, dropping the
/// kernel (which is supplied exactly by the caller).
fn dense_modes(op: &CotanOperator, m: usize) -> Result<(Mat<f64>, Vec<f64>), SpectralError> {
    let n = op.n();
    let c = op.n_components;
    let w = &op.stiffness;
    let inv_sqrt: Vec<f64> = op.mass.iter().map(|a| 1.0 / a.sqrt()).collect();
    let mut dense = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for p in w.row_ptr[i]..w.row_ptr[i + 1] {
            let j = w.col_idx[p];
            dense[(i, j)] = w.values[p] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = dense
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SpectralError::Factorization(format!("dense eigendecomposition: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let x = Mat::from_fn(n, m, |i, j| u[(i, c + j)] * inv_sqrt[i]);
    let lambda = (0..m).map(|j| s[c + j]).collect();
    Ok((x, lambda))
}

enum Factor {
    Llt(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(Box<faer::sparse::linalg::solvers::Lu<usize, f64>>),
}

impl Factor {
    fn solve_in_place(&self, rhs: faer::MatMut<'_, f64>) {
        use faer::linalg::solvers::SolveCore;
        match self {
            Factor::Llt(f) => f.solve_in_place_with_conj(faer::Conj::No, rhs),
            Factor::Lu(f) => f.solve_in_place_with_conj(faer::Conj::No, rhs),
        }
    }
}

struct ShiftInvert<'a> {
    op: &'a CotanOperator,
    kernel: &'a Mat<f64>,
    opts: &'a EigenOptions,
    factor: Factor,
    applications: usize,
}

impl<'a> ShiftInvert<'a> {
    fn new(op: &'a CotanOperator, kernel: &'a Mat<f64>, opts: &'a EigenOptions) -> Result<Self, SpectralError> {
        let w = &op.stiffness;
        let mut trip = Vec::with_capacity(w.nnz() + op.n());
        for i in 0..op.n() {
            for p in w.row_ptr[i]..w.row_ptr[i + 1] {
                trip.push(Triplet::new(i, w.col_idx[p], w.values[p]));
            }
            trip.push(Triplet::new(i, i, -opts.shift * op.mass[i]));
        }
        let shifted = SparseColMat::<usize, f64>::try_new_from_triplets(op.n(), op.n(), &trip)
            .map_err(|e| SpectralError::Factorization(format!("{e:?}")))?;
        let factor = match shifted.sp_cholesky(Side::Lower) {
            Ok(llt) => Factor::Llt(llt),
            Err(_) => {
                Factor::Lu(Box::new(shifted.sp_lu().map_err(|e| SpectralError::Factorization(format!("{e:?}")))?))
            }
        };
        Ok(ShiftInvert { op, kernel, opts, factor, applications: 0 })
    }

    fn a(&self) -> &[f64] {
        &self.op.mass
    }

    /// `x ↦ (W − σA)⁻¹ A x`, restricted to the A-complement of the kernel.
    fn apply(&mut self, x: &Mat<f64>) -> Mat<f64> {
        let a = self.a();
        let mut y = Mat::from_fn(x.nrows(), x.ncols(), |i, j| a[i] * x[(i, j)]);
        self.factor.solve_in_place(y.as_mut());
        self.applications += x.ncols();
        self.deflate(&mut y);
        y
    }

    fn deflate(&self, y: &mut Mat<f64>) {
        let ay = scale_rows(self.a(), y);
        let coef = self.kernel.transpose() * &ay;
        *y -= self.kernel * &coef;
    }

    fn random_block(&self, rng: &mut ChaCha8Rng, b: usize) -> Mat<f64> {
        Mat::from_fn(self.op.n(), b, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// A-orthonormalizes `w` against the kernel, the first `p` columns of
    /// `basis` and itself. Columns that collapse are replaced by random
    /// vectors.
    fn orthonormalize(&self, basis: &Mat<f64>, p: usize, mut w: Mat<f64>, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let a = self.a();
        let vp = basis.subcols(0, p);
        for _ in 0..2 {
            self.deflate(&mut w);
            if p > 0 {
                let aw = scale_rows(a, &w);
                let coef = vp.transpose() * &aw;
                w -= vp * &coef;
            }
        }
        for j in 0..w.ncols() {
            let mut attempts = 0;
            loop {
                let before = a_norm(a, w.col(j).try_as_col_major().unwrap().as_slice());
                for _ in 0..2 {
                    for i in 0..j {
                        let d = a_dot(a, col(&w, i), col(&w, j));
                        let (left, mut right) = w.as_mut().split_at_col_mut(j);
                        let ci = left.col(i);
                        let mut cj = right.as_mut().col_mut(0);
                        for r in 0..cj.nrows() {
                            cj[r] -= d * ci[r];
                        }
                    }
                }
                let after = a_norm(a, col(&w, j));
                if after > 1e-10 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                    let inv = 1.0 / after;
                    for r in 0..w.nrows() {
                        w[(r, j)] *= inv;
                    }
                    break;
                }
                attempts += 1;
                assert!(attempts < 8, "could not extend the Krylov basis");
                let mut fresh = self.random_block(rng, 1);
                for _ in 0..2 {
                    self.deflate(&mut fresh);
                    if p > 0 {
                        let af = scale_rows(a, &fresh);
                        let coef = vp.transpose() * &af;
                        fresh -= vp * &coef;
                    }
                }
                w.col_mut(j).copy_from(fresh.col(0));
            }
        }
        w
    }

    fn solve(mut self, m: usize) -> Result<(Mat<f64>, Vec<f64>), SpectralError> {
        let n = self.op.n();
        let c = self.kernel.ncols();
        let avail = n - c;
        let b = if self.opts.block_size > 0 { self.opts.block_size } else { (m / 6).clamp(8, 16) }.min(m).max(1);
        let max_dim = avail.min((2 * m + 2 * b).max(m + 6 * b));
        let keep = (m + 2 * b).min(max_dim.saturating_sub(b)).max(m);
        let budget = self.opts.max_op_factor.max(1) * (m + c);
        let sigma = self.opts.shift;

        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut v = Mat::<f64>::zeros(n, max_dim);
        let mut u = Mat::<f64>::zeros(n, max_dim);
        let mut t = Mat::<f64>::zeros(max_dim, max_dim);
        let mut p = 0usize;

        let start = self.random_block(&mut rng, b.min(avail));
        let mut next = self.orthonormalize(&v, 0, start, &mut rng);
        let mut next_check = m + b;
        let mut last_residuals: Vec<f64> = vec![f64::INFINITY; m];

        loop {
            // append block `next` to the basis
            let nb = next.ncols().min(max_dim - p);
            let block = next.subcols(0, nb).to_owned();
            let ub = self.apply(&block);
            v.subcols_mut(p, nb).copy_from(&block);
            u.subcols_mut(p, nb).copy_from(&ub);
            let aub = scale_rows(self.a(), &ub);
            let coef = v.subcols(0, p + nb).transpose() * &aub;
            for i in 0..p + nb {
                for j in 0..nb {
                    t[(i, p + j)] = coef[(i, j)];
                    t[(p + j, i)] = coef[(i, j)];
                }
            }
            for i in 0..nb {
                for j in 0..i {
                    let s = 0.5 * (t[(p + i, p + j)] + t[(p + j, p + i)]);
                    t[(p + i, p + j)] = s;
                    t[(p + j, p + i)] = s;
                }
            }
            p += nb;

            let full = p == avail;
            let must_restart = p + b > max_dim && !full;
            if p >= m && (p >= next_check || must_restart || full) {
                next_check = p + b.max(m / 4);
                let ritz = self.rayleigh_ritz(&v, &u, &t, p, m, sigma);
                last_residuals = ritz.residuals.clone();
                let converged = ritz.converged.iter().take_while(|&&ok| ok).count();
                if converged == m {
                    log::debug!("eigensolver: {} operator applications, subspace {p}, block {b}", self.applications);
                    return Ok((ritz.x, ritz.lambda));
                }
                if full {
                    // complete space: the Ritz pairs are exact up to rounding
                    return Ok((ritz.x, ritz.lambda));
                }
                if must_restart {
                    let (nv, nu, theta) = self.restart(&v, &u, &t, p, keep);
                    v.subcols_mut(0, keep).copy_from(&nv);
                    u.subcols_mut(0, keep).copy_from(&nu);
                    t.fill(0.0);
                    for i in 0..keep {
                        t[(i, i)] = theta[i];
                    }
                    p = keep;
                    // continue from residuals of the leading unconverged pairs
                    let pending: Vec<usize> = (0..keep).filter(|&i| i >= converged).take(b).collect();
                    let mut res = Mat::<f64>::zeros(n, pending.len());
                    for (col_out, &i) in pending.iter().enumerate() {
                        for r in 0..n {
                            res[(r, col_out)] = u[(r, i)] - theta[i] * v[(r, i)];
                        }
                    }
                    next = self.orthonormalize(&v, p, res, &mut rng);
                    next_check = p + b;
                    if self.applications > budget {
                        break;
                    }
                    continue;
                }
            }
            if self.applications > budget {
                break;
            }
            let tail = u.subcols(p - nb, nb).to_owned();
            next = self.orthonormalize(&v, p, tail, &mut rng);
        }
        let worst = last_residuals.iter().cloned().fold(0.0, f64::max);
        Err(SpectralError::ConvergenceFailure {
            op_applications: self.applications,
            worst_residual: worst,
            residuals: last_residuals,
        })
    }

    /// Leading Ritz pairs of the `p`-dimensional subspace with residuals.
    fn rayleigh_ritz(&self, v: &Mat<f64>, u: &Mat<f64>, t: &Mat<f64>, p: usize, m: usize, sigma: f64) -> Ritz {
        let n = self.op.n();
        let a = self.a();
        let (theta, y) = top_eigenpairs(&t.submatrix(0, 0, p, p).to_owned(), m);
        let x = v.subcols(0, p) * &y;
        let ox = u.subcols(0, p) * &y;
        let mut lambda = Vec::with_capacity(m);
        let mut residuals = Vec::with_capacity(m);
        let mut converged = Vec::with_capacity(m);
        let mut wx = vec![0.0; n];
        for j in 0..m {
            let xj = col(&x, j);
            let shifted: f64 = (0..n)
                .map(|r| {
                    let d = ox[(r, j)] - theta[j] * x[(r, j)];
                    a[r] * d * d
                })
                .sum::<f64>()
                .sqrt();
            self.op.stiffness.mul_vec(xj, &mut wx);
            let xax = a_dot(a, xj, xj);
            let rq = xj.iter().zip(&wx).map(|(p, q)| p * q).sum::<f64>() / xax;
            let res: f64 = (0..n).map(|r| (wx[r] - rq * a[r] * xj[r]).powi(2)).sum::<f64>().sqrt();
            let wnorm = wx.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = res / wnorm.max(f64::MIN_POSITIVE);
            let ok = theta[j] > 0.0 && shifted <= self.opts.tol * theta[j] && rel <= self.opts.residual_tol;
            lambda.push(if rq.is_finite() { rq } else { sigma + 1.0 / theta[j] });
            residuals.push(rel);
            converged.push(ok);
        }
        Ritz { x, lambda, residuals, converged }
    }

    fn restart(
        &self,
        v: &Mat<f64>,
        u: &Mat<f64>,
        t: &Mat<f64>,
        p: usize,
        keep: usize,
    ) -> (Mat<f64>, Mat<f64>, Vec<f64>) {
        let (theta, y) = top_eigenpairs(&t.submatrix(0, 0, p, p).to_owned(), keep);
        (v.subcols(0, p) * &y, u.subcols(0, p) * &y, theta)
    }
}

struct Ritz {
    x: Mat<f64>,
    lambda: Vec<f64>,
    residuals: Vec<f64>,
    converged: Vec<bool>,
}

/// The `m` largest eigenpairs of a small symmetric matrix, descending.
fn top_eigenpairs(t: &Mat<f64>, m: usize) -> (Vec<f64>, Mat<f64>) {
    let p = t.nrows();
    let eig = t.self_adjoint_eigen(Side::Lower).expect("dense symmetric eigendecomposition");
    let s = eig.S().column_vector();
    let vecs = eig.U();
    let theta = (0..m).map(|j| s[p - 1 - j]).collect();
    let y = Mat::from_fn(p, m, |i, j| vecs[(i, p - 1 - j)]);
    (theta, y)
}

fn scale_rows(a: &[f64], x: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| a[i] * x[(i, j)])
}

fn col(m: &Mat<f64>, j: usize) -> &[f64] {
    m.col(j).try_as_col_major().expect("contiguous column").as_slice()
}

fn a_dot(a: &[f64], x: &[f64], y: &[f64]) -> f64 {
    a.iter().zip(x).zip(y).map(|((w, p), q)| w * p * q).sum()
}

fn a_norm(a: &[f64], x: &[f64]) -> f64 {
    a_dot(a, x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{grid, icosphere};
    use crate::mesh::TriMesh;
    use crate::spectral::assemble_cotan;

    fn check_basis(op: &CotanOperator, b: &SpectralBasis) {
        let n = op.n();
        let mut wx = vec![0.0; n];
        for j in 0..b.k() {
            let x: Vec<f64> = (0..n).map(|i| b.phi()[(i, j)]).collect();
            op.stiffness.mul_vec(&x, &mut wx);
            let res: f64 = (0..n).map(|i| (wx[i] - b.lambda()[j] * op.mass[i] * x[i]).powi(2)).sum::<f64>().sqrt();
            let wn: f64 = wx.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * wn || (b.lambda()[j] == 0.0 && res < 1e-12), "mode {j}: {res} vs {wn}");
            for l in 0..b.k() {
                let y: Vec<f64> = (0..n).map(|i| b.phi()[(i, l)]).collect();
                let g = b.inner(&x, &y);
                let want = if j == l { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "gram ({j},{l}) = {g}");
            }
        }
        for w in b.lambda().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn sphere_spectrum_both_paths() {
        let op = assemble_cotan(&icosphere(3)).unwrap();
        for method in [EigenMethod::Dense, EigenMethod::ShiftInvert] {
            let opts = EigenOptions { method, ..Default::default() };
            let b = eigenbasis_with(&op, 16, &opts).unwrap();
            check_basis(&op, &b);
            let l = b.lambda();
            assert_eq!(l[0], 0.0);
            for i in 1..4 {
                assert!((l[i] - 2.0).abs() < 0.2, "{l:?}");
            }
            for i in 4..9 {
                assert!((l[i] - 6.0).abs() < 0.6, "{l:?}");
            }
            for i in 9..16 {
                assert!((l[i] - 12.0).abs() < 1.2, "{l:?}");
            }
        }
    }

    #[test]
    fn iterative_matches_dense() {
        let op = assemble_cotan(&grid(13, 11, 1.3, 1.0)).unwrap();
        let k = 40;
        let d = eigenbasis_with(&op, k, &EigenOptions { method: EigenMethod::Dense, ..Default::default() }).unwrap();
        let s =
            eigenbasis_with(&op, k, &EigenOptions { method: EigenMethod::ShiftInvert, ..Default::default() }).unwrap();
        check_basis(&op, &s);
        for j in 0..k {
            let rel = (d.lambda()[j] - s.lambda()[j]).abs() / d.lambda()[j].max(1.0);
            assert!(rel < 1e-6, "mode {j}: {} vs {}", d.lambda()[j], s.lambda()[j]);
        }
        // simple eigenvalues: same vector up to sign (symmetric shapes can tie
        // on the largest entry)
        for j in 1..k {
            let gap = (d.lambda()[j] - d.lambda()[j - 1]).abs().min(if j + 1 < k {
                (d.lambda()[j + 1] - d.lambda()[j]).abs()
            } else {
                f64::INFINITY
            });
            if gap < 1e-3 * d.lambda()[j] {
                continue;
            }
            let x: Vec<f64> = (0..op.n()).map(|i| d.phi()[(i, j)]).collect();
            let y: Vec<f64> = (0..op.n()).map(|i| s.phi()[(i, j)]).collect();
            assert!((d.inner(&x, &y).abs() - 1.0).abs() < 1e-6, "mode {j}");
        }
    }

    #[test]
    fn full_spectrum_reconstructs() {
        let mesh = grid(5, 4, 1.0, 0.7);
        let op = assemble_cotan(&mesh).unwrap();
        let b = eigenbasis(&op, op.n() - 1).unwrap();
        check_basis(&op, &b);
        assert!(matches!(eigenbasis(&op, op.n()), Err(SpectralError::KTooLarge { .. })));
    }

    #[test]
    fn kernel_per_component() {
        let a = grid(6, 6, 1.0, 1.0);
        let mut verts = a.vertices().to_vec();
        let mut faces = a.faces().to_vec();
        let off = verts.len();
        verts.extend(a.vertices().iter().map(|v| [v[0] + 3.0, v[1], v[2]]));
        faces.extend(a.faces().iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        let mesh = TriMesh::<f64>::new(verts, faces).unwrap();
        let op = assemble_cotan(&mesh).unwrap();
        let b =
            eigenbasis_with(&op, 6, &EigenOptions { method: EigenMethod::ShiftInvert, ..Default::default() }).unwrap();
        assert_eq!(&b.lambda()[..2], &[0.0, 0.0]);
        assert!(b.lambda()[2] > 1.0);
        check_basis(&op, &b);
    }
}
