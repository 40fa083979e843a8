//! Fitting the spatial regressor.
//!
//! The energy is quadratic and separable over joints:
//!
//! `E = ω_rec‖RX − J‖² + ω_loc‖(1−F)⊙R‖² + ω_spa‖(1−F)⊙R‖² + ω_con‖R1 − 1‖²`
//!
//! (`‖R⊙F − R‖` equals `‖(1−F)⊙R‖`, so the locality and sparsity terms act
//! on the same entries and their weights add.) Three solvers minimize it row
//! by row from `R₀ = F / rowsum(F)`: conjugate gradients, Adam, and a direct
//! solve of the normal equations.

use faer::Mat;
use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use super::{check_dim, Mask, RegressorError, Skeleton, SpatialRegressor};
use crate::mesh::TriMesh;
use crate::scalar::Scalar;
use crate::spectral::points_to_mat;

/// Energy weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightsConfig {
    pub rec: f64,
    pub loc: f64,
    pub spa: f64,
    pub con: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig { rec: 1.0, loc: 1e4, spa: 100.0, con: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Conjugate gradients on the exact quadratic.
    Cg,
    /// Adam on a per-row rescaled parametrization.
    Adam,
    /// Closed-form normal equations.
    Direct,
}

impl std::str::FromStr for Solver {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cg" => Ok(Solver::Cg),
            "adam" => Ok(Solver::Adam),
            "direct" => Ok(Solver::Direct),
            _ => Err(format!("unknown solver '{s}' (expected cg, adam or direct)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptConfig {
    pub solver: Solver,
    pub lr: f64,
    pub iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of Adam iterations spent ramping the step size up.
    pub warmup: f64,
    /// Relative gradient norm at which conjugate gradients stops.
    pub tol: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            solver: Solver::Cg,
            lr: 0.1,
            iters: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup: 0.05,
            tol: 1e-13,
        }
    }
}

/// Weighted energy terms; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub rec: f64,
    pub loc: f64,
    pub spa: f64,
    pub con: f64,
    pub total: f64,
}

impl std::ops::Add for EnergyBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        EnergyBreakdown {
            rec: self.rec + o.rec,
            loc: self.loc + o.loc,
            spa: self.spa + o.spa,
            con: self.con + o.con,
            total: self.total + o.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub solver: Solver,
    pub initial: EnergyBreakdown,
    pub final_energy: EnergyBreakdown,
    /// Total energy after each iteration, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Energy terms of `r` (`Q × n`) for coordinates `x` (`n × 3`) and joints
/// `j` (`Q × 3`).
pub fn energy_terms(r: &Mat<f64>, x: &Mat<f64>, j: &Mat<f64>, mask: &Mask, w: &WeightsConfig) -> EnergyBreakdown {
    let p = Problem::new(x, w);
    (0..r.nrows())
        .map(|q| {
            let row: Vec<f64> = (0..r.ncols()).map(|i| r[(q, i)]).collect();
            p.energy(&row, &[j[(q, 0)], j[(q, 1)], j[(q, 2)]], mask.row(q))
        })
        .fold(EnergyBreakdown::default(), |a, b| a + b)
}

/// Fits `R` so that `RX` reproduces the skeleton's joints.
pub fn fit_spatial_regressor<T: Scalar>(
    mesh: &TriMesh<T>,
    skeleton: &Skeleton,
    mask: &Mask,
    weights: &WeightsConfig,
    opt: &OptConfig,
) -> Result<SpatialRegressor, RegressorError> {
    check_dim("mask rows", skeleton.len(), mask.n_joints())?;
    check_dim("mask columns", mesh.n_vertices(), mask.n_vertices())?;
    validate(weights, opt)?;
    let x = points_to_mat(mesh.vertices());
    let p = Problem::new(&x, weights);
    let rows: Vec<RowFit> = (0..skeleton.len())
        .into_par_iter()
        .map(|q| {
            let support = mask.support(q) as f64;
            let r0: Vec<f64> = mask.row(q).iter().map(|&b| if b { 1.0 / support } else { 0.0 }).collect();
            p.fit_row(r0, &skeleton.joint(q), mask.row(q), opt)
        })
        .collect::<Result<_, _>>()?;

    let n = mesh.n_vertices();
    let mut r = Mat::zeros(skeleton.len(), n);
    let mut initial = EnergyBreakdown::default();
    let mut final_energy = EnergyBreakdown::default();
    let len = rows.iter().map(|f| f.history.len()).max().unwrap_or(1);
    let mut history = vec![0.0; len];
    let mut iterations = 0;
    for (q, fit) in rows.iter().enumerate() {
        for i in 0..n {
            r[(q, i)] = fit.r[i];
        }
        initial = initial + fit.initial;
        final_energy = final_energy + fit.final_energy;
        for (t, h) in history.iter_mut().enumerate() {
            *h += fit.history[t.min(fit.history.len() - 1)];
        }
        iterations = iterations.max(fit.iterations);
    }
    log::debug!(
        "regressor fit ({:?}): energy {:e} -> {:e} in {iterations} iterations",
        opt.solver,
        initial.total,
        final_energy.total
    );
    Ok(SpatialRegressor {
        r,
        mask: mask.clone(),
        mesh_id: mesh.content_hash(),
        diagnostics: Some(FitDiagnostics { solver: opt.solver, initial, final_energy, history, iterations }),
    })
}

fn validate(w: &WeightsConfig, opt: &OptConfig) -> Result<(), RegressorError> {
    for (name, v) in [("rec", w.rec), ("loc", w.loc), ("spa", w.spa), ("con", w.con)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(RegressorError::InvalidConfig(format!("weight {name} = {v}")));
        }
    }
    if !(opt.lr > 0.0 && opt.lr.is_finite()) {
        return Err(RegressorError::InvalidConfig(format!("learning rate {}", opt.lr)));
    }
    if !(0.0..1.0).contains(&opt.beta1) || !(0.0..1.0).contains(&opt.beta2) {
        return Err(RegressorError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
    }
    Ok(())
}

struct RowFit {
    r: Vec<f64>,
    initial: EnergyBreakdown,
    final_energy: EnergyBreakdown,
    history: Vec<f64>,
    iterations: usize,
}

/// Shared per-row data: coordinates in column form and the weights.
struct Problem<'a> {
    cols: [Vec<f64>; 3],
    w: &'a WeightsConfig,
}

impl<'a> Problem<'a> {
    fn new(x: &Mat<f64>, w: &'a WeightsConfig) -> Self {
        let col = |c: usize| (0..x.nrows()).map(|i| x[(i, c)]).collect();
        Problem { cols: [col(0), col(1), col(2)], w }
    }

    fn n(&self) -> usize {
        self.cols[0].len()
    }

    /// `(rX, Σr)` for one row.
    fn moments(&self, r: &[f64]) -> ([f64; 3], f64) {
        let mut m = [0.0; 3];
        let mut s = 0.0;
        for (i, &v) in r.iter().enumerate() {
            m[0] += v * self.cols[0][i];
            m[1] += v * self.cols[1][i];
            m[2] += v * self.cols[2][i];
            s += v;
        }
        (m, s)
    }

    fn energy(&self, r: &[f64], j: &[f64; 3], mask: &[bool]) -> EnergyBreakdown {
        let (m, s) = self.moments(r);
        let rec = self.w.rec * (0..3).map(|c| (m[c] - j[c]).powi(2)).sum::<f64>();
        let out: f64 = r.iter().zip(mask).filter(|(_, &f)| !f).map(|(v, _)| v * v).sum();
        let loc = self.w.loc * out;
        let spa = self.w.spa * out;
        let con = self.w.con * (s - 1.0).powi(2);
        EnergyBreakdown { rec, loc, spa, con, total: rec + loc + spa + con }
    }

    /// Gradient of the row energy into `g`.
    fn gradient(&self, r: &[f64], j: &[f64; 3], mask: &[bool], g: &mut [f64]) {
        let (m, s) = self.moments(r);
        let d = [2.0 * self.w.rec * (m[0] - j[0]), 2.0 * self.w.rec * (m[1] - j[1]), 2.0 * self.w.rec * (m[2] - j[2])];
        let dc = 2.0 * self.w.con * (s - 1.0);
        let pen = 2.0 * (self.w.loc + self.w.spa);
        for i in 0..r.len() {
            let mut v = d[0] * self.cols[0][i] + d[1] * self.cols[1][i] + d[2] * self.cols[2][i] + dc;
            if !mask[i] {
                v += pen * r[i];
            }
            g[i] = v;
        }
    }

    /// Hessian-vector product (the energy is quadratic).
    fn hessian(&self, p: &[f64], mask: &[bool], out: &mut [f64]) {
        self.gradient(p, &[0.0; 3], mask, out);
        let dc = 2.0 * self.w.con;
        for v in out.iter_mut() {
            *v += dc;
        }
    }

    fn fit_row(&self, r0: Vec<f64>, j: &[f64; 3], mask: &[bool], opt: &OptConfig) -> Result<RowFit, RegressorError> {
        let initial = self.energy(&r0, j, mask);
        let (r, history) = match opt.solver {
            Solver::Cg => self.cg(r0, j, mask, opt, initial.total)?,
            Solver::Adam => self.adam(r0, j, mask, opt, initial.total)?,
            Solver::Direct => {
                let r = self.direct(j, mask);
                let e = self.energy(&r, j, mask).total;
                (r, vec![initial.total, e])
            }
        };
        let final_energy = self.energy(&r, j, mask);
        Ok(RowFit { r, initial, final_energy, iterations: history.len() - 1, history })
    }

    fn cg(
        &self,
        mut r: Vec<f64>,
        j: &[f64; 3],
        mask: &[bool],
        opt: &OptConfig,
        e0: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), RegressorError> {
        let n = self.n();
        let mut g = vec![0.0; n];
        self.gradient(&r, j, mask, &mut g);
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut hd = vec![0.0; n];
        let mut step = vec![0.0; n];
        let mut gg: f64 = g.iter().map(|v| v * v).sum();
        let g0 = gg.sqrt();
        // Upper bound on the Hessian's norm. Within a mask support the
        // Hessian has rank at most four, so once the residual reaches
        // rounding level the search directions fall into its null space;
        // curvature below this scale is noise and would send `r` off along
        // directions the energy cannot see.
        let h_norm = 2.0
            * (self.w.rec * self.cols.iter().flatten().map(|v| v * v).sum::<f64>()
                + self.w.con * n as f64
                + self.w.loc
                + self.w.spa);
        let mut best = e0;
        let mut history = vec![e0];
        for it in 0..opt.iters {
            if gg.sqrt() <= opt.tol * g0 || gg == 0.0 {
                break;
            }
            self.hessian(&d, mask, &mut hd);
            let dhd: f64 = d.iter().zip(&hd).map(|(a, b)| a * b).sum();
            let dd: f64 = d.iter().map(|v| v * v).sum();
            if dhd <= 64.0 * f64::EPSILON * h_norm * dd {
                break;
            }
            let alpha = gg / dhd;
            step.copy_from_slice(&d);
            for i in 0..n {
                r[i] += alpha * d[i];
                g[i] += alpha * hd[i];
            }
            let gg_new: f64 = g.iter().map(|v| v * v).sum();
            let beta = gg_new / gg;
            for i in 0..n {
                d[i] = -g[i] + beta * d[i];
            }
            gg = gg_new;
            let e = self.energy(&r, j, mask).total;
            if !e.is_finite() {
                return Err(RegressorError::NonFinite { iteration: it + 1 });
            }
            if e > best {
                // Exact CG never raises a quadratic; this step was rounding.
                for i in 0..n {
                    r[i] -= alpha * step[i];
                }
                break;
            }
            best = e;
            history.push(e);
        }
        Ok((r, history))
    }

    /// Adam on `u = r / s` with `s = 1 / |support|`, so that a unit step in
    /// `u` is a relative change of the initial weights. The step size ramps
    /// up linearly during warmup and then follows a cosine decay; the best
    /// iterate is returned.
    fn adam(
        &self,
        r0: Vec<f64>,
        j: &[f64; 3],
        mask: &[bool],
        opt: &OptConfig,
        e0: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), RegressorError> {
        let n = self.n();
        let support = mask.iter().filter(|&&b| b).count().max(1) as f64;
        let s = 1.0 / support;
        let mut u: Vec<f64> = r0.iter().map(|v| v / s).collect();
        let mut r = r0;
        let (mut m, mut v, mut g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let warm = ((opt.iters as f64 * opt.warmup).ceil() as usize).max(1);
        // Adam's normalized steps jitter around an optimum even when the
        // gradient vanishes, so growth is only called divergence once it
        // exceeds the energy of a 1e-3 relative coordinate error.
        let unit = self.w.rec * self.cols.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64 + self.w.con;
        let floor = 1e-6 * unit;
        let mut best = (e0, r.clone());
        let mut history = vec![e0];
        for t in 1..=opt.iters {
            self.gradient(&r, j, mask, &mut g);
            let lr = if t <= warm {
                opt.lr * t as f64 / warm as f64
            } else {
                let p = (t - warm) as f64 / (opt.iters - warm).max(1) as f64;
                opt.lr * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
            };
            let c1 = 1.0 - opt.beta1.powi(t as i32);
            let c2 = 1.0 - opt.beta2.powi(t as i32);
            for i in 0..n {
                let gu = s * g[i];
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gu;
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gu * gu;
                u[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + opt.eps);
                r[i] = s * u[i];
            }
            let e = self.energy(&r, j, mask).total;
            if !e.is_finite() {
                return Err(RegressorError::NonFinite { iteration: t });
            }
            history.push(e);
            if e < best.0 {
                best = (e, r.clone());
            } else if e > 10.0 * best.0.max(floor) {
                return Err(RegressorError::Divergence { iteration: t, energy: e, best: best.0 });
            }
        }
        Ok((best.1, history))
    }

    /// Minimizer of `E + δ‖r‖²` for a tiny ridge `δ`, in closed form through
    /// a 4 × 4 system: `r = S Bᵀ (δI + B S Bᵀ)⁻¹ y`.
    fn direct(&self, j: &[f64; 3], mask: &[bool]) -> Vec<f64> {
        let n = self.n();
        let pen = self.w.loc + self.w.spa;
        let (sr, sc) = (self.w.rec.sqrt(), self.w.con.sqrt());
        let b_row = |k: usize, i: usize| if k < 3 { sr * self.cols[k][i] } else { sc };
        let mut scale_total = 0.0;
        for i in 0..n {
            for k in 0..4 {
                scale_total += b_row(k, i).powi(2);
            }
        }
        let delta = 1e-13 * scale_total.max(f64::MIN_POSITIVE);
        let s: Vec<f64> = mask.iter().map(|&f| if f { 1.0 } else { delta / (pen + delta) }).collect();
        let mut m = Matrix4::<f64>::identity() * delta;
        for i in 0..n {
            for a in 0..4 {
                for b in 0..4 {
                    m[(a, b)] += s[i] * b_row(a, i) * b_row(b, i);
                }
            }
        }
        let y = Vector4::new(sr * j[0], sr * j[1], sr * j[2], sc);
        let z = m
            .cholesky()
            .map(|c| c.solve(&y))
            .unwrap_or_else(|| m.try_inverse().map(|inv| inv * y).unwrap_or_else(Vector4::zeros));
        (0..n).map(|i| s[i] * (0..4).map(|k| b_row(k, i) * z[k]).sum::<f64>()).collect()
    }
}
