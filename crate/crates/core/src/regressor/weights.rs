use faer::Mat;

use super::RegressorError;

/// Influences kept per vertex when weights are loaded.
pub const MAX_INFLUENCES: usize = 8;

/// Row-stochastic sparse skinning weights, `n × Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinWeights {
    n_joints: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SkinWeights {
    /// Validates rows of `(joint, weight)` pairs: non-negative, in range,
    /// summing to one within 1e-6.
    pub fn new(n_joints: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self, RegressorError> {
        let mut clean = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let mut row: Vec<(usize, f64)> = row.into_iter().filter(|&(_, w)| w != 0.0).collect();
            row.sort_by_key(|&(q, _)| q);
            let mut sum = 0.0;
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(RegressorError::InvalidWeights(format!("vertex {i}: joint {} repeated", w[0].0)));
                }
            }
            for &(q, w) in &row {
                if q >= n_joints {
                    return Err(RegressorError::InvalidWeights(format!("vertex {i}: joint {q} out of range")));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(RegressorError::InvalidWeights(format!("vertex {i}: weight {w}")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(RegressorError::InvalidWeights(format!("vertex {i}: row sums to {sum}")));
            }
            clean.push(row);
        }
        Ok(SkinWeights { n_joints, rows: clean })
    }

    /// Keeps the [`MAX_INFLUENCES`] largest positive entries of each row
    /// (ties to the lower joint index) and rescales them to sum to one.
    pub fn normalized(n_joints: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self, RegressorError> {
        let mut out = Vec::with_capacity(rows.len());
        for (i, mut row) in rows.into_iter().enumerate() {
            if row.iter().any(|&(_, w)| !w.is_finite() || w < 0.0) {
                return Err(RegressorError::InvalidWeights(format!("vertex {i}: negative or non-finite weight")));
            }
            row.retain(|&(_, w)| w > 0.0);
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(MAX_INFLUENCES);
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            if sum <= 0.0 {
                return Err(RegressorError::InvalidWeights(format!("vertex {i} has no influence")));
            }
            out.push(row.into_iter().map(|(q, w)| (q, w / sum)).collect());
        }
        SkinWeights::new(n_joints, out)
    }

    /// From a dense `n × Q` matrix, keeping the largest influences.
    pub fn from_dense(w: &Mat<f64>) -> Result<Self, RegressorError> {
        let rows = (0..w.nrows())
            .map(|i| (0..w.ncols()).map(|q| (q, w[(i, q)])).filter(|&(_, v)| v != 0.0).collect())
            .collect();
        SkinWeights::normalized(w.ncols(), rows)
    }

    pub fn n_vertices(&self) -> usize {
        self.rows.len()
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, q: usize) -> f64 {
        self.rows[i].iter().find(|&&(j, _)| j == q).map_or(0.0, |&(_, w)| w)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n_vertices(), self.n_joints);
        for (i, row) in self.rows.iter().enumerate() {
            for &(q, w) in row {
                m[(i, q)] = w;
            }
        }
        m
    }

    /// Builds weights whose row `i` copies row `source[i]` of `self`.
    pub fn gather(&self, source: &[usize]) -> SkinWeights {
        SkinWeights { n_joints: self.n_joints, rows: source.iter().map(|&s| self.rows[s].clone()).collect() }
    }

    /// Number of vertices whose rows agree with `other` within `tol`.
    pub fn rows_equal(&self, other: &SkinWeights, tol: f64) -> usize {
        (0..self.n_vertices().min(other.n_vertices()))
            .filter(|&i| (0..self.n_joints).all(|q| (self.get(i, q) - other.get(i, q)).abs() <= tol))
            .count()
    }
}
