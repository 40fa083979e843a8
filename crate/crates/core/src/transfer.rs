//! Moving a rig from a source shape `M` to a target shape `N`.
//!
//! The functional map consumed here takes coefficients of the target
//! (unrigged) shape to coefficients of the source (rigged) shape: it is
//! `k_M × k_N`, its `source_id` is the hash of `N` and its `target_id` the
//! hash of `M`. With that orientation the transferred skeleton is
//! `J_N = R̂ C X̂_N`, and with `N = M`, `C = I` it reduces to `R·lowpass(X_M)`.

use faer::Mat;

use crate::fmap::{FunctionalMap, PointToPointMap};
use crate::knn::KdTree;
use crate::mesh::{MeshId, TriMesh};
use crate::regressor::{SkinWeights, SpatialRegressor, SpectralRegressor};
use crate::spectral::{points_to_mat, SpectralBasis};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransferError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("orientation mismatch: {what} expects mesh {expected} but got {got}")]
    OrientationMismatch { what: &'static str, expected: MeshId, got: MeshId },
    #[error("joint {joint} has no matched vertices in its support")]
    UnmatchedRegion { joint: usize },
    #[error("transferred joints are not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMethod {
    Functional,
    Pointwise,
}

impl std::fmt::Display for TransferMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransferMethod::Functional => "functional",
            TransferMethod::Pointwise => "pointwise",
        })
    }
}

impl std::str::FromStr for TransferMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "functional" => Ok(TransferMethod::Functional),
            "pointwise" => Ok(TransferMethod::Pointwise),
            _ => Err(format!("unknown transfer method '{s}' (expected functional or pointwise)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub joints: Vec<[f64; 3]>,
    pub method: TransferMethod,
    /// Per joint, the Euclidean norm of the row of the operator applied to
    /// the target coordinates (`R̂C` or `R`).
    pub row_norms: Vec<f64>,
    /// Per joint, the weight that operator gives to constant functions;
    /// one for a translation-equivariant transfer.
    pub row_sums: Vec<f64>,
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), TransferError> {
    if expected == got {
        Ok(())
    } else {
        Err(TransferError::DimensionMismatch { what, expected, got })
    }
}

fn check_id(what: &'static str, expected: MeshId, got: MeshId) -> Result<(), TransferError> {
    if expected == got {
        Ok(())
    } else {
        Err(TransferError::OrientationMismatch { what, expected, got })
    }
}

fn finite(joints: Vec<[f64; 3]>) -> Result<Vec<[f64; 3]>, TransferError> {
    if joints.iter().flatten().all(|v| v.is_finite()) {
        Ok(joints)
    } else {
        Err(TransferError::NonFinite)
    }
}

fn rows(m: &Mat<f64>) -> Vec<[f64; 3]> {
    (0..m.nrows()).map(|q| [m[(q, 0)], m[(q, 1)], m[(q, 2)]]).collect()
}

/// `J_N = R̂ C X̂_N`.
pub fn transfer_skeleton(
    r_hat: &SpectralRegressor,
    c: &FunctionalMap,
    tgt_basis: &SpectralBasis,
    tgt_mesh: &TriMesh,
) -> Result<TransferResult, TransferError> {
    check_id("functional map source", tgt_basis.mesh_id(), c.source_id)?;
    check_id("functional map target", r_hat.basis_id, c.target_id)?;
    check_id("target basis", tgt_mesh.content_hash(), tgt_basis.mesh_id())?;
    check_dim("functional map rows", r_hat.k(), c.target_k)?;
    if c.source_k > tgt_basis.k() {
        return Err(TransferError::DimensionMismatch {
            what: "target basis modes",
            expected: c.source_k,
            got: tgt_basis.k(),
        });
    }
    let x_hat = tgt_basis.project_first(c.source_k, &points_to_mat(tgt_mesh.vertices())).map_err(|_| {
        TransferError::DimensionMismatch {
            what: "target vertices",
            expected: tgt_basis.n(),
            got: tgt_mesh.n_vertices(),
        }
    })?;
    let op = &r_hat.r_hat * &c.c;
    let joints = finite(rows(&(&op * &x_hat)))?;

    // Constant functions have coefficients e₁·√area on a connected mesh.
    let ones = Mat::<f64>::from_fn(tgt_basis.n(), 1, |_, _| 1.0);
    let one_hat = tgt_basis.project_first(c.source_k, &ones).expect("rows match");
    let sums = &op * &one_hat;
    Ok(TransferResult {
        joints,
        method: TransferMethod::Functional,
        row_norms: (0..op.nrows()).map(|q| op.row(q).norm_l2()).collect(),
        row_sums: (0..op.nrows()).map(|q| sums[(q, 0)]).collect(),
    })
}

/// How the pointwise baseline moves target coordinates onto the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pullback {
    /// `p2p` sends target vertices to source vertices; each source vertex
    /// takes the mean of its preimages and holes are filled from the 1-ring.
    #[default]
    PreimageMean,
    /// `p2p` sends source vertices to target vertices; each source vertex
    /// copies the coordinates of its image.
    Direct,
}

/// Pointwise baseline: pulls the target coordinates onto the source
/// connectivity through `p2p` and applies the spatial regressor.
pub fn transfer_skeleton_pointwise(
    r: &SpatialRegressor,
    p2p: &PointToPointMap,
    src_mesh: &TriMesh,
    tgt_mesh: &TriMesh,
    mode: Pullback,
) -> Result<TransferResult, TransferError> {
    check_id("spatial regressor", src_mesh.content_hash(), r.mesh_id)?;
    let n_src = src_mesh.n_vertices();
    check_dim("regressor columns", n_src, r.n_vertices())?;
    let tv = tgt_mesh.vertices();
    let (y, filled) = match mode {
        Pullback::Direct => {
            check_dim("point map length", n_src, p2p.len())?;
            PointToPointMap::new(p2p.assignment.clone(), tv.len()).map_err(|_| TransferError::DimensionMismatch {
                what: "point map range",
                expected: tv.len(),
                got: p2p.assignment.iter().max().map_or(0, |m| m + 1),
            })?;
            (p2p.assignment.iter().map(|&j| tv[j]).collect::<Vec<_>>(), vec![true; n_src])
        }
        Pullback::PreimageMean => {
            check_dim("point map length", tv.len(), p2p.len())?;
            PointToPointMap::new(p2p.assignment.clone(), n_src).map_err(|_| TransferError::DimensionMismatch {
                what: "point map range",
                expected: n_src,
                got: p2p.assignment.iter().max().map_or(0, |m| m + 1),
            })?;
            let mut acc = vec![[0.0f64; 3]; n_src];
            let mut count = vec![0usize; n_src];
            for (j, &i) in p2p.assignment.iter().enumerate() {
                for d in 0..3 {
                    acc[i][d] += tv[j][d];
                }
                count[i] += 1;
            }
            let mut vals: Vec<Option<Vec<f64>>> = acc
                .iter()
                .zip(&count)
                .map(|(a, &c)| (c > 0).then(|| a.iter().map(|v| v / c as f64).collect()))
                .collect();
            fill_from_neighbors(&src_mesh.vertex_neighbors(), &mut vals);
            let filled: Vec<bool> = vals.iter().map(Option::is_some).collect();
            let y = vals.into_iter().map(|v| v.map_or([0.0; 3], |v| [v[0], v[1], v[2]])).collect();
            (y, filled)
        }
    };

    let q = r.n_joints();
    let mut joints = vec![[0.0; 3]; q];
    let mut row_norms = vec![0.0; q];
    let mut row_sums = vec![0.0; q];
    for (jq, joint) in joints.iter_mut().enumerate() {
        let total: f64 = (0..n_src).map(|i| r.r[(jq, i)]).sum();
        let kept: f64 = (0..n_src).filter(|&i| filled[i]).map(|i| r.r[(jq, i)]).sum();
        let support_filled = (0..n_src).any(|i| r.mask.get(jq, i) && filled[i]);
        if !support_filled || kept == 0.0 {
            return Err(TransferError::UnmatchedRegion { joint: jq });
        }
        // Weight lost to unfilled vertices is redistributed proportionally.
        let scale = if filled.iter().all(|&f| f) { 1.0 } else { total / kept };
        for i in (0..n_src).filter(|&i| filled[i]) {
            let w = r.r[(jq, i)] * scale;
            for d in 0..3 {
                joint[d] += w * y[i][d];
            }
            row_norms[jq] += w * w;
            row_sums[jq] += w;
        }
        row_norms[jq] = row_norms[jq].sqrt();
    }
    Ok(TransferResult { joints: finite(joints)?, method: TransferMethod::Pointwise, row_norms, row_sums })
}

/// Fills `None` entries with the mean of their already-filled neighbours,
/// one ring at a time, until nothing changes.
fn fill_from_neighbors(nb: &[Vec<usize>], vals: &mut [Option<Vec<f64>>]) {
    loop {
        let updates: Vec<(usize, Vec<f64>)> = (0..vals.len())
            .filter(|&i| vals[i].is_none())
            .filter_map(|i| {
                let known: Vec<&Vec<f64>> = nb[i].iter().filter_map(|&j| vals[j].as_ref()).collect();
                let first = known.first()?;
                let mut m = vec![0.0; first.len()];
                for v in &known {
                    for (a, b) in m.iter_mut().zip(v.iter()) {
                        *a += b;
                    }
                }
                m.iter_mut().for_each(|a| *a /= known.len() as f64);
                Some((i, m))
            })
            .collect();
        if updates.is_empty() {
            return;
        }
        for (i, v) in updates {
            vals[i] = Some(v);
        }
    }
}

/// Direction of the nearest-neighbour search in skinning transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkinningQuery {
    /// Every target vertex copies the weights of the nearest point of the
    /// low-pass target geometry carried by the source connectivity.
    #[default]
    TargetToSource,
    /// Every source vertex sends its weights to the nearest target vertex;
    /// targets average what they receive and holes are filled from the 1-ring.
    SourceToTarget,
}

/// Weight transfer by coordinate pullback: `Y = Φ_M C X̂_N` places a
/// low-pass copy of the target on the source connectivity; weights then
/// travel between `Y` and the target vertices by Euclidean nearest
/// neighbours, and rows are renormalized.
pub fn transfer_skinning(
    src_basis: &SpectralBasis,
    tgt_basis: &SpectralBasis,
    c: &FunctionalMap,
    src_weights: &SkinWeights,
    tgt_mesh: &TriMesh,
    query: SkinningQuery,
) -> Result<SkinWeights, TransferError> {
    check_id("functional map source", tgt_basis.mesh_id(), c.source_id)?;
    check_id("functional map target", src_basis.mesh_id(), c.target_id)?;
    check_id("target basis", tgt_mesh.content_hash(), tgt_basis.mesh_id())?;
    check_dim("source weight rows", src_basis.n(), src_weights.n_vertices())?;
    if c.target_k > src_basis.k() || c.source_k > tgt_basis.k() {
        return Err(TransferError::DimensionMismatch {
            what: "basis modes",
            expected: c.target_k.max(c.source_k),
            got: src_basis.k().min(tgt_basis.k()),
        });
    }
    let x_hat = tgt_basis.project_first(c.source_k, &points_to_mat(tgt_mesh.vertices())).expect("rows checked");
    let y = src_basis.phi().subcols(0, c.target_k) * (&c.c * &x_hat);
    let y: Vec<[f64; 3]> = rows(&y);
    let tv = tgt_mesh.vertices();
    let q = src_weights.n_joints();

    let rows: Vec<Vec<(usize, f64)>> = match query {
        SkinningQuery::TargetToSource => {
            let tree = KdTree::from_points(&y);
            tv.iter().map(|p| src_weights.row(tree.nearest(p, None).0).to_vec()).collect()
        }
        SkinningQuery::SourceToTarget => {
            let tree = KdTree::from_points(tv);
            let mut acc: Vec<Option<Vec<f64>>> = vec![None; tv.len()];
            for (i, p) in y.iter().enumerate() {
                let j = tree.nearest(p, None).0;
                let slot = acc[j].get_or_insert_with(|| vec![0.0; q]);
                for &(jq, w) in src_weights.row(i) {
                    slot[jq] += w;
                }
            }
            fill_from_neighbors(&tgt_mesh.vertex_neighbors(), &mut acc);
            acc.into_iter()
                .map(|r| {
                    r.map(|v| v.into_iter().enumerate().filter(|&(_, w)| w > 0.0).collect())
                        .unwrap_or_else(|| vec![(0, 1.0)])
                })
                .collect()
        }
    };
    SkinWeights::normalized(q, rows).map_err(|_| TransferError::NonFinite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::icosphere;
    use crate::regressor::Mask;
    use crate::spectral::mesh_eigenbasis;

    fn sphere_setup() -> (TriMesh, SpectralBasis, SpatialRegressor) {
        let mesh = icosphere(2);
        let basis = mesh_eigenbasis(&mesh, 16).unwrap();
        let n = mesh.n_vertices();
        let mut r = Mat::<f64>::zeros(2, n);
        for i in 0..n {
            r[(0, i)] = 1.0 / n as f64;
        }
        r[(1, 0)] = 0.5;
        r[(1, 1)] = 0.5;
        let reg = SpatialRegressor { r, mask: Mask::full(2, n), mesh_id: mesh.content_hash(), diagnostics: None };
        (mesh, basis, reg)
    }

    #[test]
    fn zero_regressor_puts_joints_at_origin() {
        let (mesh, basis, _) = sphere_setup();
        let r_hat = SpectralRegressor { r_hat: Mat::zeros(3, 16), basis_id: basis.mesh_id() };
        let c = FunctionalMap::identity(16, basis.mesh_id());
        let res = transfer_skeleton(&r_hat, &c, &basis, &mesh).unwrap();
        assert!(res.joints.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn orientation_is_checked() {
        let (mesh, basis, reg) = sphere_setup();
        let r_hat = crate::regressor::to_spectral(&reg, &basis).unwrap();
        let other = icosphere(1).content_hash();
        let c = FunctionalMap::new(Mat::identity(16, 16), other, basis.mesh_id());
        let err = transfer_skeleton(&r_hat, &c, &basis, &mesh).unwrap_err();
        assert!(matches!(err, TransferError::OrientationMismatch { .. }));
        let c = FunctionalMap::identity(12, basis.mesh_id());
        assert!(matches!(transfer_skeleton(&r_hat, &c, &basis, &mesh), Err(TransferError::DimensionMismatch { .. })));
    }

    #[test]
    fn self_transfer_is_low_pass_regression() {
        let (mesh, basis, reg) = sphere_setup();
        let r_hat = crate::regressor::to_spectral(&reg, &basis).unwrap();
        let c = FunctionalMap::identity(16, basis.mesh_id());
        let res = transfer_skeleton(&r_hat, &c, &basis, &mesh).unwrap();
        let x = points_to_mat(mesh.vertices());
        let expect = &reg.r * basis.low_pass(&x).unwrap();
        for q in 0..2 {
            for d in 0..3 {
                assert!((res.joints[q][d] - expect[(q, d)]).abs() < 1e-10);
            }
        }
        assert!((res.row_sums[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pointwise_identity_and_collapse() {
        let (mesh, _, reg) = sphere_setup();
        let n = mesh.n_vertices();
        let res =
            transfer_skeleton_pointwise(&reg, &PointToPointMap::identity(n), &mesh, &mesh, Pullback::PreimageMean)
                .unwrap();
        let direct = reg.apply(&points_to_mat(mesh.vertices())).unwrap();
        for q in 0..2 {
            for d in 0..3 {
                assert!((res.joints[q][d] - direct[(q, d)]).abs() < 1e-14);
            }
        }
        // Everything lands on vertex 5, which takes the target centroid; the
        // hole fill then spreads that point everywhere.
        let p2p = PointToPointMap::new(vec![5; n], n).unwrap();
        let res = transfer_skeleton_pointwise(&reg, &p2p, &mesh, &mesh, Pullback::PreimageMean).unwrap();
        let c = mesh.vertices().iter().fold([0.0; 3], |a, v| [a[0] + v[0], a[1] + v[1], a[2] + v[2]]);
        for (q, j) in res.joints.iter().enumerate() {
            for d in 0..3 {
                assert!((j[d] - res.row_sums[q] * c[d] / n as f64).abs() < 1e-12);
            }
        }
        let res = transfer_skeleton_pointwise(&reg, &p2p, &mesh, &mesh, Pullback::Direct).unwrap();
        let v5 = mesh.vertices()[5];
        for (q, j) in res.joints.iter().enumerate() {
            for d in 0..3 {
                assert!((j[d] - res.row_sums[q] * v5[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fill_reaches_every_connected_vertex() {
        let nb = vec![vec![1], vec![0, 2], vec![1, 3], vec![2], vec![]];
        let mut vals = vec![Some(vec![1.0]), None, None, Some(vec![3.0]), None];
        fill_from_neighbors(&nb, &mut vals);
        assert_eq!(vals[1], Some(vec![1.0]));
        assert_eq!(vals[2], Some(vec![3.0]));
        assert_eq!(vals[4], None);
    }

    #[test]
    fn skinning_self_transfer_keeps_rows() {
        let (mesh, basis, _) = sphere_setup();
        let rows = mesh
            .vertices()
            .iter()
            .map(|v| if v[2] > 0.0 { vec![(0, 1.0)] } else { vec![(0, 0.25), (1, 0.75)] })
            .collect();
        let w = SkinWeights::new(2, rows).unwrap();
        let c = FunctionalMap::identity(16, basis.mesh_id());
        for query in [SkinningQuery::TargetToSource, SkinningQuery::SourceToTarget] {
            let out = transfer_skinning(&basis, &basis, &c, &w, &mesh, query).unwrap();
            assert!(out.rows_equal(&w, 1e-12) as f64 >= 0.9 * mesh.n_vertices() as f64);
            for i in 0..out.n_vertices() {
                let s: f64 = out.row(i).iter().map(|e| e.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
