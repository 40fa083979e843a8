mod common;

use std::sync::OnceLock;

use common::{max_dist, mean_dist, rig_of, rows3};
use rig_spectra::fixtures::{generate, Fixture, FixtureSpec};
use rig_spectra::fmap::{FunctionalMap, PointToPointMap};
use rig_spectra::mesh::zip_landmarks;
use rig_spectra::pipeline::{
    compute_basis, estimate_map, fit_regressor, transfer_rig, transfer_rig_with_bases, PipelineConfig, Rig,
};
use rig_spectra::regressor::{to_spectral, SkinWeights};
use rig_spectra::spectral::points_to_mat;
use rig_spectra::transfer::{
    transfer_skeleton, transfer_skeleton_pointwise, transfer_skinning, Pullback, SkinningQuery, TransferError,
};
use rig_spectra::SpectralBasis;

/// Two independent meshings of the rest arm with bases and the map between them.
struct ArmPair {
    src: Fixture,
    tgt: Fixture,
    rig: Rig,
    sb: SpectralBasis,
    tb: SpectralBasis,
    map: FunctionalMap,
}

fn arm_pair() -> &'static ArmPair {
    static P: OnceLock<ArmPair> = OnceLock::new();
    P.get_or_init(|| {
        let cfg = PipelineConfig::default();
        let src = generate(&FixtureSpec::arm(2)).unwrap();
        let tgt = generate(&FixtureSpec::arm(2).with_seed(1)).unwrap();
        let sb = compute_basis(&src.mesh, &cfg, None).unwrap();
        let tb = compute_basis(&tgt.mesh, &cfg, None).unwrap();
        let lm = zip_landmarks(&src.landmarks, &tgt.landmarks).unwrap();
        let map = estimate_map(&sb, &tb, &lm, &cfg).unwrap();
        let rig = rig_of(&src);
        ArmPair { src, tgt, rig, sb, tb, map }
    })
}

fn max_row_defect(w: &SkinWeights) -> f64 {
    (0..w.n_vertices())
        .map(|i| {
            let row = w.row(i);
            let neg = row.iter().map(|&(_, v)| (-v).max(0.0)).fold(0.0, f64::max);
            neg.max((row.iter().map(|&(_, v)| v).sum::<f64>() - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn map_is_oriented_from_target_to_rig() {
    let p = arm_pair();
    assert_eq!(p.map.source_id, p.tb.mesh_id());
    assert_eq!(p.map.target_id, p.sb.mesh_id());
}

#[test]
fn functional_and_pointwise_agree_on_a_remeshing() {
    let p = arm_pair();
    let cfg = PipelineConfig::default();
    let lm = zip_landmarks(&p.src.landmarks, &p.tgt.landmarks).unwrap();
    let out = transfer_rig_with_bases(&p.rig, &p.sb, &p.tgt.mesh, &p.tb, &lm, &cfg, None).unwrap();
    let pointwise = out.pointwise.unwrap();
    let bbox = p.src.bbox_diagonal();
    assert!(mean_dist(&out.functional.joints, &pointwise.joints) < 0.03 * bbox);
    assert!(max_dist(&out.functional.joints, p.tgt.skeleton.joints()) < 0.03 * bbox);
    // Constants survive the map, so each row of R̂C sums close to one.
    for s in &out.functional.row_sums {
        assert!((s - 1.0).abs() < 0.05, "{s}");
    }
}

#[test]
fn swapped_map_is_an_orientation_mismatch() {
    let p = arm_pair();
    let regressor = fit_regressor(&p.rig, &PipelineConfig::default()).unwrap();
    let spectral = to_spectral(&regressor, &p.sb).unwrap().truncated(p.map.target_k);
    let swapped = FunctionalMap::new(p.map.c.clone(), p.map.target_id, p.map.source_id);
    let err = transfer_skeleton(&spectral, &swapped, &p.tb, &p.tgt.mesh).unwrap_err();
    assert!(matches!(err, TransferError::OrientationMismatch { .. }), "{err}");
    let err = transfer_skinning(&p.sb, &p.tb, &swapped, &p.src.weights, &p.tgt.mesh, SkinningQuery::default());
    assert!(matches!(err, Err(TransferError::OrientationMismatch { .. })));
}

#[test]
fn transferred_skinning_rows_are_stochastic() {
    let p = arm_pair();
    for query in [SkinningQuery::TargetToSource, SkinningQuery::SourceToTarget] {
        let w = transfer_skinning(&p.sb, &p.tb, &p.map, &p.src.weights, &p.tgt.mesh, query).unwrap();
        assert_eq!((w.n_vertices(), w.n_joints()), (p.tgt.mesh.n_vertices(), p.src.weights.n_joints()));
        assert!(max_row_defect(&w) < 1e-9, "{query:?}");
    }
}

#[test]
fn identity_pullback_reproduces_the_fitted_joints() {
    let f = generate(&FixtureSpec::arm(1)).unwrap();
    let r = fit_regressor(&rig_of(&f), &PipelineConfig::default()).unwrap();
    let fitted = rows3(&r.apply(&points_to_mat(f.mesh.vertices())).unwrap());
    let id = PointToPointMap::identity(f.mesh.n_vertices());
    for mode in [Pullback::PreimageMean, Pullback::Direct] {
        let t = transfer_skeleton_pointwise(&r, &id, &f.mesh, &f.mesh, mode).unwrap();
        assert!(max_dist(&t.joints, &fitted) < 1e-12, "{mode:?}");
    }
}

#[test]
fn cached_transfer_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let src = generate(&FixtureSpec::arm(0)).unwrap();
    let tgt = generate(&FixtureSpec::arm(0).with_seed(2)).unwrap();
    let lm = zip_landmarks(&src.landmarks, &tgt.landmarks).unwrap();
    let cfg = PipelineConfig { k_init: 10, k_final: 30, ..PipelineConfig::default() };
    let first = transfer_rig(&rig_of(&src), &tgt.mesh, &lm, &cfg, Some(dir.path())).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    let second = transfer_rig(&rig_of(&src), &tgt.mesh, &lm, &cfg, Some(dir.path())).unwrap();
    assert_eq!(first.functional.joints, second.functional.joints);
    assert_eq!(first.map.c, second.map.c);
}
