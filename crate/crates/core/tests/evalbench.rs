mod common;

use common::rig_of;
use faer::Mat;
use rig_spectra::evalbench::{
    joint_error, load_manifest, regressor_diff, run_batch, run_pair, write_fixture_suite, EvalReport, PairInput,
};
use rig_spectra::fixtures::{generate, Fixture, FixtureSpec};
use rig_spectra::mesh::zip_landmarks;
use rig_spectra::pipeline::PipelineConfig;

fn pair(id: &str, src: &Fixture, tgt: &Fixture) -> PairInput {
    PairInput {
        id: id.into(),
        rig: rig_of(src),
        target: tgt.mesh.clone(),
        landmarks: zip_landmarks(&src.landmarks, &tgt.landmarks).unwrap(),
        reference: Some(tgt.skeleton.joints().to_vec()),
    }
}

fn mse(report: &EvalReport, method: &str) -> f64 {
    report.aggregate_for(method).unwrap().mean
}

#[test]
fn joint_error_definition() {
    let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let b = [[0.0, 3.0, 4.0], [1.0, 0.0, 0.0]];
    let e = joint_error(&a, &b).unwrap();
    assert_eq!(e.per_joint, vec![5.0, 0.0]);
    assert_eq!(e.mse, 12.5);
    assert_eq!(joint_error(&a, &a).unwrap().mse, 0.0);
    assert!(joint_error(&a, &b[..1]).is_err());
}

#[test]
fn self_and_remeshed_pairs() {
    let src = generate(&FixtureSpec::arm(2)).unwrap();
    let remesh = generate(&FixtureSpec::arm(2).with_seed(1)).unwrap();
    let cfg = PipelineConfig::default();
    let bbox = src.bbox_diagonal();

    let own = EvalReport::from_entries(run_pair(&pair("self", &src, &src), &cfg, None));
    for method in ["functional", "pointwise"] {
        let m = mse(&own, method);
        assert!(m < (0.02 * bbox).powi(2), "{method}: {m}");
    }

    let other = EvalReport::from_entries(run_pair(&pair("remesh", &src, &remesh), &cfg, None));
    let (f, p) = (mse(&other, "functional"), mse(&other, "pointwise"));
    assert!(f <= 1.2 * p, "functional {f} vs pointwise {p}");
    assert!(other.per_pair.iter().all(|e| e.error.is_none() && e.per_joint_err.len() == 3));
}

#[test]
fn batch_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_fixture_suite(dir.path(), 0).unwrap();
    let pairs = load_manifest(&manifest).unwrap();
    assert_eq!(pairs.len(), 5);
    let cfg = PipelineConfig { k_init: 10, k_final: 40, ..PipelineConfig::default() };
    let one = run_batch(&pairs, &cfg, 1, None).unwrap();
    let mut reversed: Vec<PairInput> = pairs.clone();
    reversed.reverse();
    let rev = run_batch(&reversed, &cfg, 1, None).unwrap();
    let two = run_batch(&pairs, &cfg, 2, None).unwrap();

    let key = |r: &EvalReport| {
        let mut v: Vec<(String, String, f64)> =
            r.per_pair.iter().map(|e| (e.pair_id.clone(), e.method.clone(), e.mse.unwrap())).collect();
        v.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        v
    };
    assert_eq!(key(&one), key(&rev));
    assert_eq!(one.aggregate, rev.aggregate);

    // Thread count changes the summation order inside dense products, so
    // agreement across worker counts is to rounding only.
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for (a, b) in key(&one).iter().zip(key(&two).iter()) {
        assert_eq!((&a.0, &a.1), (&b.0, &b.1));
        assert!(close(a.2, b.2) && (a.2 - b.2).abs() <= 1e-9 * a.2, "{a:?} vs {b:?}");
    }
    for method in ["functional", "pointwise"] {
        let (a, b) = (one.aggregate_for(method).unwrap(), two.aggregate_for(method).unwrap());
        assert_eq!((a.count, a.failures, b.count), (5, 0, 5));
        assert!(close(a.mean, b.mean) && close(a.min, b.min) && close(a.max, b.max));
    }

    let out = dir.path().join("report.json");
    one.save(&out).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["per_pair"].as_array().unwrap().len(), 10);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn regressor_diff_is_elementwise() {
    let a = Mat::from_fn(2, 3, |i, j| (i + j) as f64);
    let b = Mat::from_fn(2, 3, |i, j| -((i * j) as f64));
    let d = regressor_diff(&a, &b).unwrap();
    assert_eq!(d.abs_diff[(1, 2)], 5.0);
    assert_eq!(d.b_sq[(1, 2)], 4.0);
    assert!((d.mean_abs_diff() - (0.0 + 1.0 + 2.0 + 1.0 + 3.0 + 5.0) / 6.0).abs() < 1e-15);
    assert_eq!(regressor_diff(&a, &b).unwrap().mean_abs_diff(), d.mean_abs_diff());
    assert!(regressor_diff(&a, &Mat::zeros(3, 2)).is_err());

    let dir = tempfile::tempdir().unwrap();
    d.save(dir.path(), "x").unwrap();
    let pgm = std::fs::read_to_string(dir.path().join("x_diff.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n12 8\n255\n"));
}
