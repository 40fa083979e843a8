use rig_spectra::fixtures::{generate, FixtureKind, FixtureSpec};
use rig_spectra::mesh::load_mesh;
use rig_spectra::skinning::{animate, forward_kinematics, lbs_deform, poses_to_json, read_poses, Pose};
use rig_spectra::TriMesh;

fn max_gap(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs())).fold(0.0, f64::max)
}

#[test]
fn posed_fixture_is_lbs_of_its_rest_mesh() {
    for kind in [FixtureKind::TwoBoneArm, FixtureKind::CapsuleHumanoid] {
        let pose = FixtureSpec::bent_pose(kind);
        let f = generate(&FixtureSpec::new(kind, 1).with_pose(pose.clone())).unwrap();
        let tf = forward_kinematics(&f.rest_skeleton, &pose).unwrap();
        let v = lbs_deform(&f.rest_mesh, &f.weights, &tf).unwrap();
        assert!(max_gap(&v, f.mesh.vertices()) < 1e-12, "{kind:?}");
    }
}

#[test]
fn animate_edge_cases() {
    let f = generate(&FixtureSpec::arm(0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let none = animate(&f.mesh, &f.weights, &f.skeleton, &[], dir.path().join("empty")).unwrap();
    assert!(none.is_empty());
    assert_eq!(std::fs::read_dir(dir.path().join("empty")).unwrap().count(), 0);

    let rest = animate(&f.mesh, &f.weights, &f.skeleton, &[Pose::rest_pose(3)], dir.path().join("rest")).unwrap();
    assert_eq!(rest.len(), 1);
    let back: TriMesh = load_mesh(&rest[0]).unwrap();
    assert_eq!(back.faces(), f.mesh.faces());
    assert!(max_gap(back.vertices(), f.mesh.vertices()) < 1e-9);
}

#[test]
fn elbow_sweep_matches_a_planar_rotation() {
    let f = generate(&FixtureSpec::arm(1)).unwrap();
    let e = f.skeleton.joint(1);
    let angles: Vec<f64> = (0..10).map(|i| i as f64 * 0.15).collect();
    let poses: Vec<Pose> =
        angles.iter().map(|&a| Pose::new(vec![[0.0; 3], [0.0, 0.0, a], [0.0; 3]]).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let frames = animate(&f.mesh, &f.weights, &f.skeleton, &poses, dir.path()).unwrap();
    assert_eq!(frames.len(), 10);
    assert!(frames[9].ends_with("frame_00009.obj"));

    // Only the shoulder stays fixed; elbow and wrist both turn about the elbow.
    for (path, a) in frames.iter().zip(&angles) {
        let (s, c) = a.sin_cos();
        let expected: Vec<[f64; 3]> = f
            .mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w0 = f.weights.get(i, 0);
                let (dx, dy) = (v[0] - e[0], v[1] - e[1]);
                let r = [e[0] + c * dx - s * dy, e[1] + s * dx + c * dy, v[2]];
                std::array::from_fn(|k| w0 * v[k] + (1.0 - w0) * r[k])
            })
            .collect();
        let frame: TriMesh = load_mesh(path).unwrap();
        assert!(max_gap(frame.vertices(), &expected) < 1e-10, "angle {a}");
    }
}

#[test]
fn pose_json_round_trips() {
    let poses = vec![
        Pose::new(vec![[0.1, -0.2, 0.3], [0.0; 3]]).unwrap(),
        Pose::new(vec![[0.0; 3], [1.0, 2.0, -0.5]]).unwrap(),
    ];
    let back = read_poses(&poses_to_json(&poses), 2).unwrap();
    assert_eq!(back, poses);
    assert_eq!(read_poses("[[0,0,1],[0,0,0]]", 2).unwrap().len(), 1);
    assert!(read_poses("[[[0,0,1]]]", 2).unwrap_err().contains("frame 0"));
    assert!(read_poses("[[[0,0,\"x\"],[0,0,0]]]", 2).is_err());
}

#[test]
fn large_angles_wrap_without_changing_the_rotation() {
    let f = generate(&FixtureSpec::arm(0)).unwrap();
    let tau = std::f64::consts::TAU;
    let small = Pose::new(vec![[0.0; 3], [0.0, 0.0, 0.7], [0.0; 3]]).unwrap();
    let big = Pose::new(vec![[0.0; 3], [0.0, 0.0, 0.7 + 2.0 * tau], [0.0; 3]]).unwrap();
    let deform = |p: &Pose| lbs_deform(&f.mesh, &f.weights, &forward_kinematics(&f.skeleton, p).unwrap()).unwrap();
    assert!(max_gap(&deform(&small), &deform(&big)) < 1e-12);
    assert!(Pose::new(vec![[f64::NAN, 0.0, 0.0]]).is_err());
}
