//! Linear blend skinning.
//!
//! Each joint carries a local transform `[rodr(θ_q) | j_q − j_parent(q)]`
//! (the root uses its absolute position); world transforms are products
//! along the ancestor chain, root first. Deformation uses the relative
//! transforms `G_q(θ) G_q(θ*)⁻¹`, so the rest pose `θ*` leaves the mesh
//! unchanged.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::mesh::{save_mesh, MeshError, TriMesh};
use crate::regressor::{Skeleton, SkinWeights};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum SkinningError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("pose contains a non-finite angle at joint {joint}")]
    NonFinite { joint: usize },
    #[error("joint hierarchy contains a cycle through joint {joint}")]
    CyclicHierarchy { joint: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed pose file {path}: {msg}")]
    Parse { path: String, msg: String },
}

/// Per-joint axis-angle rotations and the rest pose they are measured from.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose<T: Scalar = f64> {
    theta: Vec<[T; 3]>,
    rest: Vec<[T; 3]>,
}

impl<T: Scalar> Pose<T> {
    /// Pose relative to the zero rest pose. Angles are wrapped to `[0, 2π)`.
    pub fn new(theta: Vec<[T; 3]>) -> Result<Self, SkinningError> {
        let rest = vec![[T::zero(); 3]; theta.len()];
        Self::with_rest(theta, rest)
    }

    pub fn with_rest(theta: Vec<[T; 3]>, rest: Vec<[T; 3]>) -> Result<Self, SkinningError> {
        if theta.len() != rest.len() {
            return Err(SkinningError::DimensionMismatch {
                what: "rest pose joints",
                expected: theta.len(),
                got: rest.len(),
            });
        }
        let wrap = |v: &[T; 3], joint: usize| -> Result<[T; 3], SkinningError> {
            if v.iter().any(|c| !c.as_f64().is_finite()) {
                return Err(SkinningError::NonFinite { joint });
            }
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().as_f64();
            if n < TAU {
                return Ok(*v);
            }
            let s = T::lit(n.rem_euclid(TAU) / n);
            Ok([v[0] * s, v[1] * s, v[2] * s])
        };
        Ok(Pose {
            theta: theta.iter().enumerate().map(|(q, v)| wrap(v, q)).collect::<Result<_, _>>()?,
            rest: rest.iter().enumerate().map(|(q, v)| wrap(v, q)).collect::<Result<_, _>>()?,
        })
    }

    pub fn rest_pose(q: usize) -> Self {
        Pose { theta: vec![[T::zero(); 3]; q], rest: vec![[T::zero(); 3]; q] }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[[T; 3]] {
        &self.theta
    }

    pub fn rest(&self) -> &[[T; 3]] {
        &self.rest
    }
}

/// World transforms `G_q(θ)` and relative transforms `G_q(θ) G_q(θ*)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransforms<T: Scalar = f64> {
    pub world: Vec<Matrix4<T>>,
    pub relative: Vec<Matrix4<T>>,
}

/// Rotation matrix of an axis-angle vector. Uses series expansions near
/// zero, so `θ = 0` gives the identity without dividing by the angle.
pub fn rodrigues<T: Scalar>(v: [T; 3]) -> Matrix3<T> {
    let t2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let t = t2.sqrt();
    let (a, b) = if t.as_f64() < 1e-4 {
        let one = T::one();
        (one - t2 / T::lit(6.0), T::lit(0.5) - t2 / T::lit(24.0))
    } else {
        (t.sin() / t, (T::one() - t.cos()) / t2)
    };
    let k = Matrix3::new(T::zero(), -v[2], v[1], v[2], T::zero(), -v[0], -v[1], v[0], T::zero());
    Matrix3::identity() + k * a + k * k * b
}

fn homogeneous<T: Scalar>(r: Matrix3<T>, t: Vector3<T>) -> Matrix4<T> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Inverse of a rigid homogeneous transform.
pub fn rigid_inverse<T: Scalar>(m: &Matrix4<T>) -> Matrix4<T> {
    let r = m.fixed_view::<3, 3>(0, 0).transpose();
    let t = m.fixed_view::<3, 1>(0, 3).into_owned();
    homogeneous(r, -(r * t))
}

fn world_transforms<T: Scalar>(skeleton: &Skeleton, theta: &[[T; 3]]) -> Vec<Matrix4<T>> {
    let mut world: Vec<Matrix4<T>> = Vec::with_capacity(skeleton.len());
    for q in 0..skeleton.len() {
        let j = skeleton.joint(q);
        let local = match skeleton.parent(q) {
            Some(p) => {
                let jp = skeleton.joint(p);
                let off = Vector3::new(T::lit(j[0] - jp[0]), T::lit(j[1] - jp[1]), T::lit(j[2] - jp[2]));
                world[p] * homogeneous(rodrigues(theta[q]), off)
            }
            None => homogeneous(rodrigues(theta[q]), Vector3::new(T::lit(j[0]), T::lit(j[1]), T::lit(j[2]))),
        };
        world.push(local);
    }
    world
}

/// World and relative joint transforms of `pose`.
pub fn forward_kinematics<T: Scalar>(skeleton: &Skeleton, pose: &Pose<T>) -> Result<JointTransforms<T>, SkinningError> {
    if pose.len() != skeleton.len() {
        return Err(SkinningError::DimensionMismatch {
            what: "pose joints",
            expected: skeleton.len(),
            got: pose.len(),
        });
    }
    // `Skeleton` guarantees parents precede children, so one pass suffices.
    if let Some(q) = (0..skeleton.len()).find(|&q| skeleton.parent(q).is_some_and(|p| p >= q)) {
        return Err(SkinningError::CyclicHierarchy { joint: q });
    }
    let world = world_transforms(skeleton, pose.theta());
    let rest = world_transforms(skeleton, pose.rest());
    let relative = world.iter().zip(&rest).map(|(w, r)| w * rigid_inverse(r)).collect();
    Ok(JointTransforms { world, relative })
}

/// `v̄ᵢ = Σ_q w[i,q] · relative_q · vᵢ`.
pub fn lbs_deform<T: Scalar>(
    mesh: &TriMesh<T>,
    weights: &SkinWeights,
    transforms: &JointTransforms<T>,
) -> Result<Vec<[T; 3]>, SkinningError> {
    if weights.n_vertices() != mesh.n_vertices() {
        return Err(SkinningError::DimensionMismatch {
            what: "weight rows",
            expected: mesh.n_vertices(),
            got: weights.n_vertices(),
        });
    }
    if weights.n_joints() != transforms.relative.len() {
        return Err(SkinningError::DimensionMismatch {
            what: "weight columns",
            expected: transforms.relative.len(),
            got: weights.n_joints(),
        });
    }
    Ok(mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let h = Vector4::new(v[0], v[1], v[2], T::one());
            let mut acc = Vector4::zeros();
            for &(q, w) in weights.row(i) {
                acc += transforms.relative[q] * h * T::lit(w);
            }
            [acc[0], acc[1], acc[2]]
        })
        .collect())
}

/// Poses `mesh` once per entry of `poses`, writing `frame_00000.obj`,
/// `frame_00001.obj`, ... into `out_dir`. Returns the written paths.
pub fn animate<T: Scalar>(
    mesh: &TriMesh<T>,
    weights: &SkinWeights,
    skeleton: &Skeleton,
    poses: &[Pose<T>],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, SkinningError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| SkinningError::Io { path: out_dir.display().to_string(), source })?;
    let mut paths = Vec::with_capacity(poses.len());
    for (f, pose) in poses.iter().enumerate() {
        let tf = forward_kinematics(skeleton, pose)?;
        let frame = mesh.with_vertices(lbs_deform(mesh, weights, &tf)?)?;
        let path = out_dir.join(format!("frame_{f:05}.obj"));
        save_mesh(&frame, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a pose sequence: a JSON array of frames, each an array of `Q`
/// axis-angle triples. A single frame may be given without the outer array.
pub fn read_poses(text: &str, n_joints: usize) -> Result<Vec<Pose<f64>>, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let frames: Vec<Vec<[f64; 3]>> = match serde_json::from_value::<Vec<Vec<[f64; 3]>>>(value.clone()) {
        Ok(f) => f,
        Err(_) => vec![serde_json::from_value::<Vec<[f64; 3]>>(value)
            .map_err(|_| "expected an array of frames of [x, y, z] triples".to_string())?],
    };
    frames
        .into_iter()
        .enumerate()
        .map(|(f, theta)| {
            if theta.len() != n_joints {
                return Err(format!("frame {f} has {} joints, expected {n_joints}", theta.len()));
            }
            Pose::new(theta).map_err(|e| format!("frame {f}: {e}"))
        })
        .collect()
}

pub fn load_poses(path: impl AsRef<Path>, n_joints: usize) -> Result<Vec<Pose<f64>>, SkinningError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| SkinningError::Io { path: path.display().to_string(), source })?;
    read_poses(&text, n_joints).map_err(|msg| SkinningError::Parse { path: path.display().to_string(), msg })
}

pub fn poses_to_json(poses: &[Pose<f64>]) -> String {
    let frames: Vec<&[[f64; 3]]> = poses.iter().map(|p| p.theta()).collect();
    serde_json::to_string(&frames).expect("poses serialize")
}
