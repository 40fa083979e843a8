//! Procedural rigged characters for tests and benchmarks.
//!
//! Two kinds are available: a straight two-bone arm and a five-joint
//! capsule humanoid. Both are polygonized from a smooth signed distance
//! field, carry analytic joints and cosine-ramp skinning weights, and can
//! be remeshed (`seed`), posed with linear blend skinning, and perturbed
//! with normal noise. Every fixture records, per vertex, the closest point
//! on the unjittered base mesh of the same resolution.

mod body;
mod primitives;
mod surface_nets;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::knn::KdTree;
use crate::mesh::{save_mesh, MeshError, TriMesh};
use crate::regressor::{save_skeleton, save_weights, RegressorError, Skeleton, SkinWeights};
use crate::skinning::{forward_kinematics, lbs_deform, Pose, SkinningError};

pub use body::BLEND_BAND;
pub use primitives::{grid, icosphere, unit_square};

use body::Body;
use surface_nets::{cross, dot, is_closed_manifold, norm, sub, surface_nets, Sdf};

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rig(#[from] RegressorError),
    #[error(transparent)]
    Skinning(#[from] SkinningError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    TwoBoneArm,
    CapsuleHumanoid,
}

impl FromStr for FixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_bone_arm" | "arm" => Ok(FixtureKind::TwoBoneArm),
            "capsule_humanoid" | "humanoid" => Ok(FixtureKind::CapsuleHumanoid),
            _ => Err(format!("unknown fixture kind '{s}' (expected two_bone_arm or capsule_humanoid)")),
        }
    }
}

/// Proportions of a character, as multiples of the default build.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityParams {
    pub limb_length: f64,
    pub limb_radius: f64,
    pub torso_radius: f64,
    pub head_radius: f64,
}

impl Default for IdentityParams {
    fn default() -> Self {
        IdentityParams { limb_length: 1.0, limb_radius: 1.0, torso_radius: 1.0, head_radius: 1.0 }
    }
}

impl IdentityParams {
    /// A visibly different second character: longer, thinner limbs, a
    /// wider torso and a larger head.
    pub fn alternate() -> Self {
        IdentityParams { limb_length: 1.2, limb_radius: 0.8, torso_radius: 1.15, head_radius: 1.25 }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    /// Resolution level; each step doubles the vertex count.
    pub subdivision: u32,
    /// Overrides `subdivision` with an approximate vertex count.
    pub target_vertices: Option<usize>,
    pub identity: IdentityParams,
    /// `None` is the rest pose.
    pub pose: Option<Pose>,
    /// 0 gives the base sampling; other seeds shift the sampling grid and
    /// jitter vertices tangentially.
    pub seed: u64,
    /// Maximum normal displacement as a fraction of the bbox diagonal.
    pub noise: f64,
}

impl FixtureSpec {
    pub fn new(kind: FixtureKind, subdivision: u32) -> Self {
        FixtureSpec {
            kind,
            subdivision,
            target_vertices: None,
            identity: IdentityParams::default(),
            pose: None,
            seed: 0,
            noise: 0.0,
        }
    }

    pub fn humanoid(subdivision: u32) -> Self {
        Self::new(FixtureKind::CapsuleHumanoid, subdivision)
    }

    pub fn arm(subdivision: u32) -> Self {
        Self::new(FixtureKind::TwoBoneArm, subdivision)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_pose(mut self, pose: Pose) -> Self {
        self.pose = Some(pose);
        self
    }

    pub fn with_identity(mut self, identity: IdentityParams) -> Self {
        self.identity = identity;
        self
    }

    pub fn with_target_vertices(mut self, n: usize) -> Self {
        self.target_vertices = Some(n);
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    /// The 45° bend used throughout the tests: the elbow for the arm, the
    /// left shoulder (downwards) for the humanoid.
    pub fn bent_pose(kind: FixtureKind) -> Pose {
        let a = std::f64::consts::FRAC_PI_4;
        match kind {
            FixtureKind::TwoBoneArm => Pose::new(vec![[0.0; 3], [0.0, 0.0, a], [0.0; 3]]),
            FixtureKind::CapsuleHumanoid => Pose::new(vec![[0.0; 3], [0.0, 0.0, -a], [0.0; 3], [0.0; 3], [0.0; 3]]),
        }
        .expect("finite pose")
    }

    pub fn joint_count(&self) -> usize {
        match self.kind {
            FixtureKind::TwoBoneArm => 3,
            FixtureKind::CapsuleHumanoid => 5,
        }
    }

    fn body(&self) -> Body {
        match self.kind {
            FixtureKind::TwoBoneArm => body::arm(&self.identity),
            FixtureKind::CapsuleHumanoid => body::humanoid(&self.identity),
        }
    }

    fn validate(&self) -> Result<(), FixtureError> {
        let id = &self.identity;
        let scales = [id.limb_length, id.limb_radius, id.torso_radius, id.head_radius];
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.2 || *s > 5.0) {
            return Err(FixtureError::InvalidSpec(format!("identity scales must lie in (0.2, 5]: {id:?}")));
        }
        if !(0.0..=0.02).contains(&self.noise) {
            return Err(FixtureError::InvalidSpec(format!("noise {} outside [0, 0.02]", self.noise)));
        }
        if self.subdivision > 8 {
            return Err(FixtureError::InvalidSpec(format!("subdivision {} is too large", self.subdivision)));
        }
        if let Some(n) = self.target_vertices {
            if !(100..=500_000).contains(&n) {
                return Err(FixtureError::InvalidSpec(format!("target vertex count {n} outside [100, 500000]")));
            }
        }
        if let Some(p) = &self.pose {
            if p.len() != self.joint_count() {
                return Err(FixtureError::InvalidSpec(format!(
                    "pose has {} joints, fixture has {}",
                    p.len(),
                    self.joint_count()
                )));
            }
        }
        Ok(())
    }
}

/// A point on a mesh in barycentric form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfacePoint {
    pub fn position(&self, mesh: &TriMesh) -> [f64; 3] {
        let f = mesh.faces()[self.face];
        let v = mesh.vertices();
        std::array::from_fn(|d| (0..3).map(|c| self.bary[c] * v[f[c]][d]).sum())
    }

    /// The face corner with the largest barycentric weight.
    pub fn nearest_vertex(&self, mesh: &TriMesh) -> usize {
        let c = (0..3).fold(0, |best, c| if self.bary[c] > self.bary[best] { c } else { best });
        mesh.faces()[self.face][c]
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    /// Posed (and possibly noisy) mesh.
    pub mesh: TriMesh,
    /// Same connectivity in the rest pose, without noise.
    pub rest_mesh: TriMesh,
    /// Joints at their posed positions.
    pub skeleton: Skeleton,
    pub rest_skeleton: Skeleton,
    pub weights: SkinWeights,
    pub landmarks: Vec<usize>,
    pub landmark_names: Vec<String>,
    /// Per vertex, the closest point on the base mesh (seed 0, same
    /// resolution and identity, rest pose).
    pub correspondence: Vec<SurfacePoint>,
}

impl Fixture {
    pub fn bbox_diagonal(&self) -> f64 {
        self.mesh.bbox_diagonal()
    }

    /// Writes `mesh.obj`, `rig.json`, `weights.mtx`, `landmarks.txt` and
    /// `correspondence.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), FixtureError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| FixtureError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        save_mesh(&self.mesh, dir.join("mesh.obj"))?;
        save_skeleton(&self.skeleton, dir.join("rig.json"))?;
        save_weights(&self.weights, dir.join("weights.mtx"))?;
        let mut lm = String::from("# vertex index, one landmark per line\n");
        for (i, name) in self.landmarks.iter().zip(&self.landmark_names) {
            let _ = writeln!(lm, "{i} # {name}");
        }
        let path = dir.join("landmarks.txt");
        fs::write(&path, lm).map_err(io(&path))?;
        let mut corr = String::from("# base_face b0 b1 b2\n");
        for p in &self.correspondence {
            let _ = writeln!(corr, "{} {:.17e} {:.17e} {:.17e}", p.face, p.bary[0], p.bary[1], p.bary[2]);
        }
        let path = dir.join("correspondence.txt");
        fs::write(&path, corr).map_err(io(&path))?;
        Ok(())
    }
}

/// Builds the fixture described by `spec`. Identical specs give identical
/// meshes.
pub fn generate(spec: &FixtureSpec) -> Result<Fixture, FixtureError> {
    spec.validate()?;
    let body = spec.body();
    let h = spacing(spec, &body)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (verts, faces) = polygonize(&body, h, spec.seed, &mut rng)?;
    let verts = if spec.seed == 0 { verts } else { jitter(&body, verts, &faces, h, &mut rng) };
    let rest_mesh = TriMesh::new(verts, faces)?;

    let q = body.joints.len();
    let rows = rest_mesh
        .vertices()
        .iter()
        .map(|&p| body.weights(p).into_iter().enumerate().filter(|&(_, w)| w > 0.0).collect())
        .collect();
    let weights = SkinWeights::new(q, rows)?;
    let rest_skeleton = Skeleton::new(body.names.clone(), body.parents.clone(), body.joints.clone())?;

    let correspondence = if spec.seed == 0 {
        identity_correspondence(&rest_mesh)
    } else {
        let mut base_rng = ChaCha8Rng::seed_from_u64(0);
        let (bv, bf) = polygonize(&body, h, 0, &mut base_rng)?;
        closest_points(&TriMesh::new(bv, bf)?, rest_mesh.vertices())
    };

    let (mut mesh, skeleton) = match &spec.pose {
        None => (rest_mesh.clone(), rest_skeleton.clone()),
        Some(pose) => {
            let tf = forward_kinematics(&rest_skeleton, pose)?;
            let posed = lbs_deform(&rest_mesh, &weights, &tf)?;
            let joints = tf.world.iter().map(|m| [m[(0, 3)], m[(1, 3)], m[(2, 3)]]).collect();
            (rest_mesh.with_vertices(posed)?, rest_skeleton.with_joints(joints)?)
        }
    };
    if spec.noise > 0.0 {
        let amp = spec.noise * mesh.bbox_diagonal();
        let normals = vertex_normals(&mesh);
        let noisy = mesh
            .vertices()
            .iter()
            .zip(&normals)
            .map(|(p, nrm)| {
                let s = amp * rng.random_range(-1.0..=1.0);
                [p[0] + s * nrm[0], p[1] + s * nrm[1], p[2] + s * nrm[2]]
            })
            .collect();
        mesh = mesh.with_vertices(noisy)?;
    }

    let tree = KdTree::from_points(rest_mesh.vertices());
    let landmarks = body.landmark_points.iter().map(|p| tree.nearest(p, None).0).collect();
    Ok(Fixture {
        spec: spec.clone(),
        mesh,
        rest_mesh,
        skeleton,
        rest_skeleton,
        weights,
        landmarks,
        landmark_names: body.landmark_names.iter().map(|s| s.to_string()).collect(),
        correspondence,
    })
}

/// Grid spacing: each subdivision level halves the area per vertex; a
/// target vertex count is met by rescaling from a trial polygonization.
fn spacing(spec: &FixtureSpec, body: &Body) -> Result<f64, FixtureError> {
    const DENSITY: f64 = 1.5;
    let for_count = |n: f64| (DENSITY * body.area / n).sqrt();
    match spec.target_vertices {
        None => Ok(for_count(600.0 * 2f64.powi(spec.subdivision as i32))),
        Some(n) => {
            let mut h = for_count(n as f64);
            for _ in 0..2 {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let got = polygonize(body, h, 0, &mut rng)?.0.len();
                h *= (got as f64 / n as f64).sqrt();
            }
            Ok(h)
        }
    }
}

fn polygonize(
    body: &Body,
    h: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>), FixtureError> {
    let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
    for c in &body.sdf.parts {
        for d in 0..3 {
            lo[d] = lo[d].min(c.a[d].min(c.b[d]) - c.r);
            hi[d] = hi[d].max(c.a[d].max(c.b[d]) + c.r);
        }
    }
    for attempt in 0..8 {
        let offset: [f64; 3] =
            if seed == 0 && attempt == 0 { [0.0; 3] } else { std::array::from_fn(|_| h * rng.random::<f64>()) };
        let (v, f) = surface_nets(&body.sdf, lo, hi, h, offset);
        if is_closed_manifold(v.len(), &f) && min_area_ok(&v, &f, h) {
            return Ok((v, f));
        }
        log::debug!("fixture polygonization attempt {attempt} not manifold, shifting grid");
    }
    Err(FixtureError::InvalidSpec(format!("could not polygonize a closed manifold at spacing {h:.4}")))
}

fn min_area_ok(v: &[[f64; 3]], f: &[[usize; 3]], h: f64) -> bool {
    f.iter().all(|t| norm(cross(sub(v[t[1]], v[t[0]]), sub(v[t[2]], v[t[0]]))) > 1e-6 * h * h)
}

/// Moves each vertex by less than 5% of the grid spacing in its tangent
/// plane, then projects it back onto the surface.
fn jitter(body: &Body, verts: Vec<[f64; 3]>, faces: &[[usize; 3]], h: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let out: Vec<[f64; 3]> = verts
        .iter()
        .map(|&p| {
            let g = body.sdf.gradient(p);
            let gn = norm(g).max(1e-300);
            let n = [g[0] / gn, g[1] / gn, g[2] / gn];
            let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = dot(r, n);
            let t = [r[0] - s * n[0], r[1] - s * n[1], r[2] - s * n[2]];
            let scale = 0.05 * h / norm(t).max(1.0);
            body.sdf.project([p[0] + scale * t[0], p[1] + scale * t[1], p[2] + scale * t[2]])
        })
        .collect();
    if min_area_ok(&out, faces, h) {
        out
    } else {
        verts
    }
}

fn vertex_normals(mesh: &TriMesh) -> Vec<[f64; 3]> {
    let v = mesh.vertices();
    let mut n = vec![[0.0; 3]; v.len()];
    for f in mesh.faces() {
        let fn_ = cross(sub(v[f[1]], v[f[0]]), sub(v[f[2]], v[f[0]]));
        for &i in f {
            for d in 0..3 {
                n[i][d] += fn_[d];
            }
        }
    }
    for x in &mut n {
        let l = norm(*x).max(1e-300);
        x.iter_mut().for_each(|c| *c /= l);
    }
    n
}

fn identity_correspondence(mesh: &TriMesh) -> Vec<SurfacePoint> {
    let mut out = vec![SurfacePoint { face: 0, bary: [1.0, 0.0, 0.0] }; mesh.n_vertices()];
    for (fi, f) in mesh.faces().iter().enumerate().rev() {
        for c in 0..3 {
            let mut bary = [0.0; 3];
            bary[c] = 1.0;
            out[f[c]] = SurfacePoint { face: fi, bary };
        }
    }
    out
}

/// Closest point on `mesh` to each query point. Candidates are the faces
/// around the nearest vertex and its neighbours, which is exact for points
/// close to a reasonably uniform surface.
pub fn closest_points(mesh: &TriMesh, points: &[[f64; 3]]) -> Vec<SurfacePoint> {
    let tree = KdTree::from_points(mesh.vertices());
    let nb = mesh.vertex_neighbors();
    let mut incident = vec![Vec::new(); mesh.n_vertices()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        for &i in f {
            incident[i].push(fi);
        }
    }
    let v = mesh.vertices();
    points
        .iter()
        .map(|p| {
            let (near, _) = tree.nearest(p, None);
            let mut best = (f64::INFINITY, SurfacePoint { face: incident[near][0], bary: [1.0, 0.0, 0.0] });
            for &u in std::iter::once(&near).chain(&nb[near]) {
                for &fi in &incident[u] {
                    let f = mesh.faces()[fi];
                    let (q, bary) = closest_on_triangle(*p, v[f[0]], v[f[1]], v[f[2]]);
                    let d = norm(sub(*p, q));
                    if d < best.0 {
                        best = (d, SurfacePoint { face: fi, bary });
                    }
                }
            }
            best.1
        })
        .collect()
}

/// Closest point of triangle `abc` to `p`, with its barycentric coordinates.
fn closest_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let at = |u: f64, v: f64, w: f64| {
        ([u * a[0] + v * b[0] + w * c[0], u * a[1] + v * b[1] + w * c[1], u * a[2] + v * b[2] + w * c[2]], [u, v, w])
    };
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return at(1.0, 0.0, 0.0);
    }
    let bp = sub(p, b);
    let (d3, d4) = (dot(ab, bp), dot(ac, bp));
    if d3 >= 0.0 && d4 <= d3 {
        return at(0.0, 1.0, 0.0);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return at(1.0 - v, v, 0.0);
    }
    let cp = sub(p, c);
    let (d5, d6) = (dot(ab, cp), dot(ac, cp));
    if d6 >= 0.0 && d5 <= d6 {
        return at(0.0, 0.0, 1.0);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return at(1.0 - w, 0.0, w);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return at(0.0, 1.0 - w, w);
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    at(1.0 - v - w, v, w)
}
