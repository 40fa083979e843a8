//! Evaluation harness: joint errors against reference skeletons, batched
//! pair runs with timing, and spectral regressor difference matrices.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::{generate, FixtureKind, FixtureSpec, IdentityParams};
use crate::mesh::{load_mesh, zip_landmarks, LandmarkSet, MeshId, TriMesh};
use crate::pipeline::{transfer_rig, PipelineConfig, Rig, Timing};
use crate::regressor::{load_skeleton, load_weights, SpatialRegressor};
use crate::skinning::Pose;

fn eval_err(msg: impl Into<String>) -> Error {
    Error::Eval(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointError {
    /// Mean over joints of the squared distance.
    pub mse: f64,
    /// Per-joint Euclidean distance.
    pub per_joint: Vec<f64>,
}

pub fn joint_error(predicted: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<JointError> {
    if predicted.len() != reference.len() {
        return Err(eval_err(format!(
            "dimension mismatch: {} predicted joints, {} reference joints",
            predicted.len(),
            reference.len()
        )));
    }
    let per_joint: Vec<f64> = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| ((p[0] - r[0]).powi(2) + (p[1] - r[1]).powi(2) + (p[2] - r[2]).powi(2)).sqrt())
        .collect();
    let mse = per_joint.iter().map(|d| d * d).sum::<f64>() / per_joint.len().max(1) as f64;
    Ok(JointError { mse, per_joint })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub pair_id: String,
    pub method: String,
    /// Set when this method failed for this pair.
    pub error: Option<String>,
    /// Mean squared joint error in squared model units; absent without a
    /// reference skeleton.
    pub mse: Option<f64>,
    /// `mse` divided by the squared bbox diagonal of the target.
    pub mse_rel: Option<f64>,
    pub per_joint_err: Vec<f64>,
    pub joints: Vec<[f64; 3]>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub mean_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_pair: Vec<PairEntry>,
    /// One row per method, sorted by method name.
    pub aggregate: Vec<Aggregate>,
    /// Sum over pairs (each pair counted once).
    pub timing: Timing,
}

/// Sum in a canonical order so aggregates do not depend on pair order.
fn stable_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

impl EvalReport {
    pub fn from_entries(per_pair: Vec<PairEntry>) -> Self {
        let mut methods: Vec<String> = per_pair.iter().map(|e| e.method.clone()).collect();
        methods.sort();
        methods.dedup();
        let aggregate = methods
            .into_iter()
            .map(|method| {
                let entries: Vec<&PairEntry> = per_pair.iter().filter(|e| e.method == method).collect();
                let mse: Vec<f64> = entries.iter().filter_map(|e| e.mse).collect();
                let rel: Vec<f64> = entries.iter().filter_map(|e| e.mse_rel).collect();
                let count = mse.len();
                let mean_of = |v: Vec<f64>| {
                    if v.is_empty() {
                        f64::NAN
                    } else {
                        let n = v.len() as f64;
                        stable_sum(v) / n
                    }
                };
                Aggregate {
                    count,
                    failures: entries.iter().filter(|e| e.error.is_some()).count(),
                    min: mse.iter().cloned().fold(f64::INFINITY, f64::min),
                    max: mse.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    mean: mean_of(mse),
                    mean_rel: mean_of(rel),
                    method,
                }
            })
            .collect();
        // Both methods of a pair share one timing record.
        let mut seen = std::collections::BTreeMap::new();
        for e in &per_pair {
            seen.entry(e.pair_id.clone()).or_insert(e.timing);
        }
        let col = |f: fn(&Timing) -> f64| stable_sum(seen.values().map(f).collect());
        let timing = Timing {
            mapping_s: col(|t| t.mapping_s),
            regressor_s: col(|t| t.regressor_s),
            transfer_s: col(|t| t.transfer_s),
            total_s: col(|t| t.total_s),
        };
        EvalReport { per_pair, aggregate, timing }
    }

    pub fn aggregate_for(&self, method: &str) -> Option<&Aggregate> {
        self.aggregate.iter().find(|a| a.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("pair_id,method,mse,mse_rel,mapping_s,regressor_s,transfer_s,total_s,error\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for e in &self.per_pair {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                e.pair_id,
                e.method,
                opt(e.mse),
                opt(e.mse_rel),
                e.timing.mapping_s,
                e.timing.regressor_s,
                e.timing.transfer_s,
                e.timing.total_s,
                e.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        s
    }

    /// Writes the JSON report to `path` and the CSV next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_file(path, &self.to_json())?;
        write_file(&path.with_extension("csv"), &self.to_csv())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| eval_err(format!("cannot write {}: {e}", path.display())))
}

/// One transfer problem: a rig, a target mesh, landmark pairs (rig vertex,
/// target vertex) and optionally the target's true joints.
#[derive(Debug, Clone)]
pub struct PairInput {
    pub id: String,
    pub rig: Rig,
    pub target: TriMesh,
    pub landmarks: LandmarkSet,
    pub reference: Option<Vec<[f64; 3]>>,
}

/// Runs both transfer methods on one pair. Failures become entries with
/// `error` set instead of aborting.
pub fn run_pair(input: &PairInput, cfg: &PipelineConfig, cache: Option<&Path>) -> Vec<PairEntry> {
    run_pair_cached(input, cfg, cache, None)
}

type RegressorCache = Mutex<HashMap<MeshId, SpatialRegressor>>;

fn run_pair_cached(
    input: &PairInput,
    cfg: &PipelineConfig,
    cache: Option<&Path>,
    regressors: Option<&RegressorCache>,
) -> Vec<PairEntry> {
    let failed = |method: &str, msg: String, timing: Timing| PairEntry {
        pair_id: input.id.clone(),
        method: method.into(),
        error: Some(msg),
        mse: None,
        mse_rel: None,
        per_joint_err: vec![],
        joints: vec![],
        timing,
    };
    let key = input.rig.mesh.content_hash();
    let known = regressors.and_then(|m| m.lock().expect("cache lock").get(&key).cloned());
    let out = match known {
        Some(r) => {
            let t = std::time::Instant::now();
            let bases = rayon::join(
                || crate::pipeline::compute_basis(&input.rig.mesh, cfg, cache),
                || crate::pipeline::compute_basis(&input.target, cfg, cache),
            );
            match bases {
                (Ok(rb), Ok(tb)) => {
                    let secs = t.elapsed().as_secs_f64();
                    crate::pipeline::transfer_rig_with_bases(
                        &input.rig,
                        &rb,
                        &input.target,
                        &tb,
                        &input.landmarks,
                        cfg,
                        Some(&r),
                    )
                    .map(|mut o| {
                        o.timing.mapping_s += secs;
                        o.timing.total_s += secs;
                        o
                    })
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        }
        None => transfer_rig(&input.rig, &input.target, &input.landmarks, cfg, cache),
    };
    let out = match out {
        Ok(o) => o,
        Err(e) => {
            let msg = e.to_string();
            return vec![
                failed("functional", msg.clone(), Timing::default()),
                failed("pointwise", msg, Timing::default()),
            ];
        }
    };
    if let Some(m) = regressors {
        m.lock().expect("cache lock").entry(key).or_insert_with(|| out.regressor.clone());
    }
    let bbox2 = input.target.bbox_diagonal().powi(2);
    let entry = |method: &str, joints: Vec<[f64; 3]>| -> PairEntry {
        let err = input.reference.as_ref().map(|r| joint_error(&joints, r));
        match err {
            Some(Err(e)) => failed(method, e.to_string(), out.timing),
            Some(Ok(je)) => PairEntry {
                pair_id: input.id.clone(),
                method: method.into(),
                error: None,
                mse: Some(je.mse),
                mse_rel: Some(je.mse / bbox2),
                per_joint_err: je.per_joint,
                joints,
                timing: out.timing,
            },
            None => PairEntry {
                pair_id: input.id.clone(),
                method: method.into(),
                error: None,
                mse: None,
                mse_rel: None,
                per_joint_err: vec![],
                joints,
                timing: out.timing,
            },
        }
    };
    let mut entries = vec![entry("functional", out.functional.joints.clone())];
    entries.push(match &out.pointwise {
        Ok(p) => entry("pointwise", p.joints.clone()),
        Err(e) => failed("pointwise", e.to_string(), out.timing),
    });
    entries
}

/// Evaluates all pairs on a pool of `workers` threads. Regressors are
/// fitted once per distinct rig mesh where the schedule allows.
pub fn run_batch(
    pairs: &[PairInput],
    cfg: &PipelineConfig,
    workers: usize,
    cache: Option<&Path>,
) -> Result<EvalReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| eval_err(format!("cannot start worker pool: {e}")))?;
    let regressors: RegressorCache = Mutex::new(HashMap::new());
    let entries: Vec<PairEntry> = pool
        .install(|| pairs.par_iter().flat_map_iter(|p| run_pair_cached(p, cfg, cache, Some(&regressors))).collect());
    Ok(EvalReport::from_entries(entries))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<ManifestPair>,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPair {
    pub id: String,
    pub source_mesh: PathBuf,
    pub rig: PathBuf,
    pub weights: PathBuf,
    pub target_mesh: PathBuf,
    /// `source_vertex target_vertex` pairs.
    pub landmarks: PathBuf,
    /// Skeleton JSON with the target's true joints.
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PairInput>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| eval_err(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| eval_err(format!("malformed manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest
        .pairs
        .iter()
        .map(|p| {
            let at = |rel: &Path| base.join(rel);
            let skeleton = load_skeleton(at(&p.rig))?;
            let reference = match &p.reference {
                Some(r) => Some(load_skeleton(at(r))?.joints().to_vec()),
                None => None,
            };
            Ok(PairInput {
                id: p.id.clone(),
                rig: Rig { mesh: load_mesh(at(&p.source_mesh))?, skeleton, weights: load_weights(at(&p.weights))? },
                target: load_mesh(at(&p.target_mesh))?,
                landmarks: crate::mesh::load_landmarks(at(&p.landmarks))?,
                reference,
            })
        })
        .collect()
}

/// Writes the standard fixture suite into `dir`: a humanoid rig and target
/// pairs covering an independent remeshing, two further poses and a second
/// identity in two poses. Returns the manifest path.
pub fn write_fixture_suite(dir: impl AsRef<Path>, subdivision: u32) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let kind = FixtureKind::CapsuleHumanoid;
    let bent = FixtureSpec::bent_pose(kind);
    let stride =
        Pose::new(vec![[0.0; 3], [0.0; 3], [0.0, 0.0, 0.5], [0.4, 0.0, 0.0], [-0.4, 0.0, 0.0]]).expect("finite pose");
    let base = FixtureSpec::humanoid(subdivision);
    let alt = IdentityParams::alternate();
    let specs = [
        ("source", base.clone()),
        ("remesh", base.clone().with_seed(1)),
        ("bent", base.clone().with_seed(2).with_pose(bent.clone())),
        ("stride", base.clone().with_seed(3).with_pose(stride)),
        ("other_rest", base.clone().with_seed(4).with_identity(alt.clone())),
        ("other_bent", base.with_seed(5).with_identity(alt).with_pose(bent)),
    ];
    let fixtures = specs
        .iter()
        .map(|(name, spec)| {
            let f = generate(spec)?;
            f.save(dir.join(name))?;
            Ok((*name, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let source = &fixtures[0].1;
    let mut pairs = Vec::new();
    for (name, f) in &fixtures[1..] {
        let lm = zip_landmarks(&source.landmarks, &f.landmarks)?;
        let lm_path = format!("{name}/pairs.txt");
        crate::mesh::save_landmarks(&lm, dir.join(&lm_path))?;
        pairs.push(ManifestPair {
            id: name.to_string(),
            source_mesh: "source/mesh.obj".into(),
            rig: "source/rig.json".into(),
            weights: "source/weights.mtx".into(),
            target_mesh: format!("{name}/mesh.obj").into(),
            landmarks: lm_path.into(),
            reference: Some(format!("{name}/rig.json").into()),
        });
    }
    let path = dir.join("manifest.json");
    write_file(&path, &serde_json::to_string_pretty(&Manifest { pairs }).expect("manifest serializes"))?;
    Ok(path)
}

/// Element-wise comparison of two spectral regressors expressed in the
/// same basis.
#[derive(Debug, Clone)]
pub struct RegressorDiff {
    /// `|a − b|`.
    pub abs_diff: Mat<f64>,
    /// `a²`, insensitive to sign flips of basis functions.
    pub a_sq: Mat<f64>,
    pub b_sq: Mat<f64>,
}

impl RegressorDiff {
    pub fn mean_abs_diff(&self) -> f64 {
        mean(&self.abs_diff)
    }

    /// Mean of `|a² − b²|`.
    pub fn mean_sq_diff(&self) -> f64 {
        let d =
            Mat::from_fn(self.a_sq.nrows(), self.a_sq.ncols(), |i, j| (self.a_sq[(i, j)] - self.b_sq[(i, j)]).abs());
        mean(&d)
    }

    /// Writes `{prefix}_diff`, `{prefix}_a2` and `{prefix}_b2`, each as CSV
    /// and as a PGM heatmap.
    pub fn save(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| eval_err(format!("cannot create {}: {e}", dir.display())))?;
        for (name, m) in [("diff", &self.abs_diff), ("a2", &self.a_sq), ("b2", &self.b_sq)] {
            write_file(&dir.join(format!("{prefix}_{name}.csv")), &matrix_csv(m))?;
            write_file(&dir.join(format!("{prefix}_{name}.pgm")), &matrix_pgm(m, 4))?;
        }
        Ok(())
    }
}

fn mean(m: &Mat<f64>) -> f64 {
    let n = (m.nrows() * m.ncols()).max(1) as f64;
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)]).sum::<f64>()).sum::<f64>() / n
}

pub fn regressor_diff(a: &Mat<f64>, b: &Mat<f64>) -> Result<RegressorDiff> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(eval_err(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let (q, k) = (a.nrows(), a.ncols());
    Ok(RegressorDiff {
        abs_diff: Mat::from_fn(q, k, |i, j| (a[(i, j)] - b[(i, j)]).abs()),
        a_sq: Mat::from_fn(q, k, |i, j| a[(i, j)] * a[(i, j)]),
        b_sq: Mat::from_fn(q, k, |i, j| b[(i, j)] * b[(i, j)]),
    })
}

pub fn matrix_csv(m: &Mat<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// ASCII PGM with each entry drawn as a `cell × cell` block, scaled so the
/// largest value is white.
pub fn matrix_pgm(m: &Mat<f64>, cell: usize) -> String {
    let cell = cell.max(1);
    let max =
        (0..m.ncols()).flat_map(|j| (0..m.nrows()).map(move |i| (i, j))).map(|(i, j)| m[(i, j)]).fold(0.0, f64::max);
    let (w, h) = (m.ncols() * cell, m.nrows() * cell);
    let mut s = format!("P2\n{w} {h}\n255\n");
    for y in 0..h {
        let row: Vec<String> = (0..w)
            .map(|x| {
                let v = m[(y / cell, x / cell)];
                let g = if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) } else { 0.0 };
                format!("{}", g as u8)
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_error_arithmetic() {
        let z = [[0.0; 3]; 2];
        assert_eq!(joint_error(&z, &z).unwrap().mse, 0.0);
        let e = joint_error(&[[0.1, 0.0, 0.0]], &[[0.0; 3]]).unwrap();
        assert!((e.mse - 0.01).abs() < 1e-15);
        let e = joint_error(&[[0.1, 0.0, 0.0], [0.0, 0.2, 0.0]], &z).unwrap();
        assert!((e.mse - 0.025).abs() < 1e-15);
        assert!((e.per_joint[1] - 0.2).abs() < 1e-15);
        assert!(joint_error(&z, &[[0.0; 3]]).is_err());
    }

    fn entry(id: &str, method: &str, mse: f64) -> PairEntry {
        PairEntry {
            pair_id: id.into(),
            method: method.into(),
            error: None,
            mse: Some(mse),
            mse_rel: Some(mse / 4.0),
            per_joint_err: vec![],
            joints: vec![],
            timing: Timing { mapping_s: 1.0, regressor_s: 0.5, transfer_s: 0.1, total_s: 1.7 },
        }
    }

    #[test]
    fn aggregates_are_order_independent() {
        let entries = vec![
            entry("a", "functional", 0.1),
            entry("a", "pointwise", 0.3),
            entry("b", "functional", 0.7),
            entry("b", "pointwise", 1e-17),
            entry("c", "functional", 0.2),
        ];
        let r1 = EvalReport::from_entries(entries.clone());
        let mut rev = entries;
        rev.reverse();
        let r2 = EvalReport::from_entries(rev);
        assert_eq!(r1.aggregate, r2.aggregate);
        let f = r1.aggregate_for("functional").unwrap();
        assert_eq!((f.count, f.min, f.max), (3, 0.1, 0.7));
        assert!((f.mean - 1.0 / 3.0).abs() < 1e-15);
        assert!((r1.timing.total_s - 5.1).abs() < 1e-12);
        assert!(r1.timing.total_s >= r1.timing.mapping_s.max(r1.timing.regressor_s));
        let parsed: EvalReport = serde_json::from_str(&r1.to_json()).unwrap();
        assert_eq!(parsed.aggregate, r1.aggregate);
        assert_eq!(r1.to_csv().lines().count(), 6);
    }

    #[test]
    fn diff_of_equal_inputs_is_zero_and_squares_ignore_signs() {
        let a = Mat::from_fn(2, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0));
        let d = regressor_diff(&a, &a).unwrap();
        assert_eq!(d.mean_abs_diff(), 0.0);
        let mut flipped = a.clone();
        for i in 0..2 {
            flipped[(i, 2)] = -flipped[(i, 2)];
        }
        let d2 = regressor_diff(&flipped, &a).unwrap();
        assert_eq!(d2.a_sq, d.a_sq);
        assert_eq!(d2.mean_sq_diff(), 0.0);
        assert!(d2.mean_abs_diff() > 0.0);
        assert!(regressor_diff(&a, &Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn pgm_layout() {
        let m = Mat::from_fn(1, 2, |_, j| j as f64);
        assert_eq!(matrix_pgm(&m, 1), "P2\n2 1\n255\n0 255\n");
        assert_eq!(matrix_pgm(&m, 2).lines().count(), 5);
    }
}
