//! The `rig-spectra` command line.
//!
//! Every subcommand reads and writes plain files, so the steps of a transfer
//! (`eigs`, `fmap`, `fit-regressor`, `transfer`) can be run and cached
//! separately. Exit status is 0 on success, 1 when the computation fails and
//! 2 for invalid arguments or configuration.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rig_spectra::evalbench::{load_manifest, run_batch, write_fixture_suite};
use rig_spectra::fixtures::{generate, FixtureKind, FixtureSpec, IdentityParams};
use rig_spectra::fmap::{load_fmap, save_fmap, save_fmap_csv, FunctionalMap};
use rig_spectra::mesh::{load_landmark_list, load_landmarks, load_mesh, zip_landmarks, LandmarkSet};
use rig_spectra::pipeline::{estimate_map, fit_regressor, pointwise_transfer, PipelineConfig, Rig};
use rig_spectra::regressor::{
    load_skeleton, load_spatial_regressor, load_weights, save_skeleton, save_spatial_regressor,
    save_spectral_regressor, save_weights, to_spectral, Skeleton, Solver, SpatialRegressor,
};
use rig_spectra::skinning::{animate, load_poses};
use rig_spectra::spectral::{eigenbasis_cached, load_basis, save_basis};
use rig_spectra::transfer::{
    transfer_skeleton, transfer_skinning, Pullback, SkinningQuery, TransferError, TransferMethod,
};
use rig_spectra::{MeshId, SpectralBasis, TriMesh};

pub use config::Config;

/// Environment variable naming the eigenbasis cache directory; takes
/// precedence over `--spectral-cache`.
pub const CACHE_ENV: &str = "RIG_SPECTRA_CACHE";

#[derive(Debug, Parser)]
#[command(name = "rig-spectra", version, about = "Spectral skeleton and skinning transfer between triangle meshes")]
pub struct Cli {
    /// TOML file with [spectral], [regressor], [fmap] and [io] sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for cached eigenbases.
    #[arg(long, global = true, value_name = "DIR")]
    pub spectral_cache: Option<PathBuf>,
    /// Rescale every input mesh (and its skeleton) to unit area about its
    /// centroid. Outputs stay in the rescaled frame.
    #[arg(long, global = true)]
    pub normalize_area: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the Laplace-Beltrami eigenbasis of a mesh.
    Eigs(EigsArgs),
    /// Estimate the functional map between a rigged and an unrigged mesh.
    Fmap(FmapArgs),
    /// Fit the joint regressor of a rigged mesh.
    FitRegressor(FitRegressorArgs),
    /// Transfer a skeleton (and optionally skinning weights) through a map.
    Transfer(TransferArgs),
    /// Pose a skinned mesh for every frame of a pose file.
    Animate(AnimateArgs),
    /// Run the transfer on every pair of a manifest and report joint errors.
    Bench(BenchArgs),
    /// Generate synthetic rigged fixtures.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct EigsArgs {
    pub mesh: PathBuf,
    /// Number of eigenpairs [default: spectral.k_final]
    #[arg(short)]
    pub k: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FmapArgs {
    /// Rigged mesh.
    #[arg(long)]
    pub src: PathBuf,
    /// Unrigged mesh.
    #[arg(long)]
    pub tgt: PathBuf,
    /// Landmark pairs, one `src_idx tgt_idx` per line.
    #[arg(long, required_unless_present = "src_landmarks", conflicts_with_all = ["src_landmarks", "tgt_landmarks"])]
    pub landmarks: Option<PathBuf>,
    /// Landmark indices on the rigged mesh, one per line; paired in order
    /// with --tgt-landmarks.
    #[arg(long, requires = "tgt_landmarks")]
    pub src_landmarks: Option<PathBuf>,
    #[arg(long, requires = "src_landmarks")]
    pub tgt_landmarks: Option<PathBuf>,
    #[arg(long)]
    pub k_init: Option<usize>,
    #[arg(long)]
    pub k_final: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the map as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitRegressorArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Skeleton JSON.
    #[arg(long)]
    pub rig: PathBuf,
    /// Skin weights (MatrixMarket).
    #[arg(long)]
    pub weights: PathBuf,
    /// Overrides `regressor.solver` from the config.
    #[arg(long)]
    pub solver: Option<Solver>,
    /// Output spatial regressor.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the spectral regressor, using --basis or a fresh basis.
    #[arg(long)]
    pub spectral_out: Option<PathBuf>,
    /// Eigenbasis written by `eigs` for the same mesh.
    #[arg(long, requires = "spectral_out")]
    pub basis: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryArg {
    TargetToSource,
    SourceToTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PullbackArg {
    PreimageMean,
    Direct,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Skeleton JSON of the rigged mesh.
    #[arg(long)]
    pub rig: PathBuf,
    /// Skin weights of the rigged mesh.
    #[arg(long)]
    pub weights: PathBuf,
    /// Rigged mesh.
    #[arg(long)]
    pub src: PathBuf,
    /// Unrigged mesh.
    #[arg(long)]
    pub tgt: PathBuf,
    /// Map written by `rig-spectra fmap` for the same two meshes.
    #[arg(long)]
    pub fmap: PathBuf,
    #[arg(long, default_value = "functional")]
    pub method: TransferMethod,
    #[arg(long, value_enum, default_value = "preimage-mean")]
    pub pullback: PullbackArg,
    /// Regressor written by `fit-regressor`; fitted on the fly when absent.
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    /// Output skeleton JSON.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also transfer the skinning weights.
    #[arg(long, requires = "o_weights")]
    pub skinning: bool,
    /// Output skin weights (MatrixMarket).
    #[arg(long = "o-weights", alias = "weights-out", value_name = "FILE")]
    pub o_weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "target-to-source")]
    pub query: QueryArg,
}

#[derive(Debug, Args)]
pub struct AnimateArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub rig: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// JSON array of frames, each an array of per-joint axis-angle triples.
    #[arg(long)]
    pub poses: PathBuf,
    /// Output directory for the frame OBJ files.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report JSON; a CSV is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IdentityArg {
    Default,
    Alternate,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long, default_value = "capsule_humanoid")]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 2)]
    pub subdiv: u32,
    /// Approximate vertex count; overrides --subdiv.
    #[arg(long)]
    pub target_vertices: Option<usize>,
    /// Pose JSON (one frame of per-joint axis-angle triples).
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Normal displacement noise as a fraction of the bbox diagonal.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, value_enum, default_value = "default")]
    pub identity: IdentityArg,
    /// Write the whole benchmark suite and its manifest instead of one fixture.
    #[arg(long, conflicts_with_all = ["pose", "seed", "noise", "target_vertices"])]
    pub suite: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit status 2.
    Usage(String),
    /// The computation failed; exit status 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

fn failed<E: Into<rig_spectra::Error>>(e: E) -> CliError {
    CliError::Failed(e.into().to_string())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    config: Config,
    pipeline: PipelineConfig,
    cache: Option<PathBuf>,
    normalize: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(path) => Config::load(path).map_err(|e| CliError::Usage(format!("config: {e}")))?,
            None => Config::default(),
        };
        let pipeline = config.pipeline().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let cache = std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| cli.spectral_cache.clone())
            .or_else(|| config.io.spectral_cache.clone());
        Ok(Context { config, pipeline, cache, normalize: cli.normalize_area })
    }

    fn mesh(&self, path: &Path) -> Result<TriMesh, CliError> {
        Ok(self.mesh_and_frame(path)?.0)
    }

    /// The mesh and the similarity `x ↦ (x − c)s + c` applied to it.
    fn mesh_and_frame(&self, path: &Path) -> Result<(TriMesh, [f64; 3], f64), CliError> {
        let mesh: TriMesh = load_mesh(path).map_err(failed)?;
        if !self.normalize {
            return Ok((mesh, [0.0; 3], 1.0));
        }
        let s = 1.0 / mesh.total_area().sqrt();
        let c = mesh.centroid();
        Ok((mesh.normalized_area().map_err(failed)?, c, s))
    }

    fn rig(&self, mesh: &Path, skeleton: &Path, weights: &Path) -> Result<Rig, CliError> {
        let (mesh, c, s) = self.mesh_and_frame(mesh)?;
        let mut skeleton = load_skeleton(skeleton).map_err(failed)?;
        if self.normalize {
            let joints = skeleton.joints().iter().map(|j| std::array::from_fn(|d| (j[d] - c[d]) * s + c[d])).collect();
            skeleton = skeleton.with_joints(joints).map_err(failed)?;
        }
        let weights = load_weights(weights).map_err(failed)?;
        if weights.n_vertices() != mesh.n_vertices() || weights.n_joints() != skeleton.len() {
            return Err(CliError::Failed(format!(
                "regressor: weights are {}x{} but the mesh has {} vertices and the skeleton {} joints",
                weights.n_vertices(),
                weights.n_joints(),
                mesh.n_vertices(),
                skeleton.len()
            )));
        }
        Ok(Rig { mesh, skeleton, weights })
    }

    fn basis(&self, mesh: &TriMesh, k: usize) -> Result<SpectralBasis, CliError> {
        let k = k.min(mesh.n_vertices().saturating_sub(1));
        eigenbasis_cached(mesh, k, self.cache.as_deref()).map_err(failed)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(&cli)?;
    match &cli.command {
        Command::Eigs(a) => eigs(&ctx, a),
        Command::Fmap(a) => fmap(&ctx, a),
        Command::FitRegressor(a) => fit(&ctx, a),
        Command::Transfer(a) => transfer(&ctx, a),
        Command::Animate(a) => animate_cmd(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Fixtures(a) => fixtures(a),
    }
}

fn eigs(ctx: &Context, a: &EigsArgs) -> Result<(), CliError> {
    let mesh = ctx.mesh(&a.mesh)?;
    let k = a.k.unwrap_or(ctx.config.spectral.k_final);
    if k == 0 {
        return Err(CliError::Usage("-k must be positive".into()));
    }
    let basis = ctx.basis(&mesh, k)?;
    save_basis(&basis, &a.output).map_err(failed)?;
    log::info!("{} eigenpairs of {} written to {}", basis.k(), a.mesh.display(), a.output.display());
    Ok(())
}

fn read_landmarks(a: &FmapArgs) -> Result<LandmarkSet, CliError> {
    match (&a.landmarks, &a.src_landmarks, &a.tgt_landmarks) {
        (Some(pairs), _, _) => load_landmarks(pairs).map_err(failed),
        (None, Some(s), Some(t)) => {
            let s = load_landmark_list(s).map_err(failed)?;
            let t = load_landmark_list(t).map_err(failed)?;
            zip_landmarks(&s, &t).map_err(failed)
        }
        _ => Err(CliError::Usage("landmarks are required".into())),
    }
}

fn fmap(ctx: &Context, a: &FmapArgs) -> Result<(), CliError> {
    let mut cfg = ctx.pipeline.clone();
    cfg.k_init = a.k_init.unwrap_or(cfg.k_init);
    cfg.k_final = a.k_final.unwrap_or(cfg.k_final);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let landmarks = read_landmarks(a)?;
    let src = ctx.mesh(&a.src)?;
    let tgt = ctx.mesh(&a.tgt)?;
    landmarks.validate(src.n_vertices(), tgt.n_vertices()).map_err(failed)?;
    let (sb, tb) = (ctx.basis(&src, cfg.k_final)?, ctx.basis(&tgt, cfg.k_final)?);
    let map = estimate_map(&sb, &tb, &landmarks, &cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    save_fmap(&map, &a.output).map_err(failed)?;
    if let Some(csv) = &a.csv {
        save_fmap_csv(&map, csv).map_err(failed)?;
    }
    log::info!("{}x{} map written to {}", map.target_k, map.source_k, a.output.display());
    Ok(())
}

fn fit(ctx: &Context, a: &FitRegressorArgs) -> Result<(), CliError> {
    let rig = ctx.rig(&a.mesh, &a.rig, &a.weights)?;
    let mut cfg = ctx.pipeline.clone();
    if let Some(solver) = a.solver {
        cfg.opt.solver = solver;
    }
    let reg = fit_regressor(&rig, &cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    if let Some(d) = &reg.diagnostics {
        log::info!("energy {:e} -> {:e} after {} iterations", d.initial.total, d.final_energy.total, d.iterations);
    }
    save_spatial_regressor(&reg, &a.output).map_err(failed)?;
    if let Some(out) = &a.spectral_out {
        let basis = match &a.basis {
            Some(path) => load_basis(path).map_err(failed)?,
            None => ctx.basis(&rig.mesh, cfg.k_final)?,
        };
        let spectral = to_spectral(&reg, &basis).map_err(failed)?;
        save_spectral_regressor(&spectral, out).map_err(failed)?;
    }
    Ok(())
}

fn check_id(
    what: &'static str,
    expected: MeshId,
    mesh: &TriMesh,
    map: &Path,
    mesh_path: &Path,
) -> Result<(), CliError> {
    let got = mesh.content_hash();
    if expected == got {
        return Ok(());
    }
    let e = TransferError::OrientationMismatch { what, expected, got };
    Err(CliError::Failed(format!("transfer: {e} ({} does not belong to {})", map.display(), mesh_path.display())))
}

fn transfer(ctx: &Context, a: &TransferArgs) -> Result<(), CliError> {
    let rig = ctx.rig(&a.src, &a.rig, &a.weights)?;
    let tgt = ctx.mesh(&a.tgt)?;
    let map: FunctionalMap = load_fmap(&a.fmap).map_err(failed)?;
    check_id("map target (rigged mesh)", map.target_id, &rig.mesh, &a.fmap, &a.src)?;
    check_id("map source (unrigged mesh)", map.source_id, &tgt, &a.fmap, &a.tgt)?;
    let sb = ctx.basis(&rig.mesh, map.target_k)?;
    let tb = ctx.basis(&tgt, map.source_k)?;

    let regressor: SpatialRegressor = match &a.regressor {
        Some(path) => {
            let r = load_spatial_regressor(path).map_err(failed)?;
            if r.mesh_id != rig.mesh.content_hash() {
                return Err(CliError::Failed(format!(
                    "regressor: {} was fitted on a different mesh than {}",
                    path.display(),
                    a.src.display()
                )));
            }
            r
        }
        None => fit_regressor(&rig, &ctx.pipeline).map_err(|e| CliError::Failed(e.to_string()))?,
    };
    let result = match a.method {
        TransferMethod::Functional => {
            let spectral = to_spectral(&regressor, &sb).map_err(failed)?.truncated(map.target_k);
            transfer_skeleton(&spectral, &map, &tb, &tgt).map_err(failed)?
        }
        TransferMethod::Pointwise => {
            let pullback = match a.pullback {
                PullbackArg::PreimageMean => Pullback::PreimageMean,
                PullbackArg::Direct => Pullback::Direct,
            };
            pointwise_transfer(&rig, &regressor, &sb, &tgt, &tb, &map, pullback).map_err(failed)?
        }
    };
    let skeleton: Skeleton = rig.skeleton.with_joints(result.joints).map_err(failed)?;
    save_skeleton(&skeleton, &a.output).map_err(failed)?;

    if a.skinning {
        let query = match a.query {
            QueryArg::TargetToSource => SkinningQuery::TargetToSource,
            QueryArg::SourceToTarget => SkinningQuery::SourceToTarget,
        };
        let weights = transfer_skinning(&sb, &tb, &map, &rig.weights, &tgt, query).map_err(failed)?;
        let path = a.o_weights.as_ref().ok_or_else(|| CliError::Usage("--skinning needs --o-weights".into()))?;
        save_weights(&weights, path).map_err(failed)?;
    }
    Ok(())
}

fn animate_cmd(ctx: &Context, a: &AnimateArgs) -> Result<(), CliError> {
    let rig = ctx.rig(&a.mesh, &a.rig, &a.weights)?;
    let poses = load_poses(&a.poses, rig.skeleton.len()).map_err(failed)?;
    let frames = animate(&rig.mesh, &rig.weights, &rig.skeleton, &poses, &a.output).map_err(failed)?;
    log::info!("{} frames written to {}", frames.len(), a.output.display());
    Ok(())
}

fn bench(ctx: &Context, a: &BenchArgs) -> Result<(), CliError> {
    if a.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pairs = load_manifest(&a.manifest).map_err(|e| CliError::Failed(e.to_string()))?;
    let report = run_batch(&pairs, &ctx.pipeline, a.workers, ctx.cache.as_deref())
        .map_err(|e| CliError::Failed(e.to_string()))?;
    report.save(&a.out).map_err(|e| CliError::Failed(e.to_string()))?;
    for agg in &report.aggregate {
        println!(
            "{:<10} pairs {:>3}  failures {:>2}  mse mean {:.3e}  min {:.3e}  max {:.3e}",
            agg.method, agg.count, agg.failures, agg.mean, agg.min, agg.max
        );
    }
    Ok(())
}

fn fixtures(a: &FixturesArgs) -> Result<(), CliError> {
    if a.suite {
        let manifest = write_fixture_suite(&a.output, a.subdiv).map_err(|e| CliError::Failed(e.to_string()))?;
        println!("{}", manifest.display());
        return Ok(());
    }
    let mut spec = FixtureSpec::new(a.kind, a.subdiv).with_seed(a.seed).with_noise(a.noise);
    if a.identity == IdentityArg::Alternate {
        spec = spec.with_identity(IdentityParams::alternate());
    }
    if let Some(n) = a.target_vertices {
        spec = spec.with_target_vertices(n);
    }
    if let Some(path) = &a.pose {
        let mut poses = load_poses(path, spec.joint_count()).map_err(failed)?;
        if poses.len() != 1 {
            return Err(CliError::Usage(format!("{} must hold exactly one pose", path.display())));
        }
        spec = spec.with_pose(poses.remove(0));
    }
    let fixture = generate(&spec).map_err(|e| match e {
        rig_spectra::fixtures::FixtureError::InvalidSpec(m) => CliError::Usage(format!("fixtures: {m}")),
        other => failed(other),
    })?;
    fixture.save(&a.output).map_err(failed)?;
    log::info!("{} vertices written to {}", fixture.mesh.n_vertices(), a.output.display());
    Ok(())
}
