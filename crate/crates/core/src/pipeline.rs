//! The end-to-end transfer: bases, map, regressor, skeleton.

use std::path::Path;
use std::time::Instant;

use crate::error::Result;
use crate::fmap::{
    default_times, fit_fmap, fmap_to_p2p, fmap_to_p2p_reverse, landmark_descriptors, zoomout_refine, FunctionalMap,
    PointToPointMap,
};
use crate::mesh::{LandmarkSet, TriMesh};
use crate::regressor::{
    build_mask, fit_spatial_regressor, to_spectral, OptConfig, Skeleton, SkinWeights, SpatialRegressor,
    SpectralRegressor, WeightsConfig, MASK_THRESHOLD,
};
use crate::spectral::{assemble_cotan, eigenbasis_cached, eigenbasis_with, EigenOptions, SpectralBasis};
use crate::transfer::{transfer_skeleton, transfer_skeleton_pointwise, Pullback, TransferError, TransferResult};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Size of the map fitted from descriptors.
    pub k_init: usize,
    /// Size after refinement; also the number of eigenpairs computed.
    pub k_final: usize,
    pub zoomout_step: usize,
    /// Number of diffusion times per landmark.
    pub descriptor_times: usize,
    pub mu_commute: f64,
    pub weights: WeightsConfig,
    pub opt: OptConfig,
    pub threshold: f64,
    pub eigen: EigenOptions,
    pub pullback: Pullback,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_init: 20,
            k_final: 120,
            zoomout_step: 1,
            descriptor_times: 5,
            mu_commute: 1e-2,
            weights: WeightsConfig::default(),
            opt: OptConfig::default(),
            threshold: MASK_THRESHOLD,
            eigen: EigenOptions::default(),
            pullback: Pullback::PreimageMean,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_init == 0 || self.k_init > self.k_final {
            return Err(crate::Error::Eval(format!(
                "need 0 < k_init <= k_final, got {} and {}",
                self.k_init, self.k_final
            )));
        }
        Ok(())
    }
}

/// A rigged shape.
#[derive(Debug, Clone)]
pub struct Rig {
    pub mesh: TriMesh,
    pub skeleton: Skeleton,
    pub weights: SkinWeights,
}

/// Eigenbasis with `cfg.k_final` modes, through the cache when one is given.
pub fn compute_basis(mesh: &TriMesh, cfg: &PipelineConfig, cache: Option<&Path>) -> Result<SpectralBasis> {
    let k = cfg.k_final.min(mesh.n_vertices().saturating_sub(1));
    Ok(match cache {
        Some(dir) => eigenbasis_cached(mesh, k, Some(dir))?,
        None => eigenbasis_with(&assemble_cotan(mesh)?, k, &cfg.eigen)?,
    })
}

/// Functional map from the unrigged shape's coefficients to the rigged
/// shape's (`k_final × k_final`). `landmarks` pairs rigged vertices with
/// unrigged ones.
pub fn estimate_map(
    rigged: &SpectralBasis,
    unrigged: &SpectralBasis,
    landmarks: &LandmarkSet,
    cfg: &PipelineConfig,
) -> Result<FunctionalMap> {
    cfg.validate()?;
    let area = |b: &SpectralBasis| b.mass().iter().sum::<f64>();
    let desc_m =
        landmark_descriptors(rigged, &landmarks.source_indices(), &default_times(area(rigged), cfg.descriptor_times))?;
    let desc_n = landmark_descriptors(
        unrigged,
        &landmarks.target_indices(),
        &default_times(area(unrigged), cfg.descriptor_times),
    )?;
    let c0 = fit_fmap(unrigged, rigged, &desc_n, &desc_m, cfg.k_init, cfg.mu_commute)?;
    Ok(zoomout_refine(unrigged, rigged, &c0, cfg.k_final, cfg.zoomout_step)?)
}

/// Spatial regressor of a rig: mask from its weights, then the energy fit.
pub fn fit_regressor(rig: &Rig, cfg: &PipelineConfig) -> Result<SpatialRegressor> {
    let mask = build_mask(&rig.skeleton, &rig.weights, cfg.threshold)?;
    Ok(fit_spatial_regressor(&rig.mesh, &rig.skeleton, &mask, &cfg.weights, &cfg.opt)?)
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Timing {
    /// Eigenbases, descriptors, map fit and refinement.
    pub mapping_s: f64,
    /// Regressor fit and its spectral form.
    pub regressor_s: f64,
    pub transfer_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub map: FunctionalMap,
    pub regressor: SpatialRegressor,
    pub spectral: SpectralRegressor,
    pub functional: TransferResult,
    /// The pointwise baseline may fail on its own without invalidating the
    /// functional result.
    pub pointwise: std::result::Result<TransferResult, TransferError>,
    pub timing: Timing,
}

/// Bases for both shapes, then [`transfer_rig_with_bases`].
pub fn transfer_rig(
    rig: &Rig,
    target: &TriMesh,
    landmarks: &LandmarkSet,
    cfg: &PipelineConfig,
    cache: Option<&Path>,
) -> Result<PipelineOutput> {
    let t0 = Instant::now();
    let (rb, tb) = rayon::join(|| compute_basis(&rig.mesh, cfg, cache), || compute_basis(target, cfg, cache));
    let (rb, tb) = (rb?, tb?);
    let bases_s = t0.elapsed().as_secs_f64();
    let mut out = transfer_rig_with_bases(rig, &rb, target, &tb, landmarks, cfg, None)?;
    out.timing.mapping_s += bases_s;
    out.timing.total_s += bases_s;
    Ok(out)
}

/// Map, regressor and both transfers for precomputed bases. A previously
/// fitted regressor for `rig` can be passed to skip the fit.
pub fn transfer_rig_with_bases(
    rig: &Rig,
    rig_basis: &SpectralBasis,
    target: &TriMesh,
    target_basis: &SpectralBasis,
    landmarks: &LandmarkSet,
    cfg: &PipelineConfig,
    regressor: Option<&SpatialRegressor>,
) -> Result<PipelineOutput> {
    let start = Instant::now();
    let map = estimate_map(rig_basis, target_basis, landmarks, cfg)?;
    let mapping_s = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let regressor = match regressor {
        Some(r) => r.clone(),
        None => fit_regressor(rig, cfg)?,
    };
    let spectral = to_spectral(&regressor, rig_basis)?.truncated(map.target_k);
    let regressor_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let functional = transfer_skeleton(&spectral, &map, target_basis, target)?;
    let pointwise = pointwise_transfer(rig, &regressor, rig_basis, target, target_basis, &map, cfg.pullback);
    let transfer_s = t.elapsed().as_secs_f64();
    Ok(PipelineOutput {
        map,
        regressor,
        spectral,
        functional,
        pointwise,
        timing: Timing { mapping_s, regressor_s, transfer_s, total_s: start.elapsed().as_secs_f64() },
    })
}

/// The point-to-point map needed by `mode`, then the pointwise transfer.
pub fn pointwise_transfer(
    rig: &Rig,
    regressor: &SpatialRegressor,
    rig_basis: &SpectralBasis,
    target: &TriMesh,
    target_basis: &SpectralBasis,
    map: &FunctionalMap,
    mode: Pullback,
) -> std::result::Result<TransferResult, TransferError> {
    let p2p = pointwise_map(rig_basis, target_basis, map, mode).map_err(|_| TransferError::DimensionMismatch {
        what: "functional map size",
        expected: map.target_k,
        got: rig_basis.k(),
    })?;
    transfer_skeleton_pointwise(regressor, &p2p, &rig.mesh, target, mode)
}

/// Target→source assignment for [`Pullback::PreimageMean`], source→target
/// for [`Pullback::Direct`].
pub fn pointwise_map(
    rig_basis: &SpectralBasis,
    target_basis: &SpectralBasis,
    map: &FunctionalMap,
    mode: Pullback,
) -> Result<PointToPointMap> {
    Ok(match mode {
        Pullback::PreimageMean => fmap_to_p2p_reverse(target_basis, rig_basis, map)?,
        Pullback::Direct => fmap_to_p2p(target_basis, rig_basis, map)?,
    })
}
