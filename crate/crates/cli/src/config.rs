//! TOML configuration with `[spectral]`, `[regressor]`, `[fmap]` and `[io]`
//! sections. Missing keys keep their defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use rig_spectra::pipeline::PipelineConfig;
use rig_spectra::regressor::Solver;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub spectral: SpectralSection,
    pub regressor: RegressorSection,
    pub fmap: FmapSection,
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub k_init: usize,
    pub k_final: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { k_init: 20, k_final: 120 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorSection {
    pub w_rec: f64,
    pub w_loc: f64,
    pub w_spa: f64,
    pub w_con: f64,
    pub lr: f64,
    pub iters: usize,
    pub threshold: f64,
    /// `cg`, `direct` or `adam`.
    pub solver: String,
}

impl Default for RegressorSection {
    fn default() -> Self {
        RegressorSection {
            w_rec: 1.0,
            w_loc: 1e4,
            w_spa: 100.0,
            w_con: 1.0,
            lr: 0.1,
            iters: 1000,
            threshold: 1e-6,
            solver: "cg".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FmapSection {
    /// Number of log-spaced diffusion times per landmark.
    pub times: usize,
    pub mu_commute: f64,
}

impl Default for FmapSection {
    fn default() -> Self {
        FmapSection { times: 5, mu_commute: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub spectral_cache: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        let r = &self.regressor;
        for (name, v) in [("w_rec", r.w_rec), ("w_loc", r.w_loc), ("w_spa", r.w_spa), ("w_con", r.w_con)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("regressor.{name} must be a finite non-negative number, got {v}"));
            }
        }
        if self.spectral.k_init == 0 || self.spectral.k_init > self.spectral.k_final {
            return Err(format!(
                "need 0 < spectral.k_init <= spectral.k_final, got {} and {}",
                self.spectral.k_init, self.spectral.k_final
            ));
        }
        if self.fmap.times == 0 {
            return Err("fmap.times must be at least 1".into());
        }
        self.solver()?;
        Ok(())
    }

    pub fn solver(&self) -> Result<Solver, String> {
        self.regressor.solver.parse()
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, String> {
        let mut p = PipelineConfig {
            k_init: self.spectral.k_init,
            k_final: self.spectral.k_final,
            descriptor_times: self.fmap.times,
            mu_commute: self.fmap.mu_commute,
            threshold: self.regressor.threshold,
            ..PipelineConfig::default()
        };
        let r = &self.regressor;
        p.weights.rec = r.w_rec;
        p.weights.loc = r.w_loc;
        p.weights.spa = r.w_spa;
        p.weights.con = r.w_con;
        p.opt.lr = r.lr;
        p.opt.iters = r.iters;
        p.opt.solver = self.solver()?;
        Ok(p)
    }
}
