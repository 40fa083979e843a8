use crate::fixtures::FixtureError;
use crate::fmap::FmapError;
use crate::mesh::MeshError;
use crate::regressor::RegressorError;
use crate::skinning::SkinningError;
use crate::spectral::SpectralError;
use crate::transfer::TransferError;

/// Any error produced by the crate, tagged with the module it came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("spectral: {0}")]
    Spectral(#[from] SpectralError),
    #[error("fmap: {0}")]
    Fmap(#[from] FmapError),
    #[error("regressor: {0}")]
    Regressor(#[from] RegressorError),
    #[error("transfer: {0}")]
    Transfer(#[from] TransferError),
    #[error("skinning: {0}")]
    Skinning(#[from] SkinningError),
    #[error("fixtures: {0}")]
    Fixture(#[from] FixtureError),
    #[error("evalbench: {0}")]
    Eval(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
