//! Spectral skeleton transfer.
//!
//! Given a rigged source mesh, an un-rigged target mesh and a handful of
//! landmark pairs, this crate computes Laplace–Beltrami eigenbases, a
//! functional map between the two shapes, and a joint regressor expressed
//! on Fourier coefficients. The regressor is carried through the map to
//! place the skeleton on the target; skinning weights can follow, and the
//! result can be animated with linear blend skinning.

mod error;
pub mod evalbench;
pub mod fixtures;
pub mod fmap;
pub mod knn;
pub mod mesh;
pub mod pipeline;
pub mod regressor;
pub mod scalar;
pub mod skinning;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use mesh::{MeshError, MeshId, TriMesh};
pub use scalar::Scalar;
pub use spectral::{SpectralBasis, SpectralError};

/// Double-precision mesh.
pub type Mesh = TriMesh<f64>;
/// Single-precision mesh.
pub type MeshF32 = TriMesh<f32>;
