//! Numerical laboratory for blowup of the focusing inhomogeneous
//! mass-critical half-wave equation `i u_t = D u - k(x)|u|^2 u` in one dimension.

pub mod error;
pub mod evolution;
pub mod experiment;
pub mod fit;
pub mod ground_state;
pub mod grid;
pub mod inhomogeneity;
pub mod io;
pub mod krylov;
pub mod linearized;
pub mod modulation;
pub mod profile;
pub mod resample;
pub mod spectral;
pub mod virial;

pub use error::{Error, Result};
pub use grid::{GridFunction, Multiplier, SpectralGrid};
pub use inhomogeneity::InhomogeneityProfile;
