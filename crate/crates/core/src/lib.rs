//! Energy-landscape control of spin rings and the robustness of transfer
//! fidelity to Hamiltonian-basis dephasing.
//!
//! The crate is organised bottom-up:
//!
//! - [`ring`]: ring Hamiltonians, spectral models, states.
//! - [`dynamics`]: closed-form projector propagation and the vectorized LTI form.
//! - [`expm`]: dense matrix exponential used by the LTI route.
//! - [`sampler`]: Sobol-sampled, CP-filtered dephasing rate matrices.
//! - [`synthesis`]: controller optimization under three objectives.
//! - [`sensitivity`]: perturbed errors and analytic / KDE log-sensitivities.
//! - [`stats`]: correlation tests and the orthogonal-pair classifier.

pub mod dynamics;
pub mod error;
pub mod expm;
mod float_serde;
pub mod ring;
pub mod sampler;
pub mod seed;
pub mod sensitivity;
pub mod stats;
pub mod synthesis;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
