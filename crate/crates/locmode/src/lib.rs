//! Localized modes and exact Gaussian dynamics for networks of harmonic
//! oscillators coupled to structured bosonic reservoirs whose spectral
//! densities have band gaps.
//!
//! The crate computes, for a quadratic network + reservoir model:
//!
//! * memory kernels and their Laplace/boundary transforms ([`kernels`]),
//! * localized (dissipationless) modes, critical couplings, and stability
//!   boundaries ([`analysis`]),
//! * the exact propagator matrix built from pole and branch-cut
//!   contributions ([`greens`]),
//! * thermal-reservoir covariance dynamics of Gaussian states
//!   ([`covariance`]),
//! * slow brute-force oracles (time stepping, discretized reservoirs) used
//!   to validate the fast paths ([`oracle`]),
//! * a coupled-cavity waveguide model builder ([`waveguide`]).

pub mod analysis;
pub mod covariance;
pub mod error;
pub mod greens;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod perturbation;
pub mod quad;
pub mod waveguide;

pub use error::{
    AnalysisError, CovarianceError, GreensError, LinalgError, ModelError, OracleError,
    PerturbationError, QuadratureError,
};
pub use model::{GaussianState, ReservoirSpec, SpectralDensity, SystemModel};
