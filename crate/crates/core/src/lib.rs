//! Dispersive estimates for higher-order Schrödinger operators `(-Δ)^m + V`
//! in odd dimensions: free kernels, oscillatory quadrature, threshold
//! projections and the perturbed propagator.

pub mod cutoff;
pub mod error;
pub mod free_propagator;
pub mod free_resolvent;
pub mod linalg;
pub mod m_inverse;
pub mod model;
pub mod oscillatory;
pub mod perturbed;
pub mod potential;
pub mod projections;
pub mod quad;
pub mod shooting;
pub mod space;

pub use error::{Error, Result};
pub use free_resolvent::SignBranch;
pub use model::{make_params, HalfIndex, IndexSet, ModelParams, Regime};
pub use potential::{PotentialSpec, SampledPotential};
pub use space::{GridKind, GridSpace};
