//! Simulation and verification engines for the random field Ising model
//! with independent, possibly non-Gaussian disorder.

// `!(x > 0.0)` guards reject NaN on purpose; quadrature nodes keep their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod disorder;
pub mod exact;
pub mod harness;
pub mod ibp;
pub mod lattice;
pub mod mcmc;
pub mod model;
pub mod observables;

pub use disorder::{DisorderRealization, DisorderRecord, FieldProfile, ZetaDistribution};
pub use exact::ExactGibbs;
pub use lattice::LatticeSpec;
pub use model::ModelParams;
pub use observables::QuenchedStats;
