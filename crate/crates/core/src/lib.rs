//! Numerical model-error learning for a plane-stress plate with a hole.
//!
//! The crate generates paired coarse (Q4) and fine (Q8) finite-element
//! solutions under random Gaussian-random-field moduli and loads, trains a
//! two-branch network that maps the coarse displacement field to (a) the
//! nodal model error `u_H − u_R` at coarse nodes and (b) the fine-mesh
//! displacement field, and evaluates the trained network.
//!
//! Pipeline stages map onto modules:
//!
//! - [`mesh`]: structured Q4/Q8 quarter-plate meshes and field transfer
//! - [`grf`]: Gaussian random modulus fields
//! - [`fem`]: plane-stress assembly and solution
//! - [`dataset`]: paired-solution samples, persistence and splitting
//! - [`nn`]: differentiable layers and gradient checking
//! - [`model`]: the two-branch network, losses, training, MC dropout
//! - [`eval`]: histograms, error maps, ablations, superresolution exports
//! - [`config`] and [`pipeline`]: run configuration and the CLI stages

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fem;
pub mod grf;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
