//! Passivity-preserving safety filtering for port-Hamiltonian mechanical systems.
//!
//! The crate is layered bottom-up:
//!
//! - [`ph`]: mechanical port-Hamiltonian models, energies, gradients, Poisson brackets
//! - [`pbc`]: energy-balancing controllers and the passive closed loop they produce
//! - [`cbf`]: barrier functions, generalized energy barriers and the constraint functional `Ψ`
//! - [`filter`]: the closed-form CBF filter, a KKT reference solver and the passivity monitor
//! - [`models`]: the cart-pole and a point-mass fixture
//! - [`sim`]: fixed-step RK4 simulation, scenario configs and energy audits
//! - [`validate`]: the self-check suites behind `pcbf validate`

pub mod cbf;
pub mod error;
pub mod filter;
pub mod models;
pub mod numdiff;
pub mod pbc;
pub mod ph;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
