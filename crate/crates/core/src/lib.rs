//! Current steering for multi-contact stimulation leads.
//!
//! The crate builds lead field matrices for directional leads, reduces them to
//! a target/nuisance split, and optimizes electrode current patterns with
//! three methods:
//!
//! * reciprocity (`rp`): a bipolar anode/cathode pair picked from `L₁ᵀx₁`;
//! * Tikhonov-regularized least squares (`tls`) with a nuisance weight;
//! * L1-regularized L1 fitting (`l1l1`) with a censored nuisance term, solved
//!   as a linear program.
//!
//! Hyperparameters of the multipolar methods are tuned by a lattice search
//! that maximizes the field ratio `Θ = Γ/Ξ` subject to `Γ ≥ Γ₀`. The
//! [`harness`] module runs whole noise-robustness studies and writes CSV/JSON
//! tables.

pub mod error;
pub mod harness;
pub mod leadfield;
pub mod lp;
pub mod model;
pub mod numeric;
pub mod par;
pub mod search;
pub mod solvers;

pub use error::{Error, Result};
