//! Physics-informed neural networks trained as two-objective problems.
//!
//! The data loss (fit to noisy samples of the solution) and the physics loss
//! (PDE residual plus initial/boundary mismatch) are treated as separate
//! objectives. Fronts are traced with a weighted-sum sweep, the multiple
//! gradient descent algorithm (MGDA) and NSGA-II, then post-processed with a
//! non-dominance filter and a convex-hull report in linear and log-log scale.
//!
//! Derivatives are exact: network input derivatives travel forward as
//! second-order jets ([`autodiff::Jet2`]) and parameter gradients come from a
//! reverse sweep over a layer-level tape ([`autodiff::Tape`]).

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod moo;
pub mod network;
pub mod nsga2;
pub mod problems;
pub mod train;

pub use error::{Error, Result};
