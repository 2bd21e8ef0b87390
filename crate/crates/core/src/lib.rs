//! Safety-critical control under input constraints.
//!
//! Given a control-affine system ẋ = f(x) + g(x)u with bounded inputs
//! u ∈ U and a safety function h, this crate builds the recursive barrier
//! chain b_0 … b_N that folds the worst admissible input into each level,
//! checks the resulting certificate over the inner safe set C*, synthesizes
//! pointwise QP controllers that keep C* invariant, and simulates the
//! closed loop.
//!
//! Modules:
//! - [`jet`]: nested forward-mode automatic differentiation
//! - [`kappa`]: extended class-K functions
//! - [`system`]: control-affine models and admissible input sets
//! - [`models`]: built-in case studies
//! - [`chain`]: the barrier chain b_0 … b_N and the sets C_i, C*
//! - [`qp`]: small dense convex QP solver
//! - [`controller`]: pointwise feedback laws
//! - [`verify`]: certificate checking and boundary diagnostics
//! - [`sim`]: fixed-step closed-loop simulation
//! - [`config`]: scenario configuration files
//! - [`scenario`]: configuration → runnable objects

pub mod chain;
pub mod config;
pub mod controller;
pub mod error;
pub mod jet;
pub mod kappa;
pub mod models;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
