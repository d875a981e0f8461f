#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Weighted block-metric contraction certificates for multi-player
//! pseudo-gradient dynamics.
//!
//! The crate builds a block metric `M(w) = diag(w_i P_i)` in which a game's
//! pseudo-gradient is strongly monotone, packages the margin, Lipschitz
//! bound and safe step sizes into a [`sgn::Certificate`], and exercises it
//! with projected Euler/RK4 and mirror/natural-gradient dynamics.

pub mod error;
pub mod experiments;
pub mod games;
pub mod integrators;
pub mod markov;
pub mod metric;
pub mod mirror;
pub mod region;
pub mod sgn;

pub use error::{Error, Result};
