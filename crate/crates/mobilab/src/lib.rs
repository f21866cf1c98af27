//! Lifecycle estimation of intergenerational income mobility.
//!
//! The crate provides, at desk scale:
//!
//! - a synthetic two-generation income-process generator with known ground
//!   truth ([`income_process`]),
//! - a canonical panel store with CSV ingestion and the sample-construction
//!   transforms applied before estimation ([`panel`]),
//! - a dense OLS engine with absorbed fixed effects, interaction designs and
//!   robust standard errors ([`regression`]),
//! - the family of intergenerational-elasticity estimators: direct,
//!   benchmark, two-step lifecycle variants, errors-in-variables diagnostics,
//!   rank-preserving profile reconstruction, and cohort-trend variants
//!   ([`estimators`]),
//! - penalized (lasso / elastic-net) first-step estimation with
//!   cross-validation and postselection OLS ([`regularization`]).
//!
//! Everything stochastic flows from a single run seed through named
//! substreams, so results are bit-identical across runs and across the
//! parallel / sequential builds (`parallel` feature).

pub mod error;
pub mod exec;
pub mod rng;

pub mod estimators;
pub mod income_process;
pub mod panel;
pub mod regression;
pub mod regularization;

pub use error::{Error, Result};
