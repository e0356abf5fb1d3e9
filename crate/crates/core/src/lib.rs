// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Hierarchical Bayesian multitask models for fleets of engineering assets.
//!
//! Two model families share one inference engine: a semi-parametric
//! log-hazard model for sub-fleets of trucks and a segmented power curve for
//! wind turbines. Tasks `(k, l)` are partially pooled through shared
//! hyper-parameters; benchmarks, posterior analysis and decision support are
//! built on top.

pub mod analysis;
pub mod benchmarks;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod hazard;
pub mod inference;
pub mod model;
pub mod power;
pub mod prediction;
pub mod splines;
pub mod stats;

pub use error::{FleetError, Result};
