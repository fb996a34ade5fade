//! Divisive data resorting (DDR) ensembles for aleatoric uncertainty
//! quantification.
//!
//! A DDR ensemble is a set of deterministic regression models whose outputs
//! at a single input approximate a sample from the conditional distribution
//! of a stochastic system's output, including multi-modal distributions that
//! bagging-style ensembles collapse to their mean.
//!
//! - [`dataset`]: records, normalization, CSV loading and the synthetic
//!   benchmark system.
//! - [`learner`]: the base-learner contract and a linear least-squares
//!   learner.
//! - [`ka`]: the Kolmogorov-Arnold piecewise-linear learner.
//! - [`ddr`]: ensemble builders.
//! - [`stats`]: ECDFs, Kolmogorov-Smirnov, metrics, bet selection.
//! - [`experiments`]: end-to-end benchmark drivers shared by the CLI and the
//!   acceptance suite.

// `!(a < b)` checks deliberately treat NaN as invalid input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod ddr;
pub mod error;
pub mod experiments;
pub mod ka;
pub mod learner;
pub mod persist;
pub mod rng;
pub mod stats;

pub use dataset::{Dataset, NormalizationMaps, Record, SyntheticSpec};
pub use ddr::{DivisionSchedule, Ensemble, SlidingWindowSpec};
pub use error::{Error, Result};
pub use ka::{KaModel, KaSpec, PiecewiseLinear};
pub use learner::{Learner, LearnerSpec, LinearModel, LinearSpec, Model, Regressor};
pub use stats::Ecdf;
