//! Uniformity testing lab.
//!
//! Separable test statistics over bin-count histograms, exact enumeration
//! oracles for small instances, the covariance/QP machinery behind the
//! variance-optimal statistic, closed-form rate functions and sample sizes,
//! numeric depoissonization, and a deterministic parallel Monte Carlo
//! harness with a command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distmodel;
pub mod error;
pub mod exponents;
pub mod mc;
pub mod mgfnumeric;
pub mod numeric;
pub mod oracle;
pub mod statistics;
pub mod varianceopt;

pub use distmodel::{FlatFamily, Histogram, ProbabilityVector};
pub use error::{LabError, Result};
pub use statistics::{Decision, StatisticKind, TesterSpec};
