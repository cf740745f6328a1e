//! Treatment effect estimation for randomized trials with baseline
//! covariates and negative control outcomes (NCOs).
//!
//! The crate provides plug-in, AIPW and Lin estimators with sandwich and
//! Neyman variances, randomization tests and NCO pretests, a sensitivity
//! analysis for NCO adjustment under violated assumptions, and a
//! Monte Carlo simulation harness.

pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod ols;
pub mod randinf;
pub mod sensitivity;
pub mod simulation;

pub use data::{load_csv, ColumnRoles, NamedColumns, TrialDataset};
pub use error::{Error, Result};
pub use estimators::{AdjustmentSpec, Estimand, EstimateResult};
pub use inference::{analyze, Correction};
