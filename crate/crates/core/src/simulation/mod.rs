//! Monte Carlo simulation of randomized trials with a baseline covariate and
//! a candidate NCO.

pub mod config;
pub mod dgp;
pub mod runner;

pub use config::{tidy_rows, write_records_csv, write_results_csv, GridAxes, GridConfig, TidyRow};
pub use dgp::{derive_coefficients, draw_units, generate_trial, Link, ScenarioParams, Units};
pub use runner::{
    derive_seed, run_scenario, EstimatorSummary, GateSettings, ReplicateRecord, SimOptions, SimSummary, SuiteEstimator,
};
