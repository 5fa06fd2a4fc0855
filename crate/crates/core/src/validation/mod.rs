//! Exact-solution oracles, convergence studies and the variational
//! inequality cross-check for the deterministic case.

mod barenblatt;
mod convergence;
mod variational;

pub use barenblatt::{barenblatt, barenblatt_time_derivative, BarenblattParams};
pub use convergence::{barenblatt_drift_residual, convergence_study, ConvergenceStudy, Oracle};
pub use variational::{
    registered_comparisons, variational_inequality_check, variational_self_test, ComparisonFunction,
    VariationalPairing,
};
