//! Ensemble statistics and their comparison with the limit law.

pub mod compare;
pub mod ensemble;
pub mod normality;

pub use compare::{
    compare_against, compare_covariance, convergence_table, theta_normality, z_score, ConvergenceRow,
    ConvergenceTable, CovarianceEntry, CovarianceReport, Rung, Z_FLAG,
};
pub use ensemble::{
    covariance_with_se, limit_ensemble, plan_hash, plan_points, run_ensemble, Diagnostics, Ensemble, EnsembleSummary,
    PointLabel, SampleStore,
};
pub use normality::{normality_test, NormalityReport, MIN_SAMPLES};
