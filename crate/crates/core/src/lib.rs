//! Joint hypothesis testing and estimation for multiple Gaussian graphical
//! models that share a sparsity pattern.
//!
//! Each node is regressed on the others in all `k` classes at once with the
//! heterogeneous group square-root Lasso ([`hgsl`]); the residuals feed
//! bias-corrected pair statistics ([`nodewise`]) from which chi-based and
//! linear-functional tests, edge recovery and precision-matrix estimates are
//! built ([`inference`]). [`simgen`] and [`evalkit`] provide the synthetic
//! models and metrics used to benchmark the pipeline, and [`harness`] runs
//! whole replication studies.

pub mod data;
pub mod error;
pub mod evalkit;
pub mod harness;
pub mod hgsl;
pub mod inference;
pub mod nodewise;
pub mod simgen;
pub mod special;

pub use data::{true_edge_set, EdgeSet, MultiNetworkSample, PrecisionSet};
pub use error::{Error, Result};
pub use hgsl::{
    hgsl_solve, kkt_residual, lambda_simulated, lambda_theoretical, refit_ols, scaling_matrix,
    soft_threshold_group, DiagScaling, HgslProblem, HgslSolution, LambdaConfig, SolveOptions,
};
pub use inference::{
    estimate_precision, run_all_pairs, run_test, support_recover, tune_alpha, u_statistic,
    v_statistic, validation_loss, Sided, TestConfig, TestKind, TestResult, TuneResult,
};
pub use nodewise::{fit_all_nodes, fit_node, FitOptions, LambdaRule, NodeFits, NodewiseFit};
pub use simgen::{gen_model1, gen_model2, sample_from, Model, Noise, SimConfig};
