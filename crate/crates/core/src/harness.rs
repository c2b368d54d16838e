//! Replication loops: generate, fit, test or estimate, and score.
//!
//! Each replication derives its own seed from the study seed, so a study's
//! output depends only on its configuration. A failing replication is kept
//! as an error record instead of aborting the study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{true_edge_set, EdgeSet};
use crate::error::{Error, Result};
use crate::evalkit::{
    empirical_critical, fpr_fnr, matrix_losses, roc_area, theoretical_critical, Losses, MetricRow,
    PairScorePanel,
};
use crate::hgsl::{lambda_simulated, lambda_theoretical};
use crate::inference::{all_pair_statistics, estimate_from_stats, tune_alpha_with_stats, Sided, TestConfig, TestKind};
use crate::nodewise::{fit_all_nodes_at, FitOptions, LambdaRule};
use crate::simgen::{derive_seed, simulate, simulate_validation, Model, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// `sim.seed` is the study seed; replication `r` uses a seed derived from it.
    pub sim: SimConfig,
    pub reps: usize,
    pub lambda: LambdaRule,
    pub fit: FitOptions,
    pub alpha: f64,
    /// Level grid for estimation studies.
    pub grid: Vec<f64>,
}

/// The two methods compared in every study: signed sum with all-plus signs
/// (one-sided) and the chi test.
pub fn methods(k: usize) -> Vec<(&'static str, TestKind)> {
    vec![
        ("phi1", TestKind::linfun_positive(k, Sided::One)),
        ("phi2", TestKind::Chi),
    ]
}

/// Penalty level for a study. Theory and simulation rules depend only on
/// `(n, p, k)`, so one value serves every replication.
pub fn study_lambda(cfg: &StudyConfig) -> Result<f64> {
    let s = &cfg.sim;
    match &cfg.lambda {
        LambdaRule::Theory(c) => lambda_theoretical(s.n_per_class, s.p, s.k, c),
        LambdaRule::Sim(c) => lambda_simulated(&vec![s.n_per_class; s.k], s.p, s.k, c),
        LambdaRule::Fixed { lambda } if *lambda > 0.0 => Ok(*lambda),
        LambdaRule::Fixed { lambda } => Err(Error::Invalid(format!("lambda must be positive, got {lambda}"))),
    }
}

pub fn rep_config(cfg: &StudyConfig, rep: usize) -> SimConfig {
    SimConfig {
        seed: derive_seed(cfg.sim.seed, rep as u64),
        ..cfg.sim.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingMetrics {
    pub method: String,
    pub fnr_empirical: f64,
    pub fnr_theoretical: f64,
    pub fpr_theoretical: f64,
    pub fpr_empirical: f64,
    pub roc_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationMetrics {
    pub method: String,
    pub alpha: f64,
    pub all_non_pd: bool,
    pub losses: Losses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome<T> {
    pub rep: usize,
    pub seed: u64,
    pub result: std::result::Result<T, String>,
}

impl<T> RepOutcome<T> {
    pub fn ok(&self) -> Option<&T> {
        self.result.as_ref().ok()
    }
}

pub fn testing_rep(cfg: &StudyConfig, rep: usize, lam: f64) -> Result<Vec<TestingMetrics>> {
    let sim = rep_config(cfg, rep);
    let (truth, sample) = simulate(&sim)?;
    let fits = fit_all_nodes_at(&sample, lam, &cfg.fit)?;
    let stats = all_pair_statistics(&fits)?;
    let edges = true_edge_set(&truth, 0.0);
    methods(sim.k)
        .into_iter()
        .map(|(name, kind)| score_panel(name, &stats, &edges, kind, cfg.alpha))
        .collect()
}

fn score_panel(
    name: &str,
    stats: &[crate::nodewise::PairStatistics],
    edges: &EdgeSet,
    kind: TestKind,
    alpha: f64,
) -> Result<TestingMetrics> {
    let k = stats.first().map_or(1, |s| s.t.len());
    let theo = theoretical_critical(&kind, k, alpha)?;
    let panel = PairScorePanel::from_stats(stats, edges, kind)?;
    let emp = empirical_critical(&panel, alpha)?;
    let rt = fpr_fnr(&panel, theo);
    let re = fpr_fnr(&panel, emp);
    Ok(TestingMetrics {
        method: name.into(),
        fnr_empirical: re.fnr,
        fnr_theoretical: rt.fnr,
        fpr_theoretical: rt.fpr,
        fpr_empirical: re.fpr,
        roc_area: roc_area(&panel)?,
    })
}

pub fn estimation_rep(cfg: &StudyConfig, rep: usize, lam: f64) -> Result<Vec<EstimationMetrics>> {
    let sim = rep_config(cfg, rep);
    let (truth, sample) = simulate(&sim)?;
    let validation = simulate_validation(&sim, &truth)?;
    let fits = fit_all_nodes_at(&sample, lam, &cfg.fit)?;
    let stats = all_pair_statistics(&fits)?;
    methods(sim.k)
        .into_iter()
        .map(|(name, kind)| {
            let tuned = tune_alpha_with_stats(&fits, &stats, &validation, &cfg.grid, &kind)?;
            let est = estimate_from_stats(
                &fits,
                &stats,
                &TestConfig {
                    alpha: tuned.alpha,
                    kind,
                },
            )?;
            Ok(EstimationMetrics {
                method: name.into(),
                alpha: tuned.alpha,
                all_non_pd: tuned.all_non_pd,
                losses: matrix_losses(&est, &truth)?,
            })
        })
        .collect()
}

fn run<T: Send>(
    cfg: &StudyConfig,
    one: impl Fn(&StudyConfig, usize, f64) -> Result<T> + Sync,
) -> Result<Vec<RepOutcome<T>>> {
    cfg.sim.validate()?;
    if cfg.reps == 0 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    let lam = study_lambda(cfg)?;
    log::info!("study penalty level {lam:.6}");
    Ok((0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let result = one(cfg, rep, lam).map_err(|e| {
                log::warn!("replication {rep} failed: {e}");
                e.to_string()
            });
            RepOutcome {
                rep,
                seed: rep_config(cfg, rep).seed,
                result,
            }
        })
        .collect())
}

pub fn run_testing(cfg: &StudyConfig) -> Result<Vec<RepOutcome<Vec<TestingMetrics>>>> {
    run(cfg, testing_rep)
}

pub fn run_estimation(cfg: &StudyConfig) -> Result<Vec<RepOutcome<Vec<EstimationMetrics>>>> {
    run(cfg, estimation_rep)
}

fn collect<T>(outcomes: &[RepOutcome<Vec<T>>], method: &str, name: impl Fn(&T) -> &str, f: impl Fn(&T) -> f64) -> Vec<f64> {
    outcomes
        .iter()
        .filter_map(|o| o.ok())
        .flat_map(|ms| ms.iter().filter(|m| name(m) == method).map(&f).collect::<Vec<_>>())
        .collect()
}

pub fn summarize_testing(
    model: &str,
    setting: &str,
    outcomes: &[RepOutcome<Vec<TestingMetrics>>],
) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for method in ["phi1", "phi2"] {
        let metrics: [(&str, fn(&TestingMetrics) -> f64); 5] = [
            ("fnr_empirical", |m| m.fnr_empirical),
            ("fnr_theoretical", |m| m.fnr_theoretical),
            ("fpr_theoretical", |m| m.fpr_theoretical),
            ("fpr_empirical", |m| m.fpr_empirical),
            ("roc_area", |m| m.roc_area),
        ];
        for (metric, f) in metrics {
            let v = collect(outcomes, method, |m| &m.method, f);
            rows.push(MetricRow::summarize(model, setting, method, metric, &v));
        }
    }
    rows.push(failure_row(model, setting, outcomes));
    rows
}

pub fn summarize_estimation(
    model: &str,
    setting: &str,
    outcomes: &[RepOutcome<Vec<EstimationMetrics>>],
) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for method in ["phi1", "phi2"] {
        let metrics: [(&str, fn(&EstimationMetrics) -> f64); 7] = [
            ("l1_mean", |m| m.losses.mean.l1),
            ("l2_mean", |m| m.losses.mean.l2),
            ("lf_mean", |m| m.losses.mean.lf),
            ("l1_sum", |m| m.losses.sum.l1),
            ("l2_sum", |m| m.losses.sum.l2),
            ("lf_sum", |m| m.losses.sum.lf),
            ("alpha", |m| m.alpha),
        ];
        for (metric, f) in metrics {
            let v = collect(outcomes, method, |m| &m.method, f);
            rows.push(MetricRow::summarize(model, setting, method, metric, &v));
        }
    }
    rows.push(failure_row(model, setting, outcomes));
    rows
}

fn failure_row<T>(model: &str, setting: &str, outcomes: &[RepOutcome<T>]) -> MetricRow {
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    MetricRow {
        model: model.into(),
        setting: setting.into(),
        method: "all".into(),
        metric: "failed_reps".into(),
        mean: failed as f64,
        se: f64::NAN,
    }
}

/// `(k, p)` for the three settings; `p` is the block-size-friendly surrogate.
pub fn setting_dims(setting: usize) -> Result<(usize, usize)> {
    match setting {
        1 => Ok((5, 48)),
        2 => Ok((10, 48)),
        3 => Ok((10, 200)),
        _ => Err(Error::Invalid(format!("setting must be 1, 2 or 3, got {setting}"))),
    }
}

/// Per-class sample size used with each model.
pub fn model_n(model: Model) -> usize {
    match model {
        Model::I => 100,
        Model::II => 200,
    }
}

/// Which study a table number refers to: testing tables 1-2, estimation tables 3-4.
pub fn table_study(table: usize) -> Result<(Model, bool)> {
    match table {
        1 => Ok((Model::I, false)),
        2 => Ok((Model::II, false)),
        3 => Ok((Model::I, true)),
        4 => Ok((Model::II, true)),
        _ => Err(Error::Invalid(format!("table must be 1-4, got {table}"))),
    }
}
