//! Detection and estimation metrics for simulation studies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{EdgeSet, PrecisionSet};
use crate::error::{Error, Result};
use crate::inference::{u_from_pair, v_from_pair, Sided, TestKind};
use crate::nodewise::PairStatistics;
use crate::special::{chi_quantile_upper, normal_quantile};

/// Per-pair scores with their truth labels.
///
/// Scores are oriented so that larger means more evidence of an edge:
/// `U` for the chi test, `-V/sqrt(k)` for the one-sided linear test and
/// `|V|/sqrt(k)` for the two-sided one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScorePanel {
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
    pub edge: Vec<bool>,
    pub k: usize,
    pub p: usize,
    pub kind: TestKind,
}

/// Orients a raw `U` or `V` value; see [`PairScorePanel`].
pub fn oriented_score(raw: f64, k: usize, kind: &TestKind) -> f64 {
    let rk = (k as f64).sqrt();
    match kind {
        TestKind::Chi => raw,
        TestKind::Linfun { sided: Sided::One, .. } => -raw / rk,
        TestKind::Linfun { sided: Sided::Two, .. } => raw.abs() / rk,
    }
}

/// Level-`alpha` critical value on the oriented scale.
pub fn theoretical_critical(kind: &TestKind, k: usize, alpha: f64) -> Result<f64> {
    match kind {
        TestKind::Chi => chi_quantile_upper(k, alpha),
        TestKind::Linfun { sided: Sided::One, .. } => Ok(-normal_quantile(alpha)?),
        TestKind::Linfun { sided: Sided::Two, .. } => normal_quantile(1.0 - alpha / 2.0),
    }
}

impl PairScorePanel {
    pub fn new(
        pairs: Vec<(usize, usize)>,
        scores: Vec<f64>,
        truth: &EdgeSet,
        k: usize,
        kind: TestKind,
    ) -> Result<Self> {
        if pairs.len() != scores.len() {
            return Err(Error::DimensionMismatch("pairs and scores differ in length".into()));
        }
        let edge = pairs.iter().map(|&(a, b)| truth.contains(a, b)).collect();
        Ok(Self {
            pairs,
            scores,
            edge,
            k,
            p: truth.p(),
            kind,
        })
    }

    /// Builds a panel from pair statistics.
    pub fn from_stats(stats: &[PairStatistics], truth: &EdgeSet, kind: TestKind) -> Result<Self> {
        let k = stats.first().map_or(0, |s| s.t.len());
        let scores = stats
            .iter()
            .map(|s| {
                let raw = match &kind {
                    TestKind::Chi => u_from_pair(s),
                    TestKind::Linfun { signs, .. } => v_from_pair(s, signs),
                };
                oriented_score(raw, k, &kind)
            })
            .collect();
        let pairs = stats.iter().map(|s| (s.a, s.b)).collect();
        Self::new(pairs, scores, truth, k, kind)
    }

    pub fn null_scores(&self) -> Vec<f64> {
        self.by_label(false)
    }

    pub fn edge_scores(&self) -> Vec<f64> {
        self.by_label(true)
    }

    fn by_label(&self, label: bool) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.edge)
            .filter(|(_, &e)| e == label)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Nearest-rank `(1 - alpha)` quantile of the null-pair scores.
pub fn empirical_critical(panel: &PairScorePanel, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut null = panel.null_scores();
    if null.is_empty() {
        return Err(Error::Invalid("panel has no null pairs".into()));
    }
    null.sort_by(f64::total_cmp);
    let m = null.len() as f64;
    // guard against 0.95 * 100 landing a hair above 95
    let rank = (((1.0 - alpha) * m) - 1e-9).ceil().max(1.0) as usize;
    Ok(null[rank.min(null.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub fpr: f64,
    pub fnr: f64,
}

/// A pair is declared an edge when its score exceeds `critical`.
/// A rate with an empty denominator is NaN.
pub fn fpr_fnr(panel: &PairScorePanel, critical: f64) -> Rates {
    let (mut fp, mut nulls, mut missed, mut edges) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &e) in panel.scores.iter().zip(&panel.edge) {
        let hit = s > critical;
        if e {
            edges += 1;
            if !hit {
                missed += 1;
            }
        } else {
            nulls += 1;
            if hit {
                fp += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Rates {
        fpr: ratio(fp, nulls),
        fnr: ratio(missed, edges),
    }
}

/// Area under the empirical ROC curve via the Mann-Whitney statistic (ties count 1/2).
pub fn roc_area(panel: &PairScorePanel) -> Result<f64> {
    let n1 = panel.edge.iter().filter(|&&e| e).count();
    let n0 = panel.edge.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Invalid("ROC area needs both edge and null pairs".into()));
    }
    let mut idx: Vec<usize> = (0..panel.scores.len()).collect();
    idx.sort_by(|&i, &j| panel.scores[i].total_cmp(&panel.scores[j]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && panel.scores[idx[j + 1]] == panel.scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&t| panel.edge[t]).count() as f64;
        i = j + 1;
    }
    let (n1, n0) = (n1 as f64, n0 as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Empirical ROC points `(fpr, tpr)` over every distinct threshold, from (0,0) to (1,1).
pub fn roc_curve(panel: &PairScorePanel) -> Vec<(f64, f64)> {
    let mut thresholds = panel.scores.clone();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut out = vec![(0.0, 0.0)];
    for c in thresholds {
        // `>= c` is `> c - eps` at a distinct value
        let r = rates_at_least(panel, c);
        out.push((r.fpr, 1.0 - r.fnr));
    }
    out
}

fn rates_at_least(panel: &PairScorePanel, c: f64) -> Rates {
    let (mut fp, mut nulls, mut tp, mut edges) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &e) in panel.scores.iter().zip(&panel.edge) {
        if e {
            edges += 1;
            tp += (s >= c) as usize;
        } else {
            nulls += 1;
            fp += (s >= c) as usize;
        }
    }
    Rates {
        fpr: fp as f64 / nulls.max(1) as f64,
        fnr: 1.0 - tp as f64 / edges.max(1) as f64,
    }
}

/// Matrix 1-norm, spectral norm and Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NormTriple {
    pub l1: f64,
    pub l2: f64,
    pub lf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub per_graph: Vec<NormTriple>,
    pub sum: NormTriple,
    pub mean: NormTriple,
}

pub fn error_norms(e: &nalgebra::DMatrix<f64>) -> NormTriple {
    let l1 = e
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let l2 = e
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    NormTriple {
        l1,
        l2,
        lf: e.norm(),
    }
}

/// Norms of `est - truth` per graph, with their sum and mean over graphs.
pub fn matrix_losses(est: &PrecisionSet, truth: &PrecisionSet) -> Result<Losses> {
    if est.k() != truth.k() || est.p() != truth.p() {
        return Err(Error::DimensionMismatch("estimate and truth differ in k or p".into()));
    }
    let per_graph: Vec<NormTriple> = est
        .matrices()
        .iter()
        .zip(truth.matrices())
        .map(|(a, b)| error_norms(&(a - b)))
        .collect();
    let mut sum = NormTriple::default();
    for n in &per_graph {
        sum.l1 += n.l1;
        sum.l2 += n.l2;
        sum.lf += n.lf;
    }
    let k = per_graph.len() as f64;
    let mean = NormTriple {
        l1: sum.l1 / k,
        l2: sum.l2 / k,
        lf: sum.lf / k,
    };
    Ok(Losses {
        per_graph,
        sum,
        mean,
    })
}

/// Mean and standard error; the standard error is NaN with fewer than two values.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub setting: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
}

impl MetricRow {
    pub fn summarize(model: &str, setting: &str, method: &str, metric: &str, values: &[f64]) -> Self {
        let (mean, se) = mean_se(values);
        Self {
            model: model.into(),
            setting: setting.into(),
            method: method.into(),
            metric: metric.into(),
            mean,
            se,
        }
    }
}

pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics_csv<P: AsRef<Path>>(rows: &[MetricRow], path: P) -> Result<()> {
    write_metrics_csv(rows, std::fs::File::create(path)?)
}
