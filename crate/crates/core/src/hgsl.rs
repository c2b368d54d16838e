//! Heterogeneous group square-root Lasso for one multi-response regression.
//!
//! The program is
//!
//! ```text
//! min_beta  sum_t ||Y^(t) - X^(t) beta^(t)|| / sqrt(n0)  +  lambda * sum_l ||D_(l)^{1/2} beta_(l)||
//! ```
//!
//! where `beta_(l)` collects coefficient `l` across the `k` classes and
//! `D_(l)` holds the per-class mean squared entries of column `l`. The
//! solver works on column-standardized designs, rescales everything by `K0`
//! and runs the scaled iterative multivariate soft-thresholding update from
//! `beta = 0`.
//!
//! Coefficients are stored flat, class-major: entry `t * G + l` is
//! coefficient `l` of class `t`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multi-response regression instance: `k` responses sharing `G` groups.
#[derive(Debug, Clone)]
pub struct HgslProblem {
    y: Vec<DVector<f64>>,
    x: Vec<DMatrix<f64>>,
}

impl HgslProblem {
    pub fn new(y: Vec<DVector<f64>>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        if y.is_empty() || y.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} designs",
                y.len(),
                x.len()
            )));
        }
        let g = x[0].ncols();
        if g == 0 {
            return Err(Error::Invalid("design has no columns".into()));
        }
        for (t, (yt, xt)) in y.iter().zip(&x).enumerate() {
            if yt.len() != xt.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "class {t}: response length {} vs {} design rows",
                    yt.len(),
                    xt.nrows()
                )));
            }
            if xt.ncols() != g {
                return Err(Error::DimensionMismatch(format!(
                    "class {t}: {} columns, expected {g}",
                    xt.ncols()
                )));
            }
            if xt.nrows() == 0 {
                return Err(Error::Invalid(format!("class {t} has no rows")));
            }
        }
        Ok(Self { y, x })
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    /// Number of groups `G`.
    pub fn groups(&self) -> usize {
        self.x[0].ncols()
    }

    pub fn n(&self) -> Vec<usize> {
        self.y.iter().map(|v| v.len()).collect()
    }

    pub fn n0(&self) -> usize {
        self.y.iter().map(|v| v.len()).min().unwrap()
    }

    pub fn response(&self, t: usize) -> &DVector<f64> {
        &self.y[t]
    }

    pub fn design(&self, t: usize) -> &DMatrix<f64> {
        &self.x[t]
    }

    /// Residual `Y^(t) - X^(t) beta^(t)` for flat coefficients `beta`.
    pub fn residual(&self, t: usize, beta: &DVector<f64>) -> DVector<f64> {
        let g = self.groups();
        let bt = beta.rows(t * g, g);
        &self.y[t] - &self.x[t] * bt
    }
}

/// Per-class column scales `d^(t)_l = ||X^(t)_{.,l}||^2 / n^(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagScaling {
    d: Vec<DVector<f64>>,
}

impl DiagScaling {
    pub fn get(&self, t: usize, l: usize) -> f64 {
        self.d[t][l]
    }

    pub fn class(&self, t: usize) -> &DVector<f64> {
        &self.d[t]
    }

    /// Flat entries in the coefficient layout.
    pub fn to_flat(&self) -> DVector<f64> {
        let g = self.d[0].len();
        DVector::from_fn(self.d.len() * g, |i, _| self.d[i / g][i % g])
    }

    /// Maps scaled coefficients `D^{1/2} beta` back to original ones.
    pub fn unscale(&self, beta_scaled: &DVector<f64>) -> DVector<f64> {
        let d = self.to_flat();
        beta_scaled.zip_map(&d, |b, di| b / di.sqrt())
    }

    /// Maps original coefficients to the scaled program's coordinates.
    pub fn scale(&self, beta: &DVector<f64>) -> DVector<f64> {
        let d = self.to_flat();
        beta.zip_map(&d, |b, di| b * di.sqrt())
    }
}

/// Column scales of every class design; fails on an identically zero column.
pub fn scaling_matrix(problem: &HgslProblem) -> Result<DiagScaling> {
    let mut d = Vec::with_capacity(problem.k());
    for (t, x) in problem.x.iter().enumerate() {
        let n = x.nrows() as f64;
        let mut dt = DVector::zeros(x.ncols());
        for (l, col) in x.column_iter().enumerate() {
            let v = col.norm_squared() / n;
            if v <= 0.0 {
                return Err(Error::ZeroColumn { class: t, column: l });
            }
            dt[l] = v;
        }
        d.push(dt);
    }
    Ok(DiagScaling { d })
}

/// Tuning constants for the noise-free penalty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    /// Union-bound exponent; the tail level is `1 / p^delta`.
    pub delta: f64,
    /// Slack constant; the penalty carries the prefactor `(xi + 1) / (xi - 1)`.
    /// `f64::INFINITY` gives prefactor 1.
    pub xi: f64,
    /// Monte Carlo replications for the simulated rule.
    pub reps: usize,
    pub seed: u64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            xi: f64::INFINITY,
            reps: 10_000,
            seed: 20_240_601,
        }
    }
}

impl LambdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 1.0) || !self.delta.is_finite() {
            return Err(Error::Invalid(format!("delta must be >= 1, got {}", self.delta)));
        }
        if !(self.xi > 1.0) {
            return Err(Error::Invalid(format!("xi must be > 1, got {}", self.xi)));
        }
        if self.reps == 0 {
            return Err(Error::Invalid("reps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn prefactor(&self) -> f64 {
        if self.xi.is_infinite() {
            1.0
        } else {
            (self.xi + 1.0) / (self.xi - 1.0)
        }
    }
}

/// Closed-form penalty level.
///
/// `lambda = c * sqrt((k + 2 delta log p + 2 sqrt(delta k log p)) / (n0 (1 - tau)))`
/// with `tau = sqrt(8 (delta log p + log k) / n0)`; requires `tau < 1`.
pub fn lambda_theoretical(n0: usize, p: usize, k: usize, config: &LambdaConfig) -> Result<f64> {
    config.validate()?;
    if n0 == 0 || p == 0 || k == 0 {
        return Err(Error::Invalid("n0, p and k must be positive".into()));
    }
    let n0 = n0 as f64;
    let kf = k as f64;
    let log_p = (p as f64).ln();
    let tau = (8.0 * (config.delta * log_p + kf.ln()) / n0).sqrt();
    if tau >= 1.0 {
        return Err(Error::LambdaOutOfRange { tau });
    }
    let num = kf + 2.0 * config.delta * log_p + 2.0 * (config.delta * kf * log_p).sqrt();
    Ok(config.prefactor() * (num / (n0 * (1.0 - tau))).sqrt())
}

/// Penalty level from simulating the pure-noise score.
///
/// Each replication draws, per class, two independent standard normal
/// vectors of length `n^(t)` and forms `sqrt(n^(t)) z1.z2 / (|z1| |z2|)`;
/// the replication value is the Euclidean norm over classes. The result is
/// the empirical `1 - 1/p^delta` quantile (smallest order statistic whose
/// rank reaches that fraction) times `prefactor / sqrt(n0)`.
pub fn lambda_simulated(n: &[usize], p: usize, k: usize, config: &LambdaConfig) -> Result<f64> {
    config.validate()?;
    if n.len() != k || k == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} class sizes for k = {k}",
            n.len()
        )));
    }
    if n.iter().any(|&nt| nt == 0) || p == 0 {
        return Err(Error::Invalid("class sizes and p must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draws: Vec<f64> = Vec::with_capacity(config.reps);
    for _ in 0..config.reps {
        let mut sum_sq = 0.0;
        for &nt in n {
            let (mut dot, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for _ in 0..nt {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                dot += z1 * z2;
                s1 += z1 * z1;
                s2 += z2 * z2;
            }
            let z = (nt as f64).sqrt() * dot / (s1.sqrt() * s2.sqrt());
            sum_sq += z * z;
        }
        draws.push(sum_sq.sqrt());
    }
    draws.sort_by(f64::total_cmp);
    let level = 1.0 - (p as f64).powf(-config.delta);
    let reps = config.reps as f64;
    let rank = ((level * reps) - 1e-9).ceil().clamp(1.0, reps) as usize;
    let n0 = *n.iter().min().unwrap() as f64;
    Ok(config.prefactor() * draws[rank - 1] / n0.sqrt())
}

/// Multivariate soft-thresholding: shrinks the norm of `a` by `lam`, keeping its direction.
pub fn soft_threshold_group(a: &[f64], lam: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    soft_threshold_in_place(&mut out, lam);
    out
}

fn soft_threshold_in_place(a: &mut [f64], lam: f64) {
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= lam || norm == 0.0 {
        a.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let shrink = (norm - lam) / norm;
        a.iter_mut().for_each(|v| *v *= shrink);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop once `max |beta(m+1) - beta(m)| < tol` (scaled coordinates)...
    pub tol: f64,
    /// ...and the optimality violation measured by [`kkt_residual`] is at most this.
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    /// Fail when a class residual norm drops to `residual_floor * ||Y^(t)||`.
    pub residual_floor: f64,
    /// Multiplier on the default `K0 = max_t ||Xbar^(t)||_2`; must be >= 1.
    pub k0_scale: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-7,
            kkt_tol: default_kkt_tol(),
            residual_floor: 1e-10,
            k0_scale: 1.0,
        }
    }
}

fn default_kkt_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HgslSolution {
    /// Coefficients in the original (unscaled) coordinates.
    pub beta: DVector<f64>,
    /// Coefficients of the column-standardized program.
    pub beta_scaled: DVector<f64>,
    /// Groups with a nonzero coefficient vector.
    pub support: Vec<usize>,
    /// Objective of the column-standardized program after each iterate, starting at `beta = 0`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub k0: f64,
    pub refit_beta: Option<DVector<f64>>,
}

impl HgslSolution {
    /// Attaches least-squares refit coefficients on the selected support.
    pub fn with_refit(mut self, problem: &HgslProblem) -> Result<Self> {
        self.refit_beta = Some(refit_ols(problem, &self.support)?);
        Ok(self)
    }
}

/// Largest singular value of `x`, through the smaller of the two Gram matrices.
pub(crate) fn spectral_norm(x: &DMatrix<f64>) -> f64 {
    let gram = if x.nrows() < x.ncols() {
        x * x.transpose()
    } else {
        x.transpose() * x
    };
    gram.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v))
        .sqrt()
}

/// Objective in original coordinates (equal to the standardized program's objective at `D^{1/2} beta`).
pub fn objective(problem: &HgslProblem, lam: f64, beta: &DVector<f64>) -> Result<f64> {
    check_len(problem, beta)?;
    let d = scaling_matrix(problem)?;
    let scaled = d.scale(beta);
    let sqrt_n0 = (problem.n0() as f64).sqrt();
    let loss: f64 = (0..problem.k())
        .map(|t| problem.residual(t, beta).norm() / sqrt_n0)
        .sum();
    Ok(loss + lam * group_norm_sum(&scaled, problem.k(), problem.groups()))
}

fn group_norm_sum(beta: &DVector<f64>, k: usize, g: usize) -> f64 {
    (0..g)
        .map(|l| (0..k).map(|t| beta[t * g + l].powi(2)).sum::<f64>().sqrt())
        .sum()
}

fn check_len(problem: &HgslProblem, beta: &DVector<f64>) -> Result<()> {
    let want = problem.k() * problem.groups();
    if beta.len() != want {
        return Err(Error::DimensionMismatch(format!(
            "coefficient vector has length {}, expected {want}",
            beta.len()
        )));
    }
    Ok(())
}

/// Working state of the iteration, all in `K0`-rescaled standardized coordinates.
struct Workspace {
    x: Vec<DMatrix<f64>>,
    y: Vec<DVector<f64>>,
    resid: Vec<DVector<f64>>,
    norms: Vec<f64>,
    floors: Vec<f64>,
}

impl Workspace {
    /// Recomputes `X beta - Y` per class from the active columns only.
    fn refresh(&mut self, beta: &[f64], g: usize) {
        for (t, r) in self.resid.iter_mut().enumerate() {
            r.copy_from(&self.y[t]);
            r.neg_mut();
            let bt = &beta[t * g..(t + 1) * g];
            for (l, &b) in bt.iter().enumerate() {
                if b != 0.0 {
                    r.axpy(b, &self.x[t].column(l), 1.0);
                }
            }
            self.norms[t] = r.norm();
        }
    }

    fn check_floor(&self, iteration: usize) -> Result<()> {
        for (t, (&norm, &floor)) in self.norms.iter().zip(&self.floors).enumerate() {
            if norm <= floor {
                return Err(Error::ResidualFloor {
                    class: t,
                    iteration,
                    norm,
                    floor,
                });
            }
        }
        Ok(())
    }
}

fn kkt_scaled(beta: &[f64], grad: &[f64], block: &mut [f64], lam: f64, k: usize, g: usize) -> f64 {
    let mut worst = 0.0_f64;
    for l in 0..g {
        let b_norm = (0..k).map(|t| beta[t * g + l].powi(2)).sum::<f64>().sqrt();
        for t in 0..k {
            block[t] = grad[t * g + l];
            if b_norm > 0.0 {
                block[t] += lam * beta[t * g + l] / b_norm;
            }
        }
        let v = block.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(if b_norm > 0.0 { v } else { (v - lam).max(0.0) });
    }
    worst
}

/// Solves the program at penalty `lam` by scaled iterative thresholding.
///
/// Returns `converged = false` (not an error) when `max_iter` is exhausted.
pub fn hgsl_solve(problem: &HgslProblem, lam: f64, opts: &SolveOptions) -> Result<HgslSolution> {
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(Error::Invalid(format!("lambda must be positive, got {lam}")));
    }
    if !(opts.k0_scale >= 1.0) || !(opts.tol > 0.0) || !(opts.kkt_tol > 0.0) || opts.residual_floor < 0.0 {
        return Err(Error::Invalid("invalid solver options".into()));
    }
    let scaling = scaling_matrix(problem)?;
    let k = problem.k();
    let g = problem.groups();
    let sqrt_n0 = (problem.n0() as f64).sqrt();

    let standardized: Vec<DMatrix<f64>> = (0..k)
        .map(|t| {
            let mut xt = problem.x[t].clone();
            for (l, mut col) in xt.column_iter_mut().enumerate() {
                col /= scaling.get(t, l).sqrt();
            }
            xt
        })
        .collect();
    let k0 = opts.k0_scale
        * standardized
            .iter()
            .map(spectral_norm)
            .fold(0.0_f64, f64::max);
    let lam_s = lam / k0;

    let mut ws = Workspace {
        x: standardized.into_iter().map(|x| x / k0).collect(),
        y: problem.y.iter().map(|y| y / k0).collect(),
        resid: problem.y.iter().map(|y| DVector::zeros(y.len())).collect(),
        norms: vec![0.0; k],
        floors: problem
            .y
            .iter()
            .map(|y| opts.residual_floor * y.norm() / k0)
            .collect(),
    };

    let mut beta = vec![0.0; k * g];
    let mut grad = vec![0.0; k * g];
    let mut block = vec![0.0; k];
    let objective_scaled = |beta: &[f64], norms: &[f64]| -> f64 {
        let loss: f64 = norms.iter().sum::<f64>() / sqrt_n0;
        let pen: f64 = (0..g)
            .map(|l| (0..k).map(|t| beta[t * g + l].powi(2)).sum::<f64>().sqrt())
            .sum();
        k0 * (loss + lam_s * pen)
    };

    ws.refresh(&beta, g);
    ws.check_floor(0)?;
    let mut trace = vec![objective_scaled(&beta, &ws.norms)];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_diff = f64::INFINITY;

    while iterations < opts.max_iter {
        let weights: Vec<f64> = ws.norms.iter().map(|nrm| 1.0 / (sqrt_n0 * nrm)).collect();
        let a_sum: f64 = weights.iter().sum();
        for t in 0..k {
            let x = &ws.x[t];
            let r = &ws.resid[t];
            for l in 0..g {
                grad[t * g + l] = weights[t] * x.column(l).dot(r);
            }
        }
        // The step is 1/A, so a small move can still leave a sizable gradient;
        // confirm optimality before stopping.
        if last_diff < opts.tol && k0 * kkt_scaled(&beta, &grad, &mut block, lam_s, k, g) <= opts.kkt_tol {
            converged = true;
            break;
        }
        let mut diff = 0.0_f64;
        for l in 0..g {
            for t in 0..k {
                block[t] = beta[t * g + l] - grad[t * g + l] / a_sum;
            }
            soft_threshold_in_place(&mut block, lam_s / a_sum);
            for t in 0..k {
                diff = diff.max((block[t] - beta[t * g + l]).abs());
                beta[t * g + l] = block[t];
            }
        }
        iterations += 1;
        ws.refresh(&beta, g);
        ws.check_floor(iterations)?;
        trace.push(objective_scaled(&beta, &ws.norms));
        last_diff = diff;
    }

    let beta_scaled = DVector::from_vec(beta);
    let support = (0..g)
        .filter(|&l| (0..k).any(|t| beta_scaled[t * g + l] != 0.0))
        .collect();
    Ok(HgslSolution {
        beta: scaling.unscale(&beta_scaled),
        beta_scaled,
        support,
        objective_trace: trace,
        iterations,
        converged,
        k0,
        refit_beta: None,
    })
}

/// Optimality violation of original-coordinate coefficients `beta` at penalty `lam`.
///
/// With `R` the normalized gradient of the standardized loss, returns the
/// maximum over groups of `||R_(l) + lam b_(l)/||b_(l)||||` for active groups
/// and `(||R_(l)|| - lam)_+` for inactive ones.
pub fn kkt_residual(problem: &HgslProblem, lam: f64, beta: &DVector<f64>) -> Result<f64> {
    check_len(problem, beta)?;
    let scaling = scaling_matrix(problem)?;
    let scaled = scaling.scale(beta);
    let k = problem.k();
    let g = problem.groups();
    let sqrt_n0 = (problem.n0() as f64).sqrt();
    let mut r_grad = vec![0.0; k * g];
    for t in 0..k {
        // X beta - Y
        let r = -problem.residual(t, beta);
        let norm = r.norm();
        if norm == 0.0 {
            return Err(Error::ResidualFloor {
                class: t,
                iteration: 0,
                norm,
                floor: 0.0,
            });
        }
        for l in 0..g {
            let col_dot = problem.x[t].column(l).dot(&r) / scaling.get(t, l).sqrt();
            r_grad[t * g + l] = col_dot / (sqrt_n0 * norm);
        }
    }
    let mut worst = 0.0_f64;
    for l in 0..g {
        let b_norm = (0..k).map(|t| scaled[t * g + l].powi(2)).sum::<f64>().sqrt();
        let v = if b_norm > 0.0 {
            (0..k)
                .map(|t| (r_grad[t * g + l] + lam * scaled[t * g + l] / b_norm).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            let rn = (0..k).map(|t| r_grad[t * g + l].powi(2)).sum::<f64>().sqrt();
            (rn - lam).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

/// Per-class least squares on the support columns; zero elsewhere.
pub fn refit_ols(problem: &HgslProblem, support: &[usize]) -> Result<DVector<f64>> {
    let k = problem.k();
    let g = problem.groups();
    let mut out = DVector::zeros(k * g);
    if support.is_empty() {
        return Ok(out);
    }
    if let Some(&bad) = support.iter().find(|&&l| l >= g) {
        return Err(Error::Invalid(format!("support index {bad} out of range")));
    }
    for t in 0..k {
        let x = problem.x[t].select_columns(support);
        let s = support.len();
        if x.nrows() < s {
            return Err(Error::RankDeficient {
                class: t,
                rank: x.nrows(),
                cols: s,
            });
        }
        let svd = x.svd(true, true);
        let smax = svd.singular_values.max();
        let eps = 1e-10 * smax.max(f64::MIN_POSITIVE);
        let rank = svd.rank(eps);
        if rank < s {
            return Err(Error::RankDeficient {
                class: t,
                rank,
                cols: s,
            });
        }
        let coef = svd
            .solve(&problem.y[t], eps)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        for (i, &l) in support.iter().enumerate() {
            out[t * g + l] = coef[i];
        }
    }
    Ok(out)
}
