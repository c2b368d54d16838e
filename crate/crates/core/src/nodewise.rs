//! Node-wise multi-response regressions and the bias-corrected pair statistics.
//!
//! Node `j` is regressed on the remaining `p - 1` nodes in all classes at
//! once. Group `l` of that regression is node `l` if `l < j` and node `l + 1`
//! otherwise. `coef(t, b)` of the fit for node `a` is the coefficient of
//! variable `b` in node `a`'s class-`t` regression.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MultiNetworkSample, PrecisionSet};
use crate::error::{Error, Result};
use crate::hgsl::{
    hgsl_solve, lambda_simulated, lambda_theoretical, refit_ols, HgslProblem, LambdaConfig,
    SolveOptions,
};

/// Node `j`'s regression together with the group-to-node map.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub j: usize,
    pub problem: HgslProblem,
    /// `nodes[l]` is the node behind group `l`.
    pub nodes: Vec<usize>,
}

pub fn group_to_node(j: usize, l: usize) -> usize {
    if l < j {
        l
    } else {
        l + 1
    }
}

pub fn node_to_group(j: usize, b: usize) -> Option<usize> {
    match b.cmp(&j) {
        std::cmp::Ordering::Less => Some(b),
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Greater => Some(b - 1),
    }
}

/// Response `X_{.,j}` and design `X_{.,-j}` for every class.
pub fn build_node_problem(sample: &MultiNetworkSample, j: usize) -> Result<NodeProblem> {
    let p = sample.p();
    if j >= p {
        return Err(Error::Invalid(format!("node {j} out of range for p = {p}")));
    }
    let nodes: Vec<usize> = (0..p - 1).map(|l| group_to_node(j, l)).collect();
    let y = sample
        .classes()
        .iter()
        .map(|x| x.column(j).clone_owned())
        .collect();
    let x = sample
        .classes()
        .iter()
        .map(|x| x.select_columns(&nodes))
        .collect();
    Ok(NodeProblem {
        j,
        problem: HgslProblem::new(y, x)?,
        nodes,
    })
}

/// Which coefficients produce the residuals and diagonal estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualSource {
    /// Least-squares refit on the selected support.
    #[default]
    Refit,
    /// Penalized coefficients as returned by the solver.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitOptions {
    pub solve: SolveOptions,
    pub residuals: ResidualSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub k0: f64,
    /// Selected nodes (not group indices).
    pub support: Vec<usize>,
}

/// One node's regression output.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    pub j: usize,
    /// Coefficients used for the residuals, per class, length `p - 1`.
    pub coef: Vec<DVector<f64>>,
    /// Penalized coefficients, per class.
    pub coef_raw: Vec<DVector<f64>>,
    pub residuals: Vec<DVector<f64>>,
    /// `n^(t) / sum_i E_ij^2` per class.
    pub omega_jj: Vec<f64>,
    pub lambda: f64,
    pub meta: SolverMeta,
}

impl NodewiseFit {
    /// Coefficient on node `b` in class `t` (zero for `b == j`).
    pub fn coef_on(&self, t: usize, b: usize) -> f64 {
        node_to_group(self.j, b).map_or(0.0, |l| self.coef[t][l])
    }
}

fn flat_to_classes(flat: &DVector<f64>, k: usize, g: usize) -> Vec<DVector<f64>> {
    (0..k).map(|t| flat.rows(t * g, g).clone_owned()).collect()
}

fn residuals_and_omega(
    sample: &MultiNetworkSample,
    j: usize,
    coef: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let p = sample.p();
    let nodes: Vec<usize> = (0..p - 1).map(|l| group_to_node(j, l)).collect();
    let mut residuals = Vec::with_capacity(coef.len());
    let mut omega = Vec::with_capacity(coef.len());
    for (t, x) in sample.classes().iter().enumerate() {
        let mut e = x.column(j).clone_owned();
        for (l, &node) in nodes.iter().enumerate() {
            let c = coef[t][l];
            if c != 0.0 {
                e.axpy(-c, &x.column(node), 1.0);
            }
        }
        let ss = e.norm_squared();
        if !(ss > 0.0) {
            return Err(Error::ResidualFloor {
                class: t,
                iteration: 0,
                norm: ss.sqrt(),
                floor: 0.0,
            });
        }
        omega.push(x.nrows() as f64 / ss);
        residuals.push(e);
    }
    Ok((residuals, omega))
}

/// Solves node `j` at penalty `lam`, then forms residuals and `omega_jj`.
pub fn fit_node(
    sample: &MultiNetworkSample,
    j: usize,
    lam: f64,
    opts: &FitOptions,
) -> Result<NodewiseFit> {
    let np = build_node_problem(sample, j)?;
    let k = sample.k();
    let g = np.problem.groups();
    let sol = hgsl_solve(&np.problem, lam, &opts.solve)?;
    let coef_raw = flat_to_classes(&sol.beta, k, g);
    let coef = match opts.residuals {
        ResidualSource::Raw => coef_raw.clone(),
        ResidualSource::Refit => flat_to_classes(&refit_ols(&np.problem, &sol.support)?, k, g),
    };
    let (residuals, omega_jj) = residuals_and_omega(sample, j, &coef)?;
    Ok(NodewiseFit {
        j,
        coef,
        coef_raw,
        residuals,
        omega_jj,
        lambda: lam,
        meta: SolverMeta {
            iterations: sol.iterations,
            converged: sol.converged,
            objective: *sol.objective_trace.last().unwrap(),
            k0: sol.k0,
            support: sol.support.iter().map(|&l| np.nodes[l]).collect(),
        },
    })
}

/// How the shared penalty level is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LambdaRule {
    Theory(LambdaConfig),
    Sim(LambdaConfig),
    Fixed { lambda: f64 },
}

impl LambdaRule {
    pub fn resolve(&self, sample: &MultiNetworkSample) -> Result<f64> {
        match self {
            LambdaRule::Theory(cfg) => lambda_theoretical(sample.n0(), sample.p(), sample.k(), cfg),
            LambdaRule::Sim(cfg) => lambda_simulated(&sample.n(), sample.p(), sample.k(), cfg),
            LambdaRule::Fixed { lambda } if *lambda > 0.0 => Ok(*lambda),
            LambdaRule::Fixed { lambda } => {
                Err(Error::Invalid(format!("lambda must be positive, got {lambda}")))
            }
        }
    }
}

/// Fits for all `p` nodes at one shared penalty level.
#[derive(Debug, Clone)]
pub struct NodeFits {
    pub lambda: f64,
    pub n: Vec<usize>,
    pub residual_source: ResidualSource,
    fits: Vec<NodewiseFit>,
}

impl NodeFits {
    /// Assembles fits indexed by node; `fits[j].j` must equal `j`.
    pub fn from_fits(
        fits: Vec<NodewiseFit>,
        n: Vec<usize>,
        residual_source: ResidualSource,
    ) -> Result<Self> {
        if fits.len() < 2 {
            return Err(Error::Invalid("need fits for at least two nodes".into()));
        }
        for (j, f) in fits.iter().enumerate() {
            if f.j != j {
                return Err(Error::Invalid(format!("fit at position {j} is for node {}", f.j)));
            }
            if f.residuals.len() != n.len() || f.omega_jj.len() != n.len() {
                return Err(Error::DimensionMismatch(format!(
                    "fit {j} has {} classes, expected {}",
                    f.residuals.len(),
                    n.len()
                )));
            }
        }
        let lambda = fits[0].lambda;
        Ok(Self {
            lambda,
            n,
            residual_source,
            fits,
        })
    }

    pub fn p(&self) -> usize {
        self.fits.len()
    }

    pub fn k(&self) -> usize {
        self.n.len()
    }

    pub fn get(&self, j: usize) -> Result<&NodewiseFit> {
        self.fits
            .get(j)
            .ok_or_else(|| Error::Invalid(format!("no fit for node {j}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodewiseFit> {
        self.fits.iter()
    }

    /// Diagonal estimates `omega_hat_jj^(t)`.
    pub fn omega_diag(&self, t: usize) -> Vec<f64> {
        self.fits.iter().map(|f| f.omega_jj[t]).collect()
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P, sample: &MultiNetworkSample) -> Result<Self> {
        let file: FitsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.into_fits(sample)
    }

    pub fn to_file(&self) -> FitsFile {
        let sparse = |coef: &[DVector<f64>], j: usize| -> Vec<SparseCoef> {
            let mut out = Vec::new();
            for (t, c) in coef.iter().enumerate() {
                for (l, &v) in c.iter().enumerate() {
                    if v != 0.0 {
                        out.push(SparseCoef {
                            class: t,
                            node: group_to_node(j, l),
                            value: v,
                        });
                    }
                }
            }
            out
        };
        FitsFile {
            k: self.k(),
            p: self.p(),
            n: self.n.clone(),
            lambda: self.lambda,
            residual_source: self.residual_source,
            nodes: self
                .fits
                .iter()
                .map(|f| NodeRecord {
                    j: f.j,
                    omega_jj: f.omega_jj.clone(),
                    residual_ss: f.residuals.iter().map(|e| e.norm_squared()).collect(),
                    coef: sparse(&f.coef, f.j),
                    coef_raw: sparse(&f.coef_raw, f.j),
                    meta: f.meta.clone(),
                })
                .collect(),
        }
    }
}

/// Sparse coefficient entry in the checkpoint format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoef {
    pub class: usize,
    pub node: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub j: usize,
    pub omega_jj: Vec<f64>,
    /// Residual sum of squares per class.
    pub residual_ss: Vec<f64>,
    pub coef: Vec<SparseCoef>,
    pub coef_raw: Vec<SparseCoef>,
    pub meta: SolverMeta,
}

/// JSON checkpoint of a full node-wise fit. Residuals are not stored; they are
/// recomputed from the sample on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsFile {
    pub k: usize,
    pub p: usize,
    pub n: Vec<usize>,
    pub lambda: f64,
    pub residual_source: ResidualSource,
    pub nodes: Vec<NodeRecord>,
}

impl FitsFile {
    /// Rebuilds full fits against `sample`, checking the stored diagonal estimates.
    pub fn into_fits(self, sample: &MultiNetworkSample) -> Result<NodeFits> {
        if sample.k() != self.k || sample.p() != self.p || sample.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "fits are for k={}, p={}, n={:?}; sample has k={}, p={}, n={:?}",
                self.k,
                self.p,
                self.n,
                sample.k(),
                sample.p(),
                sample.n()
            )));
        }
        let g = self.p - 1;
        let dense = |entries: &[SparseCoef], j: usize| -> Result<Vec<DVector<f64>>> {
            let mut coef = vec![DVector::zeros(g); self.k];
            for e in entries {
                let l = node_to_group(j, e.node)
                    .filter(|_| e.node < self.p && e.class < self.k)
                    .ok_or_else(|| Error::Invalid(format!("bad coefficient entry for node {j}")))?;
                coef[e.class][l] = e.value;
            }
            Ok(coef)
        };
        let mut fits = Vec::with_capacity(self.p);
        for rec in self.nodes {
            let coef = dense(&rec.coef, rec.j)?;
            let coef_raw = dense(&rec.coef_raw, rec.j)?;
            let (residuals, omega_jj) = residuals_and_omega(sample, rec.j, &coef)?;
            for (t, (&got, &stored)) in omega_jj.iter().zip(&rec.omega_jj).enumerate() {
                if (got - stored).abs() > 1e-9 * stored.abs() {
                    return Err(Error::Invalid(format!(
                        "node {} class {t}: stored omega {stored} does not match sample ({got})",
                        rec.j
                    )));
                }
            }
            fits.push(NodewiseFit {
                j: rec.j,
                coef,
                coef_raw,
                residuals,
                omega_jj,
                lambda: self.lambda,
                meta: rec.meta,
            });
        }
        NodeFits::from_fits(fits, self.n, self.residual_source)
    }
}

/// Fits every node at the penalty from `rule`. Node fits run in parallel;
/// failures are collected and reported together.
pub fn fit_all_nodes(
    sample: &MultiNetworkSample,
    rule: &LambdaRule,
    opts: &FitOptions,
) -> Result<NodeFits> {
    let lam = rule.resolve(sample)?;
    fit_all_nodes_at(sample, lam, opts)
}

/// As [`fit_all_nodes`] with an already resolved penalty level.
pub fn fit_all_nodes_at(
    sample: &MultiNetworkSample,
    lam: f64,
    opts: &FitOptions,
) -> Result<NodeFits> {
    let results: Vec<Result<NodewiseFit>> = (0..sample.p())
        .into_par_iter()
        .map(|j| fit_node(sample, j, lam, opts))
        .collect();
    let mut fits = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((j, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::NodeFailures(failures));
    }
    NodeFits::from_fits(fits, sample.n(), opts.residuals)
}

/// The `k`-vector of bias-corrected statistics for a node pair, with the
/// diagonal estimates needed to studentize it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    pub a: usize,
    pub b: usize,
    pub t: Vec<f64>,
    pub omega_aa: Vec<f64>,
    pub omega_bb: Vec<f64>,
    pub n: Vec<usize>,
    /// Truth-based counterpart, when a true precision set was supplied.
    pub j: Option<Vec<f64>>,
}

impl PairStatistics {
    /// Studentized per-class values `sqrt(n w_aa w_bb) T^(t)`.
    pub fn studentized(&self) -> Vec<f64> {
        (0..self.t.len())
            .map(|t| (self.n[t] as f64 * (self.omega_aa[t] * self.omega_bb[t])).sqrt() * self.t[t])
            .collect()
    }
}

/// `T^(t) = (1/n) [sum E_a E_b + sum E_a^2 C_{b,a} + sum E_b^2 C_{a,b}]`.
///
/// Evaluated on the canonical ordering `(min, max)` so the result is exactly
/// symmetric in `(a, b)`.
pub fn pair_statistic(fits: &NodeFits, a: usize, b: usize) -> Result<PairStatistics> {
    if a == b {
        return Err(Error::Invalid(format!("pair ({a},{b}) is not off-diagonal")));
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let fa = fits.get(lo)?;
    let fb = fits.get(hi)?;
    let k = fits.k();
    let mut t_vec = Vec::with_capacity(k);
    for t in 0..k {
        let ea = &fa.residuals[t];
        let eb = &fb.residuals[t];
        let n = ea.len() as f64;
        let cross = ea.dot(eb);
        let sa = ea.norm_squared();
        let sb = eb.norm_squared();
        t_vec.push((cross + sa * fb.coef_on(t, lo) + sb * fa.coef_on(t, hi)) / n);
    }
    let (oa, ob) = (fits.get(a)?.omega_jj.clone(), fits.get(b)?.omega_jj.clone());
    Ok(PairStatistics {
        a,
        b,
        t: t_vec,
        omega_aa: oa,
        omega_bb: ob,
        n: fits.n.clone(),
        j: None,
    })
}

/// `J^(t) = [1 - w_aa/w_hat_aa - w_bb/w_hat_bb] w_ab / (w_aa w_bb)` from the true precision set.
pub fn j_statistic(truth: &PrecisionSet, fits: &NodeFits, a: usize, b: usize) -> Result<Vec<f64>> {
    if truth.k() != fits.k() || truth.p() != fits.p() {
        return Err(Error::DimensionMismatch("truth does not match fits".into()));
    }
    let fa = fits.get(a)?;
    let fb = fits.get(b)?;
    Ok((0..fits.k())
        .map(|t| {
            let m = truth.matrix(t);
            let (waa, wbb, wab) = (m[(a, a)], m[(b, b)], m[(a, b)]);
            (1.0 - waa / fa.omega_jj[t] - wbb / fb.omega_jj[t]) * wab / (waa * wbb)
        })
        .collect())
}

/// Builds fits directly from known coefficients (oracle residuals in simulations).
pub fn fits_from_coefficients(
    sample: &MultiNetworkSample,
    coef: Vec<Vec<DVector<f64>>>,
) -> Result<NodeFits> {
    let p = sample.p();
    if coef.len() != p {
        return Err(Error::DimensionMismatch(format!("{} coefficient sets for p = {p}", coef.len())));
    }
    let mut fits = Vec::with_capacity(p);
    for (j, c) in coef.into_iter().enumerate() {
        let (residuals, omega_jj) = residuals_and_omega(sample, j, &c)?;
        fits.push(NodewiseFit {
            j,
            coef_raw: c.clone(),
            coef: c,
            residuals,
            omega_jj,
            lambda: 0.0,
            meta: SolverMeta {
                iterations: 0,
                converged: true,
                objective: 0.0,
                k0: 0.0,
                support: Vec::new(),
            },
        });
    }
    NodeFits::from_fits(fits, sample.n(), ResidualSource::Raw)
}

/// True regression coefficients `-omega_{j,-j} / omega_jj` for every node.
pub fn oracle_coefficients(truth: &PrecisionSet) -> Vec<Vec<DVector<f64>>> {
    let p = truth.p();
    (0..p)
        .map(|j| {
            truth
                .matrices()
                .iter()
                .map(|m: &DMatrix<f64>| {
                    DVector::from_fn(p - 1, |l, _| -m[(j, group_to_node(j, l))] / m[(j, j)])
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_sample(k: usize, n: usize, p: usize, seed: u64) -> MultiNetworkSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultiNetworkSample::new(
            (0..k)
                .map(|_| DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn node_problem_indexing() {
        let s = gaussian_sample(1, 4, 3, 1);
        let np = build_node_problem(&s, 1).unwrap();
        assert_eq!(np.nodes, vec![0, 2]);
        assert_eq!(np.problem.k(), 1);
        assert_eq!(np.problem.groups(), 2);

        let s = gaussian_sample(2, 4, 5, 2);
        let np = build_node_problem(&s, 2).unwrap();
        for t in 0..2 {
            let x = s.class(t);
            assert_eq!(np.problem.response(t), &x.column(2).clone_owned());
            for (l, &node) in [0, 1, 3, 4].iter().enumerate() {
                for i in 0..4 {
                    assert_eq!(np.problem.design(t)[(i, l)], x[(i, node)]);
                }
            }
        }
        assert!(build_node_problem(&s, 5).is_err());
    }

    #[test]
    fn null_fit_large_lambda() {
        let s = gaussian_sample(2, 200, 4, 3);
        let f = fit_node(&s, 0, 10.0, &FitOptions::default()).unwrap();
        assert!(f.meta.support.is_empty());
        assert!(f.coef.iter().all(|c| c.iter().all(|&v| v == 0.0)));
        for t in 0..2 {
            let want = 200.0 / s.class(t).column(0).norm_squared();
            assert!((f.omega_jj[t] - want).abs() < 1e-12);
            assert!((f.omega_jj[t] - 1.0).abs() < 0.3);
        }
    }

    #[test]
    fn strong_linear_relation_is_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<_> = (0..2)
            .map(|_| {
                let mut m = DMatrix::from_fn(60, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
                for i in 0..60 {
                    m[(i, 0)] = m[(i, 2)] + 0.01 * rng.sample::<f64, _>(StandardNormal);
                }
                m
            })
            .collect();
        let s = MultiNetworkSample::new(data).unwrap();
        let f = fit_node(&s, 0, 0.3, &FitOptions::default()).unwrap();
        assert!(f.meta.support.contains(&2));
        // refit coefficient on node 2 is close to the exact regression answer 1
        for t in 0..2 {
            assert!((f.coef_on(t, 2) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn residual_identity_and_symmetry() {
        let s = gaussian_sample(2, 30, 5, 5);
        let fits = fit_all_nodes(&s, &LambdaRule::Fixed { lambda: 0.15 }, &FitOptions::default())
            .unwrap();
        for f in fits.iter() {
            for t in 0..2 {
                let x = s.class(t);
                for i in 0..30 {
                    let mut pred = 0.0;
                    for b in 0..5 {
                        pred += x[(i, b)] * f.coef_on(t, b);
                    }
                    assert!((f.residuals[t][i] - (x[(i, f.j)] - pred)).abs() < 1e-12);
                }
                let want = 30.0 / f.residuals[t].norm_squared();
                assert_eq!(f.omega_jj[t], want);
            }
        }
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    let ab = pair_statistic(&fits, a, b).unwrap();
                    let ba = pair_statistic(&fits, b, a).unwrap();
                    assert_eq!(ab.t, ba.t);
                }
            }
        }
        assert!(pair_statistic(&fits, 1, 1).is_err());
        assert!(pair_statistic(&fits, 1, 9).is_err());
    }

    #[test]
    fn pair_statistic_brute_force() {
        let s = gaussian_sample(2, 6, 3, 6);
        let fits = fit_all_nodes(&s, &LambdaRule::Fixed { lambda: 0.05 }, &FitOptions {
            residuals: ResidualSource::Raw,
            ..Default::default()
        })
        .unwrap();
        let (a, b) = (0, 2);
        let ps = pair_statistic(&fits, a, b).unwrap();
        for t in 0..2 {
            let ea = &fits.get(a).unwrap().residuals[t];
            let eb = &fits.get(b).unwrap().residuals[t];
            let c_ba = fits.get(b).unwrap().coef[t][0]; // node b = 2 regression, node 0 is group 0
            let c_ab = fits.get(a).unwrap().coef[t][1]; // node a = 0 regression, node 2 is group 1
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut s3 = 0.0;
            for i in 0..6 {
                s1 += ea[i] * eb[i];
                s2 += ea[i] * ea[i] * c_ba;
                s3 += eb[i] * eb[i] * c_ab;
            }
            assert!((ps.t[t] - (s1 + s2 + s3) / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_cross_moment() {
        let s = gaussian_sample(2, 10, 3, 7);
        let coef = vec![vec![DVector::zeros(2); 2]; 3];
        let fits = fits_from_coefficients(&s, coef).unwrap();
        let ps = pair_statistic(&fits, 0, 1).unwrap();
        for t in 0..2 {
            let x = s.class(t);
            let want = x.column(0).dot(&x.column(1)) / 10.0;
            assert!((ps.t[t] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn j_statistic_cases() {
        let s = gaussian_sample(2, 10, 3, 8);
        let mut m = DMatrix::identity(3, 3) * 2.0;
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        let truth = PrecisionSet::new(vec![m.clone(), DMatrix::identity(3, 3)]).unwrap();
        let fits = fits_from_coefficients(&s, oracle_coefficients(&truth)).unwrap();
        let j = j_statistic(&truth, &fits, 0, 2).unwrap();
        assert_eq!(j, vec![0.0, 0.0]);
        let j = j_statistic(&truth, &fits, 0, 1).unwrap();
        let f0 = fits.get(0).unwrap();
        let f1 = fits.get(1).unwrap();
        let want = (1.0 - 2.0 / f0.omega_jj[0] - 2.0 / f1.omega_jj[0]) * 0.5 / 4.0;
        assert!((j[0] - want).abs() < 1e-15);
    }

    #[test]
    fn fits_json_round_trip() {
        let s = gaussian_sample(2, 25, 4, 9);
        let fits = fit_all_nodes(&s, &LambdaRule::Fixed { lambda: 0.2 }, &FitOptions::default())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fits.json");
        fits.save_json(&path).unwrap();
        let back = NodeFits::load_json(&path, &s).unwrap();
        assert_eq!(back.lambda, fits.lambda);
        for (x, y) in fits.iter().zip(back.iter()) {
            assert_eq!(x.coef, y.coef);
            assert_eq!(x.residuals, y.residuals);
            assert_eq!(x.omega_jj, y.omega_jj);
            assert_eq!(x.meta, y.meta);
        }
        let other = gaussian_sample(2, 25, 4, 10);
        assert!(NodeFits::load_json(&path, &other).is_err());
    }
}
