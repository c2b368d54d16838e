#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thp_core::HgslProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random instance with unequal column scales and a sparse group signal.
pub fn random_problem(k: usize, g: usize, n: usize, seed: u64) -> HgslProblem {
    let mut r = rng(seed);
    let scales: Vec<f64> = (0..g).map(|_| r.random_range(0.3..3.0)).collect();
    let active: Vec<bool> = (0..g).map(|l| l == 0 || r.random_bool(0.3)).collect();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for _ in 0..k {
        let x = DMatrix::from_fn(n, g, |_, l| scales[l] * gauss(&mut r));
        let beta = DVector::from_fn(g, |l, _| if active[l] { gauss(&mut r) / scales[l] } else { 0.0 });
        let noise = DVector::from_fn(n, |_, _| gauss(&mut r));
        ys.push(&x * beta + noise);
        xs.push(x);
    }
    HgslProblem::new(ys, xs).unwrap()
}

/// Penalty level of the usual order `sqrt(2 log G / n)`, times `c`.
pub fn moderate_lambda(g: usize, n: usize, c: f64) -> f64 {
    c * ((2.0 * ((g + 1) as f64).ln() + 1.0) / n as f64).sqrt()
}

/// `||y - X b|| / sqrt(n) + lam sum_l w_l |b_l|`, evaluated directly.
pub fn sqrt_lasso_objective(y: &DVector<f64>, x: &DMatrix<f64>, w: &[f64], lam: f64, b: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    (y - x * b).norm() / n.sqrt() + lam * b.iter().zip(w).map(|(v, w)| w * v.abs()).sum::<f64>()
}

/// Weighted square-root Lasso by cyclic coordinate descent, each coordinate
/// minimized by golden-section search on the bracket between 0 and the
/// unpenalized coordinate minimizer.
pub fn sqrt_lasso_cd(y: &DVector<f64>, x: &DMatrix<f64>, w: &[f64], lam: f64) -> DVector<f64> {
    let g = x.ncols();
    let mut b = DVector::zeros(g);
    for _sweep in 0..5000 {
        let mut moved = 0.0_f64;
        for l in 0..g {
            let mut partial = b.clone();
            partial[l] = 0.0;
            let r = y - x * &partial;
            let col = x.column(l);
            let ls = col.dot(&r) / col.norm_squared();
            let (mut lo, mut hi) = if ls >= 0.0 { (0.0, ls) } else { (ls, 0.0) };
            let f = |v: f64| {
                let mut c = partial.clone();
                c[l] = v;
                sqrt_lasso_objective(y, x, w, lam, &c)
            };
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                if hi - lo < 1e-15 {
                    break;
                }
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if f(m1) <= f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let mut v = 0.5 * (lo + hi);
            if f(0.0) <= f(v) {
                v = 0.0;
            }
            moved = moved.max((v - b[l]).abs());
            b[l] = v;
        }
        if moved < 1e-13 {
            break;
        }
    }
    b
}
