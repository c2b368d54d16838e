mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use thp_core::hgsl::objective;
use thp_core::{hgsl_solve, kkt_residual, scaling_matrix, Error, HgslProblem, SolveOptions};

fn tight() -> SolveOptions {
    SolveOptions {
        tol: 1e-12,
        kkt_tol: 1e-10,
        max_iter: 200_000,
        ..Default::default()
    }
}

fn solve_or_skip(p: &HgslProblem, lam: f64, opts: &SolveOptions) -> Option<thp_core::HgslSolution> {
    match hgsl_solve(p, lam, opts) {
        Ok(s) => Some(s),
        // interpolating fits are outside the program's domain
        Err(Error::ResidualFloor { .. }) => None,
        Err(e) => panic!("unexpected solver error: {e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_trace_never_increases(
        k in prop::sample::select(vec![1usize, 2, 5]),
        g in prop::sample::select(vec![1usize, 5, 20]),
        n in prop::sample::select(vec![10usize, 50]),
        c in 0.5f64..2.0,
        seed in any::<u64>(),
    ) {
        let p = random_problem(k, g, n, seed);
        let lam = moderate_lambda(g, n, c);
        if let Some(sol) = solve_or_skip(&p, lam, &SolveOptions::default()) {
            for w in sol.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
            if sol.converged {
                prop_assert!(kkt_residual(&p, lam, &sol.beta).unwrap() <= 1e-6);
            }
        }
    }

    #[test]
    fn minimizer_does_not_depend_on_k0(
        k in 1usize..4,
        g in 1usize..8,
        scale in 1.0f64..6.0,
        seed in any::<u64>(),
    ) {
        let p = random_problem(k, g, 30, seed);
        let lam = moderate_lambda(g, 30, 1.0);
        let base = solve_or_skip(&p, lam, &tight());
        let big = solve_or_skip(&p, lam, &SolveOptions { k0_scale: scale, ..tight() });
        if let (Some(a), Some(b)) = (base, big) {
            prop_assert!(a.converged && b.converged);
            prop_assert!((&a.beta - &b.beta).amax() < 1e-8, "{}", (&a.beta - &b.beta).amax());
        }
    }

    #[test]
    fn standardizing_first_gives_the_same_coefficients(
        k in 1usize..4,
        g in 1usize..8,
        seed in any::<u64>(),
    ) {
        let p = random_problem(k, g, 30, seed);
        let lam = moderate_lambda(g, 30, 1.0);
        let d = scaling_matrix(&p).unwrap();
        let xs: Vec<DMatrix<f64>> = (0..k)
            .map(|t| {
                let mut x = p.design(t).clone();
                for (l, mut col) in x.column_iter_mut().enumerate() {
                    col /= d.get(t, l).sqrt();
                }
                x
            })
            .collect();
        let ys = (0..k).map(|t| p.response(t).clone()).collect();
        let pre = HgslProblem::new(ys, xs).unwrap();
        let a = solve_or_skip(&p, lam, &tight());
        let b = solve_or_skip(&pre, lam, &tight());
        if let (Some(a), Some(b)) = (a, b) {
            // the pre-standardized program's coefficients are the scaled ones
            let mapped = d.unscale(&b.beta);
            prop_assert!((&a.beta - &mapped).amax() < 1e-8);
            prop_assert!((&a.beta_scaled - &b.beta).amax() < 1e-8);
        }
    }
}

#[test]
fn single_class_matches_coordinate_descent_square_root_lasso() {
    for seed in 0..5u64 {
        let p = random_problem(1, 4, 25, 100 + seed);
        let lam = moderate_lambda(4, 25, 0.8);
        let d = scaling_matrix(&p).unwrap();
        let w: Vec<f64> = (0..4).map(|l| d.get(0, l).sqrt()).collect();
        let oracle = sqrt_lasso_cd(p.response(0), p.design(0), &w, lam);
        let sol = hgsl_solve(&p, lam, &tight()).unwrap();
        let diff = (&sol.beta - &oracle).amax();
        assert!(diff < 1e-6, "seed {seed}: max difference {diff}");
        let f_obj = objective(&p, lam, &sol.beta).unwrap();
        let f_direct = sqrt_lasso_objective(p.response(0), p.design(0), &w, lam, &sol.beta);
        assert!((f_obj - f_direct).abs() < 1e-12);
    }
}

#[test]
fn zero_solution_above_the_gradient_threshold() {
    for seed in 0..10u64 {
        let p = random_problem(2, 6, 20, seed);
        let zero = DVector::zeros(12);
        let threshold = kkt_residual(&p, 0.0, &zero).unwrap();
        let sol = hgsl_solve(&p, threshold * 1.001, &SolveOptions::default()).unwrap();
        assert!(sol.support.is_empty());
        assert_eq!(kkt_residual(&p, threshold * 1.001, &zero).unwrap(), 0.0);
        let below = hgsl_solve(&p, threshold * 0.9, &SolveOptions::default()).unwrap();
        assert!(!below.support.is_empty());
    }
}

#[test]
fn beats_random_and_grid_candidates_on_tiny_instances() {
    for seed in 0..6u64 {
        let (k, g) = (1 + (seed as usize % 2), 1 + (seed as usize % 3));
        let p = random_problem(k, g, 12, 500 + seed);
        let lam = moderate_lambda(g, 12, 0.7);
        let sol = hgsl_solve(&p, lam, &tight()).unwrap();
        let best = objective(&p, lam, &sol.beta).unwrap();
        let mut r = rng(seed);
        for i in 0..20_000 {
            let spread = [1e-3, 1e-2, 0.1, 1.0][i % 4];
            let cand = DVector::from_fn(k * g, |j, _| sol.beta[j] + spread * gauss(&mut r));
            assert!(objective(&p, lam, &cand).unwrap() >= best - 1e-10);
        }
    }
}
