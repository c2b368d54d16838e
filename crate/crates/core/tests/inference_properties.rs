mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use thp_core::harness::methods;
use thp_core::inference::{all_pair_statistics, u_from_pair, v_from_pair};
use thp_core::nodewise::{fit_all_nodes_at, pair_statistic};
use thp_core::simgen::{simulate, Model, SimConfig};
use thp_core::{
    estimate_precision, run_all_pairs, support_recover, FitOptions, MultiNetworkSample, NodeFits,
    TestConfig, TestKind,
};

fn fitted(k: usize, model: Model, seed: u64) -> (MultiNetworkSample, NodeFits) {
    let cfg = SimConfig::new(k, 16, 60, model, seed);
    let (_, sample) = simulate(&cfg).unwrap();
    let fits = fit_all_nodes_at(&sample, 0.35, &FitOptions::default()).unwrap();
    (sample, fits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn signed_sum_bounded_by_chi_statistic(
        k in 1usize..6,
        seed in any::<u64>(),
        flips in prop::collection::vec(any::<bool>(), 5),
    ) {
        let (_, fits) = fitted(k, Model::II, seed);
        let signs: Vec<f64> = flips[..k].iter().map(|&f| if f { 1.0 } else { -1.0 }).collect();
        for ps in all_pair_statistics(&fits).unwrap() {
            let u = u_from_pair(&ps);
            let v = v_from_pair(&ps, &signs);
            prop_assert!(v.abs() <= (k as f64).sqrt() * u * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn recovery_is_antitone_in_rho(
        seed in any::<u64>(),
        r1 in 0.05f64..3.0,
        dr in 0.0f64..3.0,
    ) {
        let (_, fits) = fitted(3, Model::I, seed);
        let loose = support_recover(&fits, r1).unwrap();
        let strict = support_recover(&fits, r1 + dr).unwrap();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn estimates_are_exactly_symmetric(seed in any::<u64>(), alpha in 0.001f64..0.9) {
        let (_, fits) = fitted(2, Model::I, seed);
        for (_, kind) in methods(2) {
            let est = estimate_precision(&fits, &TestConfig { alpha, kind }).unwrap();
            for m in est.matrices() {
                prop_assert_eq!((m - m.transpose()).amax(), 0.0);
            }
        }
    }

    #[test]
    fn pair_statistic_symmetric_in_roles(seed in any::<u64>(), a in 0usize..16, b in 0usize..16) {
        prop_assume!(a != b);
        let (_, fits) = fitted(2, Model::II, seed);
        let ab = pair_statistic(&fits, a, b).unwrap();
        let ba = pair_statistic(&fits, b, a).unwrap();
        prop_assert_eq!(&ab.t, &ba.t);
        prop_assert_eq!(u_from_pair(&ab), u_from_pair(&ba));
    }
}

#[test]
fn decisions_invariant_to_rescaling_all_data() {
    for seed in 0..4u64 {
        let (sample, fits) = fitted(3, Model::I, seed);
        let c = 3.7;
        let scaled = MultiNetworkSample::new(sample.classes().iter().map(|x| x * c).collect()).unwrap();
        let fits_c = fit_all_nodes_at(&scaled, 0.35, &FitOptions::default()).unwrap();
        let same_support = fits
            .iter()
            .zip(fits_c.iter())
            .all(|(f, g)| f.meta.support == g.meta.support);
        if !same_support {
            continue;
        }
        for (_, kind) in methods(3) {
            let cfg = TestConfig { alpha: 0.05, kind };
            let r1 = run_all_pairs(&fits, &cfg).unwrap();
            let r2 = run_all_pairs(&fits_c, &cfg).unwrap();
            for (x, y) in r1.iter().zip(&r2) {
                assert!((x.statistic - y.statistic).abs() < 1e-8 * x.statistic.abs().max(1.0));
                // flags can only differ for statistics sitting on the critical value
                if (x.statistic - x.critical).abs() > 1e-6 {
                    assert_eq!(x.reject, y.reject);
                }
            }
        }
    }
}

#[test]
fn linear_functional_two_sided_and_flipped_signs() {
    let (_, fits) = fitted(2, Model::I, 9);
    let plus = TestKind::linfun_positive(2, thp_core::Sided::Two);
    let minus = TestKind::Linfun { signs: vec![-1.0, -1.0], sided: thp_core::Sided::Two };
    let a = run_all_pairs(&fits, &TestConfig { alpha: 0.05, kind: plus }).unwrap();
    let b = run_all_pairs(&fits, &TestConfig { alpha: 0.05, kind: minus }).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.statistic, -y.statistic);
        assert_eq!(x.reject, y.reject);
    }
}

#[test]
fn null_fits_give_empty_support_and_diagonal_estimate() {
    // independent columns with a large penalty: T is the bare residual cross-moment
    let mut r = common::rng(4);
    let data: Vec<DMatrix<f64>> = (0..2)
        .map(|_| DMatrix::from_fn(400, 6, |_, _| common::gauss(&mut r)))
        .collect();
    let sample = MultiNetworkSample::new(data).unwrap();
    let fits = fit_all_nodes_at(&sample, 5.0, &FitOptions::default()).unwrap();
    assert!(support_recover(&fits, 6.0).unwrap().is_empty());
    let est = estimate_precision(&fits, &TestConfig::chi(1e-9)).unwrap();
    for m in est.matrices() {
        assert_eq!(m.clone_owned() - DMatrix::from_diagonal(&m.diagonal()), DMatrix::zeros(6, 6));
    }
}
