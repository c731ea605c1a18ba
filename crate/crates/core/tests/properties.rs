mod common;

use common::criteria::{brute_force_matched, gradient_errors};
use common::*;
use proptest::prelude::*;
use svebm::data::Modality;
use svebm::encoder::GaussianPosterior;
use svebm::metrics::{homogeneity, matched_accuracy};
use svebm::nn::Params;
use svebm::objectives::{mutual_info_zy, prior_grad_estimate};

#[test]
fn analytic_gradients_match_finite_differences() {
    for (name, err) in gradient_errors(30) {
        assert!(err < 1e-3, "{name}: {err:e}");
    }
}

#[test]
fn prior_score_matches_finite_differences() {
    let model = tiny_model(Modality::Points, 21);
    let mut r = rng(21);
    for _ in 0..100 {
        let z = normal_vec(model.latent_dim(), &mut r);
        let g = model.prior.grad_z_log_prior(&z).unwrap();
        for i in 0..z.len() {
            let mut w = z.clone();
            let num = central_diff(
                |v| {
                    w[i] = v;
                    model.prior.unnormalized_log_prior(&w).unwrap()
                },
                z[i],
                FD_STEP,
            );
            assert!(rel_err(g[i], num) < 1e-4, "{} vs {num}", g[i]);
        }
    }
}

#[test]
fn prior_estimate_matches_energy_difference() {
    let model = tiny_model(Modality::Points, 31);
    let mut r = rng(31);
    let d = model.latent_dim();
    let pos: Vec<Vec<f64>> = (0..5).map(|_| normal_vec(d, &mut r)).collect();
    let neg: Vec<Vec<f64>> = (0..4).map(|_| normal_vec(d, &mut r)).collect();
    let g = prior_grad_estimate(&model.prior, &pos, &neg).unwrap();
    let analytic: Vec<Vec<f64>> = g.arrays().into_iter().map(<[f64]>::to_vec).collect();
    let mut work = model.prior.clone();
    let mean_f = |p: &svebm::prior::EnergyParams<f64>, zs: &[Vec<f64>]| {
        zs.iter().map(|z| p.marginal_energy(z).unwrap()).sum::<f64>() / zs.len() as f64
    };
    for a in 0..analytic.len() {
        for j in 0..analytic[a].len() {
            let x0 = work.arrays_mut()[a][j];
            let num = central_diff(
                |v| {
                    work.arrays_mut()[a][j] = v;
                    mean_f(&work, &pos) - mean_f(&work, &neg)
                },
                x0,
                FD_STEP,
            );
            work.arrays_mut()[a][j] = x0;
            assert!(rel_err(analytic[a][j], num) < 1e-4, "{} vs {num}", analytic[a][j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbol_posterior_normalized_and_shift_invariant(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let model = tiny_model(Modality::Points, seed);
        let z = normal_vec(model.latent_dim(), &mut rng(seed));
        let p = model.prior.symbol_posterior(&z).unwrap().into_vec();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let mut shifted = model.prior.clone();
        let arrays = shifted.arrays_mut();
        let last = arrays.into_iter().last().unwrap();
        last.iter_mut().for_each(|b| *b += shift);
        let q = shifted.symbol_posterior(&z).unwrap().into_vec();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_is_non_negative(mu in prop::collection::vec(-5.0f64..5.0, 1..5), lv in -4.0f64..4.0) {
        let post = GaussianPosterior::new(mu.clone(), vec![lv; mu.len()]);
        prop_assert!(post.kl_to_reference() >= 0.0);
    }

    #[test]
    fn mutual_info_is_bounded(seed in 0u64..1000, b in 1usize..12, scale in 0.1f64..20.0) {
        let model = tiny_model(Modality::Document, seed);
        let mut r = rng(seed ^ 77);
        let zs: Vec<Vec<f64>> = (0..b).map(|_| normal_vec(model.latent_dim(), &mut r).into_iter().map(|v| v * scale).collect()).collect();
        let mi = mutual_info_zy(&model.prior, &zs).unwrap();
        prop_assert!(mi >= 0.0 && mi <= (model.n_classes() as f64).ln() + 1e-12);
    }

    #[test]
    fn homogeneity_ignores_cluster_names(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
        perm in Just([2usize, 0, 3, 1]),
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let renamed: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let h = homogeneity(&truth, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - homogeneity(&truth, &renamed).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn matched_accuracy_is_the_best_bijection(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let got = matched_accuracy(&truth, &pred, 4, 4).unwrap();
        prop_assert!((got - brute_force_matched(&truth, &pred, 4)).abs() < 1e-12);
    }
}
