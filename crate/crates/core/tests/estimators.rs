mod common;

use common::criteria::linear_gaussian_model;
use common::*;
use rand::Rng;
use svebm::data::{Example, Modality};
use svebm::encoder::GaussianPosterior;
use svebm::generator::DecoderParams;
use svebm::langevin::LangevinConfig;
use svebm::metrics::{attribute_control_accuracy, classify, log_partition_estimate, nll_importance_sampling};
use svebm::model::{Model, ModelConfig};
use svebm::nn::{Activation, Params};
use svebm::objectives::mutual_info_zy;
use svebm::prior::EnergyParams;

#[test]
fn reparam_moments_match_monte_carlo() {
    let post = GaussianPosterior::new(vec![0.5, -1.2], vec![0.3_f64.ln(), 2.0_f64.ln()]);
    let mut r = rng(1);
    let zs: Vec<Vec<f64>> = (0..100_000).map(|_| post.reparam_sample(&mut r).0).collect();
    for (j, (mu, var)) in [(0.5, 0.3), (-1.2, 2.0_f64)].into_iter().enumerate() {
        let (m, v) = mean_var(&zs.iter().map(|z| z[j]).collect::<Vec<_>>());
        assert!((m - mu).abs() < 0.02 * var.sqrt(), "mean {m} vs {mu}");
        assert!((v - var).abs() < 0.02 * var, "variance {v} vs {var}");
    }
    let (cov, _) = mean_var(&zs.iter().map(|z| (z[0] - 0.5) * (z[1] + 1.2)).collect::<Vec<_>>());
    assert!(cov.abs() < 0.02 * (0.3f64 * 2.0).sqrt());
}

#[test]
fn kl_matches_monte_carlo() {
    let post = GaussianPosterior::new(vec![0.0], vec![1.0]);
    let closed = post.kl_to_reference();
    assert!((closed - (std::f64::consts::E - 2.0) / 2.0).abs() < 1e-12);
    let mut r = rng(2);
    let log_p0 = |z: f64| -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mc = (0..100_000)
        .map(|_| {
            let z = post.reparam_sample(&mut r).0;
            post.log_density(&z) - log_p0(z[0])
        })
        .sum::<f64>()
        / 100_000.0;
    assert!((mc - closed).abs() < 0.01 * closed, "{mc} vs {closed}");
}

#[test]
fn mutual_info_matches_double_sum() {
    for seed in 0..20 {
        let model = tiny_model(Modality::Points, seed);
        let mut r = rng(seed);
        let zs: Vec<Vec<f64>> = (0..r.random_range(1..8)).map(|_| normal_vec(model.latent_dim(), &mut r)).collect();
        let p: Vec<Vec<f64>> = zs.iter().map(|z| model.prior.symbol_posterior(z).unwrap().into_vec()).collect();
        let (b, k) = (p.len(), p[0].len());
        let q: Vec<f64> = (0..k).map(|j| p.iter().map(|pi| pi[j]).sum::<f64>() / b as f64).collect();
        let mut brute = 0.0;
        for pi in &p {
            for j in 0..k {
                brute += pi[j] * (pi[j] / q[j]).ln() / b as f64;
            }
        }
        let got = mutual_info_zy(&model.prior, &zs).unwrap();
        assert!((got - brute.max(0.0)).abs() < 1e-12, "{got} vs {brute}");
    }
}

fn constant_point_model() -> Model<f64> {
    let mut m = tiny_model(Modality::Points, 4);
    for a in m.prior.arrays_mut() {
        a.fill(0.0);
    }
    m.encoder.zero_heads();
    let DecoderParams::Points { net, .. } = &mut m.decoder else { unreachable!() };
    net.layers.last_mut().unwrap().weight.fill(0.0);
    m
}

#[test]
fn constant_weights_give_exact_marginal() {
    let m = constant_point_model();
    let x = Example::point(vec![0.3, -1.1], None);
    let exact = -m.decoder.log_likelihood(&x, &vec![0.0; m.latent_dim()]).unwrap();
    let log_z = (m.n_classes() as f64).ln();
    for n in [1, 7, 100] {
        let est = nll_importance_sampling(&m, &x, n, log_z, &mut rng(n as u64)).unwrap();
        assert!((est - exact).abs() < 1e-10, "n={n}: {est} vs {exact}");
    }
}

#[test]
fn more_samples_tighten_the_bound() {
    let model = linear_gaussian_model(1.3, 0.4, 0.6);
    let mut m = model.clone();
    m.encoder.mean_head.bias[0] += 0.5;
    let log_z = log_partition_estimate(&m.prior, 10, &mut rng(0)).unwrap();
    let x = Example::point(vec![1.7], None);
    let mut r = rng(3);
    let avg = |n: usize, r: &mut _| (0..50).map(|_| nll_importance_sampling(&m, &x, n, log_z, r).unwrap()).sum::<f64>() / 50.0;
    let few = avg(5, &mut r);
    let many = avg(5000, &mut r);
    assert!(many <= few, "{many} vs {few}");
}

/// 2-D model whose prior puts class k along direction k and whose
/// encoder and decoder are near-identity maps.
fn separated_model(k: usize) -> Model<f64> {
    let cfg = ModelConfig {
        modality: Modality::Points,
        latent_dim: 2,
        n_classes: k,
        energy_hidden: vec![2],
        mlp_hidden: vec![2],
        mlp_activation: Activation::Identity,
        point_dim: 2,
        obs_std: 0.05,
        ..ModelConfig::default()
    };
    let mut m = Model::<f64>::init(cfg, &mut rng(0)).unwrap();
    let mut w = Vec::new();
    for c in 0..k {
        let a = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
        w.extend([4.0 * a.cos(), 4.0 * a.sin()]);
    }
    m.prior = EnergyParams::linear(w, vec![0.0; k]);
    let eye = [1.0, 0.0, 0.0, 1.0];
    let DecoderParams::Points { net, .. } = &mut m.decoder else { unreachable!() };
    for l in &mut net.layers {
        l.weight.copy_from_slice(&eye);
        l.bias.fill(0.0);
    }
    let svebm::encoder::EncoderBody::Mlp(body) = &mut m.encoder.body else { unreachable!() };
    body.layers[0].weight.copy_from_slice(&eye);
    body.layers[0].bias.fill(0.0);
    m.encoder.mean_head.weight.copy_from_slice(&eye);
    m.encoder.mean_head.bias.fill(0.0);
    m.encoder.log_var_head.weight.fill(0.0);
    m.encoder.log_var_head.bias.fill(-4.0);
    m
}

#[test]
fn attribute_control_is_self_consistent_on_separated_toy() {
    let m = separated_model(4);
    let cfg = LangevinConfig { step_size: 0.04, n_steps: 200, restart_every: None };
    for label in 0..4 {
        let acc = attribute_control_accuracy(&m, label, 200, |x| Ok(classify(&m, x)?.0), &cfg, &mut rng(label as u64)).unwrap();
        assert!(acc > 0.9, "label {label}: {acc}");
    }
}

#[test]
fn attribute_control_with_random_judge_is_chance() {
    let m = separated_model(4);
    let cfg = LangevinConfig { step_size: 0.16, n_steps: 5, restart_every: None };
    let mut judge_rng = rng(10);
    let acc = attribute_control_accuracy(&m, 1, 4000, |_| Ok(judge_rng.random_range(0..4)), &cfg, &mut rng(11)).unwrap();
    assert!((acc - 0.25).abs() < 0.03, "{acc}");
}

#[test]
fn attribute_control_single_category_is_one() {
    let mut m = tiny_model(Modality::Points, 3);
    m.prior = EnergyParams::linear(vec![0.0; m.latent_dim()], vec![0.0]);
    let acc = attribute_control_accuracy(&m, 0, 10, |_| Ok(0), &LangevinConfig::default(), &mut rng(0)).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn classifier_reads_planted_directions_and_ignores_decoder() {
    let m = separated_model(4);
    let mut other = m.clone();
    for a in other.decoder.arrays_mut() {
        a.iter_mut().for_each(|v| *v = -*v + 0.3);
    }
    for c in 0..4 {
        let a = 2.0 * std::f64::consts::PI * c as f64 / 4.0;
        let x = Example::point(vec![2.0 * a.cos(), 2.0 * a.sin()], None);
        let (k, dist) = classify(&m, &x).unwrap();
        assert_eq!(k, c);
        assert_eq!(dist, classify(&other, &x).unwrap().1);
    }
}

#[test]
fn uniform_classifier_breaks_ties_to_zero() {
    let mut m = tiny_model(Modality::Document, 2);
    for a in m.prior.arrays_mut() {
        a.fill(0.0);
    }
    let x = random_example(&m, &mut rng(0));
    let (k, dist) = classify(&m, &x).unwrap();
    assert_eq!(k, 0);
    let u = 1.0 / m.n_classes() as f64;
    assert!(dist.probs().iter().all(|p| (p - u).abs() < 1e-15));
}
