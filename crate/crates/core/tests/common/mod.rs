//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod criteria;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svebm::data::{DocumentExample, Example, Modality, SequenceExample};
use svebm::model::{Model, ModelConfig};
use svebm::nn::Activation;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central-difference derivative of `f` along one coordinate.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x0: f64, h: f64) -> f64 {
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

pub const FD_STEP: f64 = 1e-5;

/// Tiny model of the given modality with smooth activations.
pub fn tiny_model(modality: Modality, seed: u64) -> Model<f64> {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let k = r.random_range(2..=4);
    let cfg = ModelConfig {
        modality,
        latent_dim: d,
        n_classes: k,
        energy_hidden: vec![r.random_range(2..=5)],
        energy_activation: Activation::Tanh,
        vocab_size: 7,
        embed_dim: 3,
        rnn_hidden: r.random_range(2..=4),
        max_len: 6,
        mlp_hidden: vec![r.random_range(2..=4)],
        mlp_activation: Activation::Silu,
        point_dim: 2,
        obs_std: 0.7,
    };
    Model::init(cfg, &mut r).expect("tiny config is valid")
}

pub fn random_example(model: &Model<f64>, r: &mut impl Rng) -> Example<f64> {
    let c = &model.config;
    match c.modality {
        Modality::Points => Example::point((0..c.point_dim).map(|_| r.random_range(-2.0..2.0)).collect(), None),
        Modality::Sequence => {
            let len = r.random_range(1..=4);
            Example::Sequence(SequenceExample::new((0..len).map(|_| r.random_range(3..c.vocab_size as u32)).collect()))
        }
        Modality::Document => {
            let mut counts: Vec<u32> = (0..c.vocab_size).map(|_| r.random_range(0..3)).collect();
            counts[r.random_range(0..c.vocab_size)] += 1;
            Example::Document(DocumentExample::new(counts))
        }
    }
}

pub fn normal_vec(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}
