//! Coupled prior over a category and a latent vector.
//!
//! The joint density is `exp(<y, f(z)>) p0(z) / Z` with `p0 = N(0, I)` and
//! `f` a small MLP producing one logit per category. Summing out the
//! category gives the marginal energy `F(z) = logsumexp f(z)`, and the
//! conditional over categories is `softmax f(z)`.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::nn::{Activation, ArraySpec, Linear, Mlp, MlpCache, Params};
use crate::scalar::{log_sum_exp, softmax, std_normal_log_density, Scalar};

/// Parameters of the energy head `f: R^d -> R^K`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams<T> {
    pub net: Mlp<T>,
}

/// Category probabilities `p(y | z)`; entries are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDistribution<T>(Vec<T>);

impl<T: Scalar> SymbolDistribution<T> {
    pub fn from_logits(logits: &[T]) -> Self {
        Self(softmax(logits))
    }

    pub fn probs(&self) -> &[T] {
        &self.0
    }

    /// Most probable category, lowest index on ties.
    pub fn argmax(&self) -> usize {
        crate::scalar::argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

/// Forward record needed to backpropagate through the energy head.
#[derive(Clone, Debug)]
pub struct EnergyCache<T> {
    mlp: MlpCache<T>,
    pub logits: Vec<T>,
}

/// Output-layer gain applied at initialization so the initial energy is close
/// to zero and the initial prior close to `p0`.
const INIT_OUTPUT_GAIN: f64 = 0.1;

impl<T: Scalar> EnergyParams<T> {
    pub fn init<R: Rng + ?Sized>(
        latent_dim: usize,
        n_classes: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut net = Mlp::init(&sizes(latent_dim, n_classes, hidden), activation, Activation::Identity, rng);
        net.scale_output_layer(T::lit(INIT_OUTPUT_GAIN));
        Self { net }
    }

    /// All-zero head: every logit is zero, so the prior equals `p0`.
    pub fn zeros(latent_dim: usize, n_classes: usize, hidden: &[usize], activation: Activation) -> Self {
        Self {
            net: Mlp::zeros(&sizes(latent_dim, n_classes, hidden), activation, Activation::Identity),
        }
    }

    /// Single affine layer `f(z) = W z + b`, `weight` row-major `[K][d]`.
    pub fn linear(weight: Vec<T>, bias: Vec<T>) -> Self {
        let n_out = bias.len();
        let n_in = weight.len() / n_out.max(1);
        assert_eq!(n_in * n_out, weight.len(), "weight length must be K * d");
        Self {
            net: Mlp {
                layers: vec![Linear { weight, bias, n_in, n_out }],
                hidden: Activation::Identity,
                output: Activation::Identity,
            },
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.net.n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.net.n_out()
    }

    fn check(&self, z: &[T]) -> Result<()> {
        check_dim("energy head input", self.latent_dim(), z.len())
    }

    pub fn logits(&self, z: &[T]) -> Result<Vec<T>> {
        self.check(z)?;
        Ok(self.net.forward(z))
    }

    /// `F(z) = log Σ_k exp f(z)_k`.
    pub fn marginal_energy(&self, z: &[T]) -> Result<T> {
        Ok(log_sum_exp(&self.logits(z)?))
    }

    pub fn symbol_posterior(&self, z: &[T]) -> Result<SymbolDistribution<T>> {
        Ok(SymbolDistribution::from_logits(&self.logits(z)?))
    }

    /// `F(z) + log p0(z)`; the partition function is omitted.
    pub fn unnormalized_log_prior(&self, z: &[T]) -> Result<T> {
        Ok(self.marginal_energy(z)? + std_normal_log_density(z))
    }

    /// `∇_z [F(z) + log p0(z)] = Σ_k p(k|z) ∇_z f_k(z) - z`.
    pub fn grad_z_log_prior(&self, z: &[T]) -> Result<Vec<T>> {
        self.check(z)?;
        let (logits, cache) = self.forward_cached(z);
        let p = softmax(&logits);
        let mut g = self.backward(&cache, &p, None);
        for (gi, &zi) in g.iter_mut().zip(z) {
            *gi = *gi - zi;
        }
        Ok(g)
    }

    /// `∇_z [f_label(z) + log p0(z)]`, the score of `p(z | y = label)`.
    pub fn grad_z_log_prior_given(&self, z: &[T], label: usize) -> Result<Vec<T>> {
        self.check(z)?;
        if label >= self.n_classes() {
            return Err(Error::Data(format!(
                "label {label} out of range for {} categories",
                self.n_classes()
            )));
        }
        let (_, cache) = self.forward_cached(z);
        let mut onehot = vec![T::zero(); self.n_classes()];
        onehot[label] = T::one();
        let mut g = self.backward(&cache, &onehot, None);
        for (gi, &zi) in g.iter_mut().zip(z) {
            *gi = *gi - zi;
        }
        Ok(g)
    }

    pub fn forward_cached(&self, z: &[T]) -> (Vec<T>, EnergyCache<T>) {
        let (logits, mlp) = self.net.forward_cached(z);
        (logits.clone(), EnergyCache { mlp, logits })
    }

    /// Backpropagates `dL/dlogits`; accumulates into `grad` and returns `dL/dz`.
    pub fn backward(&self, cache: &EnergyCache<T>, dlogits: &[T], grad: Option<&mut EnergyParams<T>>) -> Vec<T> {
        self.net.backward(&cache.mlp, dlogits, grad.map(|g| &mut g.net))
    }

    /// Adds `weight * ∇_α F(z)` into `grad` and returns `weight * ∇_z F(z)`.
    pub fn accumulate_energy_grad(&self, z: &[T], weight: T, grad: &mut EnergyParams<T>) -> Vec<T> {
        let (logits, cache) = self.forward_cached(z);
        let p: Vec<T> = softmax(&logits).into_iter().map(|v| v * weight).collect();
        self.backward(&cache, &p, Some(grad))
    }
}

fn sizes(latent_dim: usize, n_classes: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(latent_dim);
    s.extend_from_slice(hidden);
    s.push(n_classes);
    s
}

impl<T: Scalar> Params<T> for EnergyParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        self.net.arrays()
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        self.net.arrays_mut()
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        self.net.specs(prefix)
    }
}
