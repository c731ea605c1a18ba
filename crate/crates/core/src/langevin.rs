//! Unadjusted Langevin dynamics in latent space.
//!
//! One step is `z' = z + s ∇ log p(z) + sqrt(2s) e` with `e ~ N(0, I)`.
//! Prior expectations during training come from a pool of persistent
//! chains; a fresh-chain posterior sampler is provided for diagnostics.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::encoder::standard_normal_vec;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::prior::EnergyParams;
use crate::scalar::Scalar;

/// Any coordinate beyond this magnitude is treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    /// Step size `s`.
    pub step_size: f64,
    /// Steps per call (`T_LD`).
    pub n_steps: usize,
    /// Reinitialize a persistent chain from `p0` once its age reaches this
    /// many steps. Off by default.
    pub restart_every: Option<u64>,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self { step_size: 0.4 * 0.4, n_steps: 20, restart_every: None }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config("langevin.step_size must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("langevin.n_steps must be at least 1".into()));
        }
        if self.restart_every == Some(0) {
            return Err(Error::Config("langevin.restart_every must be positive when set".into()));
        }
        Ok(())
    }
}

/// One Langevin update. Fails with [`Error::SamplerDivergence`] if the
/// score is non-finite or the new state leaves the divergence bound.
pub fn langevin_step<T, F, R>(z: &[T], mut score: F, step_size: T, rng: &mut R) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<Vec<T>>,
    R: Rng + ?Sized,
{
    let g = score(z)?;
    if g.len() != z.len() || !g.iter().all(|v| v.is_finite()) {
        return Err(diverged(z));
    }
    let noise: Vec<T> = standard_normal_vec(z.len(), rng);
    let scale = (T::lit(2.0) * step_size).sqrt();
    let out: Vec<T> = z
        .iter()
        .zip(&g)
        .zip(&noise)
        .map(|((&zi, &gi), &ei)| zi + step_size * gi + scale * ei)
        .collect();
    let bound = T::lit(DIVERGENCE_BOUND);
    if !out.iter().all(|v| v.is_finite() && v.abs() <= bound) {
        return Err(diverged(&out));
    }
    Ok(out)
}

fn diverged<T: Scalar>(z: &[T]) -> Error {
    Error::SamplerDivergence { z: z.iter().map(|v| v.as_f64()).collect() }
}

/// Runs `cfg.n_steps` updates from `z`.
pub fn run_chain<T, F, R>(mut z: Vec<T>, mut score: F, cfg: &LangevinConfig, rng: &mut R) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<Vec<T>>,
    R: Rng + ?Sized,
{
    let s = T::lit(cfg.step_size);
    for _ in 0..cfg.n_steps {
        z = langevin_step(&z, &mut score, s, rng)?;
    }
    Ok(z)
}

/// Persistent chain states for prior expectations.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPool<T> {
    pub states: Vec<Vec<T>>,
    /// Langevin steps applied since each chain was (re)initialized.
    pub ages: Vec<u64>,
    /// Seed used for the initial draws.
    pub seed: u64,
}

impl<T: Scalar> ChainPool<T> {
    /// `n_chains` states drawn from `p0 = N(0, I)`.
    pub fn new(n_chains: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_chains == 0 || dim == 0 {
            return Err(Error::Config("chain pool needs at least one chain of positive dimension".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..n_chains).map(|_| standard_normal_vec(dim, &mut rng)).collect();
        Ok(Self { states, ages: vec![0; n_chains], seed })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map(Vec::len).unwrap_or(0)
    }

    /// Picks `m` distinct chains uniformly, advances each by `cfg.n_steps`
    /// steps toward `p(z)`, writes them back and returns copies.
    pub fn sample_prior<R: Rng + ?Sized>(
        &mut self,
        prior: &EnergyParams<T>,
        cfg: &LangevinConfig,
        m: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<T>>> {
        if m > self.len() {
            return Err(Error::Config(format!(
                "requested {m} prior samples from a pool of {} chains",
                self.len()
            )));
        }
        let picked = index::sample(rng, self.len(), m).into_vec();
        let mut out = Vec::with_capacity(m);
        for i in picked {
            if let Some(every) = cfg.restart_every {
                if self.ages[i] >= every {
                    self.states[i] = standard_normal_vec(self.dim(), rng);
                    self.ages[i] = 0;
                }
            }
            let z = run_chain(self.states[i].clone(), |z| prior.grad_z_log_prior(z), cfg, rng)?;
            self.states[i] = z.clone();
            self.ages[i] += cfg.n_steps as u64;
            out.push(z);
        }
        Ok(out)
    }
}

/// Posterior sampling `p(z | x) ∝ exp(F(z)) p0(z) p(x | z)` from a fresh
/// `p0` draw. Diagnostic only.
pub fn posterior_langevin<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    x: &Example<T>,
    cfg: &LangevinConfig,
    rng: &mut R,
) -> Result<Vec<T>> {
    let z0 = standard_normal_vec(model.latent_dim(), rng);
    run_chain(
        z0,
        |z| {
            let mut g = model.prior.grad_z_log_prior(z)?;
            let (_, dz) = model.decoder.log_likelihood_backward(x, z, T::one(), None)?;
            for (a, b) in g.iter_mut().zip(dz) {
                *a = *a + b;
            }
            Ok(g)
        },
        cfg,
        rng,
    )
}

/// `n` fresh chains targeting `p(z | y = label) ∝ exp(f_label(z)) p0(z)`.
pub fn conditional_prior_samples<T: Scalar, R: Rng + ?Sized>(
    prior: &EnergyParams<T>,
    label: usize,
    cfg: &LangevinConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    if label >= prior.n_classes() {
        return Err(Error::Data(format!(
            "label {label} out of range for {} categories",
            prior.n_classes()
        )));
    }
    (0..n)
        .map(|_| {
            let z0 = standard_normal_vec(prior.latent_dim(), rng);
            run_chain(z0, |z| prior.grad_z_log_prior_given(z, label), cfg, rng)
        })
        .collect()
}

/// `n` fresh chains targeting the marginal prior `p(z)`.
pub fn fresh_prior_samples<T: Scalar, R: Rng + ?Sized>(
    prior: &EnergyParams<T>,
    cfg: &LangevinConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    (0..n)
        .map(|_| {
            let z0 = standard_normal_vec(prior.latent_dim(), rng);
            run_chain(z0, |z| prior.grad_z_log_prior(z), cfg, rng)
        })
        .collect()
}
