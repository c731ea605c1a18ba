//! Training objectives and their gradients.
//!
//! Everything is in minimization form. For a batch of `m` observations with
//! posterior draws `z⁺` and prior (persistent-chain) draws `z⁻`:
//!
//! * encoder and decoder minimize
//!   `-(1/m) Σ [log p(x|z⁺) - KL(q(z|x) || p0) + F(z⁺)] - λ Î(z⁺, y)`;
//! * the energy head minimizes
//!   `-(1/m) Σ [F(z⁺) - F(z⁻)] - λ Î(z⁺, y)`;
//! * labeled pairs add `-log p(y | z = μ(x))` for the energy head and encoder.
//!
//! `Î(z, y)` is the batch estimate `H(mean_b p(y|z_b)) - mean_b H(p(y|z_b))`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::encoder::{standard_normal_vec, EncoderParams, GaussianPosterior};
use crate::error::{Error, Result};
use crate::generator::DecoderParams;
use crate::model::Model;
use crate::nn::Params;
use crate::prior::EnergyParams;
use crate::scalar::{log_sum_exp, Scalar};

/// Per-step objective parts, all in nats and averaged over the batch.
///
/// `total = -recon + kl - prior_energy - λ·mutual_info + supervised`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub prior_energy: f64,
    pub mutual_info: f64,
    pub supervised: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const HEADER: &'static str = "step\trecon\tkl\tprior_energy\tmutual_info\tsupervised\ttotal";

    pub fn is_finite(&self) -> bool {
        [self.recon, self.kl, self.prior_energy, self.mutual_info, self.supervised, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    /// One tab-separated training-log row.
    pub fn log_row(&self, step: u64) -> String {
        format!(
            "{step}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
            self.recon, self.kl, self.prior_energy, self.mutual_info, self.supervised, self.total
        )
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "recon={:.6} kl={:.6} prior_energy={:.6} mutual_info={:.6} supervised={:.6} total={:.6}",
            self.recon, self.kl, self.prior_energy, self.mutual_info, self.supervised, self.total
        )
    }
}

/// Gradient buffers shaped like the model's three parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradients<T> {
    pub prior: EnergyParams<T>,
    pub encoder: EncoderParams<T>,
    pub decoder: DecoderParams<T>,
}

impl<T: Scalar> ModelGradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            prior: model.prior.zeroed(),
            encoder: model.encoder.zeroed(),
            decoder: model.decoder.zeroed(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.prior.is_finite() && self.encoder.is_finite() && self.decoder.is_finite()
    }
}

fn lit<T: Scalar>(v: T) -> f64 {
    v.as_f64()
}

/// Single-draw ELBO parts for one observation with a fresh posterior draw.
/// `total` is `-(recon - kl + prior_energy)`.
pub fn elbo_terms<T: Scalar, R: Rng + ?Sized>(model: &Model<T>, x: &Example<T>, rng: &mut R) -> Result<LossBreakdown> {
    let noise = standard_normal_vec(model.latent_dim(), rng);
    elbo_terms_with_noise(model, x, &noise)
}

pub fn elbo_terms_with_noise<T: Scalar>(model: &Model<T>, x: &Example<T>, noise: &[T]) -> Result<LossBreakdown> {
    let post = model.encoder.encode(x)?;
    let z = post.reparam_with_noise(noise);
    let recon = model.decoder.log_likelihood(x, &z)?;
    let kl = post.kl_to_reference();
    let energy = model.prior.marginal_energy(&z)?;
    Ok(LossBreakdown {
        recon: lit(recon),
        kl: lit(kl),
        prior_energy: lit(energy),
        mutual_info: 0.0,
        supervised: 0.0,
        total: lit(-(recon - kl + energy)),
    })
}

/// `mean_pos ∇_α F - mean_neg ∇_α F`, the ascent direction for the energy
/// head. Identical batches give an exactly zero result.
pub fn prior_grad_estimate<T: Scalar>(
    params: &EnergyParams<T>,
    z_pos: &[Vec<T>],
    z_neg: &[Vec<T>],
) -> Result<EnergyParams<T>> {
    if z_pos.is_empty() || z_neg.is_empty() {
        return Err(Error::Data("prior gradient needs non-empty positive and negative batches".into()));
    }
    let mut pos = params.zeroed();
    let mut neg = params.zeroed();
    accumulate_mean_energy_grad(params, z_pos, &mut pos)?;
    accumulate_mean_energy_grad(params, z_neg, &mut neg)?;
    pos.add_scaled(&neg, -T::one());
    Ok(pos)
}

fn accumulate_mean_energy_grad<T: Scalar>(params: &EnergyParams<T>, zs: &[Vec<T>], grad: &mut EnergyParams<T>) -> Result<()> {
    let w = T::one() / T::from_usize_lossy(zs.len());
    for z in zs {
        crate::error::check_dim("energy head input", params.latent_dim(), z.len())?;
        params.accumulate_energy_grad(z, w, grad);
    }
    Ok(())
}

/// Batch estimate of the mutual information between `z` and the category.
pub fn mutual_info_zy<T: Scalar>(params: &EnergyParams<T>, zs: &[Vec<T>]) -> Result<T> {
    Ok(mutual_info_zy_backward(params, zs, T::zero(), None)?.0)
}

/// Value of [`mutual_info_zy`], accumulating `weight * ∇_α Î` into `grad`
/// when given and returning `weight * ∂Î/∂z_b` for each batch element.
pub fn mutual_info_zy_backward<T: Scalar>(
    params: &EnergyParams<T>,
    zs: &[Vec<T>],
    weight: T,
    mut grad: Option<&mut EnergyParams<T>>,
) -> Result<(T, Vec<Vec<T>>)> {
    if zs.is_empty() {
        return Err(Error::Data("mutual information needs a non-empty batch".into()));
    }
    let b = zs.len();
    let k = params.n_classes();
    let inv_b = T::one() / T::from_usize_lossy(b);
    let mut caches = Vec::with_capacity(b);
    let mut log_p = Vec::with_capacity(b);
    for z in zs {
        crate::error::check_dim("energy head input", params.latent_dim(), z.len())?;
        let (logits, cache) = params.forward_cached(z);
        let f = log_sum_exp(&logits);
        log_p.push(logits.iter().map(|&l| l - f).collect::<Vec<T>>());
        caches.push(cache);
    }
    let probs: Vec<Vec<T>> = log_p.iter().map(|lp| lp.iter().map(|v| v.exp()).collect()).collect();
    let mut q = vec![T::zero(); k];
    for p in &probs {
        for (qk, &pk) in q.iter_mut().zip(p) {
            *qk = *qk + pk * inv_b;
        }
    }
    let xlogx = |p: T, lp: T| if p > T::zero() { p * lp } else { T::zero() };
    let h_marginal: T = -q.iter().map(|&qk| xlogx(qk, qk.ln())).sum::<T>();
    let h_cond: T = probs
        .iter()
        .zip(&log_p)
        .map(|(p, lp)| -p.iter().zip(lp).map(|(&pk, &lpk)| xlogx(pk, lpk)).sum::<T>())
        .sum::<T>()
        * inv_b;
    // the exact value is non-negative; clamp rounding below zero
    let mi = (h_marginal - h_cond).max(T::zero());

    let log_q: Vec<T> = q.iter().map(|&qk| qk.ln()).collect();
    let mut dzs = Vec::with_capacity(b);
    for i in 0..b {
        // ∂Î/∂p_bk = (log p_bk - log q_k) / B, then through the softmax
        let g: Vec<T> = (0..k)
            .map(|j| {
                if probs[i][j] > T::zero() && q[j] > T::zero() {
                    (log_p[i][j] - log_q[j]) * inv_b
                } else {
                    T::zero()
                }
            })
            .collect();
        let mean_g: T = probs[i].iter().zip(&g).map(|(&p, &gv)| p * gv).sum();
        let dlogits: Vec<T> = probs[i].iter().zip(&g).map(|(&p, &gv)| weight * p * (gv - mean_g)).collect();
        dzs.push(params.backward(&caches[i], &dlogits, grad.as_deref_mut()));
    }
    Ok((mi, dzs))
}

/// Which mutual-information handling the unsupervised objective uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MiWeight<T> {
    /// Plain symbol-vector coupling model; `Î` is reported but not optimized.
    Off,
    /// Information-bottleneck variant with weight `λ ≥ 0`.
    On(T),
}

/// Batch objective with gradients for all three groups. `noises[i]` is the
/// standard-normal draw that produces `z⁺_i`; `z_neg` holds prior samples.
/// `kl_weight` scales the KL term (1 without warm-up).
pub fn unsupervised_objective<T: Scalar>(
    model: &Model<T>,
    batch: &[&Example<T>],
    noises: &[Vec<T>],
    z_neg: &[Vec<T>],
    mi_weight: MiWeight<T>,
    kl_weight: T,
) -> Result<(LossBreakdown, ModelGradients<T>)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    if noises.len() != batch.len() {
        return Err(Error::Dimension { context: "posterior noise draws", expected: batch.len(), got: noises.len() });
    }
    let m = batch.len();
    let inv_m = T::one() / T::from_usize_lossy(m);
    let mut grads = ModelGradients::zeros_like(model);

    let mut draws: Vec<(GaussianPosterior<T>, crate::encoder::EncoderCache<T>)> = Vec::with_capacity(m);
    let mut z_pos = Vec::with_capacity(m);
    for (x, e) in batch.iter().zip(noises) {
        let (post, cache) = model.encoder.encode_cached(x)?;
        z_pos.push(post.reparam_with_noise(e));
        draws.push((post, cache));
    }

    // Î(z⁺, y) and its gradients
    let lambda = match mi_weight {
        MiWeight::Off => None,
        MiWeight::On(l) => Some(l),
    };
    let (mi, mi_dz) = match lambda {
        Some(l) => {
            let (mi, dz) = mutual_info_zy_backward(&model.prior, &z_pos, -l, Some(&mut grads.prior))?;
            (mi, Some(dz))
        }
        None => (mutual_info_zy(&model.prior, &z_pos)?, None),
    };

    // energy head: -(mean ∇F(z⁺) - mean ∇F(z⁻))
    if !z_neg.is_empty() {
        let ascent = prior_grad_estimate(&model.prior, &z_pos, z_neg)?;
        grads.prior.add_scaled(&ascent, -T::one());
    }

    let mut recon_sum = T::zero();
    let mut kl_sum = T::zero();
    let mut energy_sum = T::zero();
    let mut sink = model.prior.zeroed();
    for (i, x) in batch.iter().enumerate() {
        let (post, cache) = &draws[i];
        let z = &z_pos[i];
        let (recon, mut dz) = model.decoder.log_likelihood_backward(x, z, -inv_m, Some(&mut grads.decoder))?;
        // ∇_z F only; the energy head's own gradient comes from the contrastive estimate
        let dz_energy = model.prior.accumulate_energy_grad(z, -inv_m, &mut sink);
        let energy = model.prior.marginal_energy(z)?;
        for (a, b) in dz.iter_mut().zip(dz_energy) {
            *a = *a + b;
        }
        if let Some(mi_dz) = &mi_dz {
            for (a, &b) in dz.iter_mut().zip(&mi_dz[i]) {
                *a = *a + b;
            }
        }
        let (mut dmean, mut dlv) = post.reparam_backward(&noises[i], &dz);
        let (kl_dm, kl_dlv) = post.kl_grad();
        let kw = kl_weight * inv_m;
        for (a, b) in dmean.iter_mut().zip(kl_dm) {
            *a = *a + kw * b;
        }
        for (a, b) in dlv.iter_mut().zip(kl_dlv) {
            *a = *a + kw * b;
        }
        model.encoder.backward(cache, &dmean, &dlv, &mut grads.encoder);
        recon_sum = recon_sum + recon;
        kl_sum = kl_sum + post.kl_to_reference();
        energy_sum = energy_sum + energy;
    }

    let recon = recon_sum * inv_m;
    let kl = kl_sum * inv_m;
    let energy = energy_sum * inv_m;
    let lam = lambda.unwrap_or(T::zero());
    let total = -recon + kl_weight * kl - energy - lam * mi;
    let breakdown = LossBreakdown {
        recon: lit(recon),
        kl: lit(kl),
        prior_energy: lit(energy),
        mutual_info: lit(mi),
        supervised: 0.0,
        total: lit(total),
    };
    Ok((breakdown, grads))
}

/// The plain coupling-model objective: [`unsupervised_objective`] without
/// the mutual-information term.
pub fn svebm_objective<T: Scalar>(
    model: &Model<T>,
    batch: &[&Example<T>],
    noises: &[Vec<T>],
    z_neg: &[Vec<T>],
) -> Result<(LossBreakdown, ModelGradients<T>)> {
    unsupervised_objective(model, batch, noises, z_neg, MiWeight::Off, T::one())
}

/// Information-bottleneck objective with weight `lambda`.
pub fn ib_objective<T: Scalar>(
    model: &Model<T>,
    batch: &[&Example<T>],
    noises: &[Vec<T>],
    z_neg: &[Vec<T>],
    lambda: T,
) -> Result<(LossBreakdown, ModelGradients<T>)> {
    if !(lambda >= T::zero()) {
        return Err(Error::Config("information-bottleneck weight must be non-negative".into()));
    }
    unsupervised_objective(model, batch, noises, z_neg, MiWeight::On(lambda), T::one())
}

/// `-log p(y = label | z = μ(x))`.
pub fn supervised_class_loss<T: Scalar>(model: &Model<T>, x: &Example<T>, label: usize) -> Result<T> {
    check_label(label, model.n_classes())?;
    let post = model.encoder.encode(x)?;
    let logits = model.prior.logits(&post.mean)?;
    Ok(log_sum_exp(&logits) - logits[label])
}

fn check_label(label: usize, k: usize) -> Result<()> {
    if label >= k {
        Err(Error::Data(format!("label {label} out of range for {k} categories")))
    } else {
        Ok(())
    }
}

/// Mean supervised loss over `(x, label)` pairs with gradients for the
/// energy head and encoder.
pub fn supervised_objective<T: Scalar>(
    model: &Model<T>,
    batch: &[(&Example<T>, usize)],
) -> Result<(T, EnergyParams<T>, EncoderParams<T>)> {
    if batch.is_empty() {
        return Err(Error::Data("empty labeled batch".into()));
    }
    let inv_n = T::one() / T::from_usize_lossy(batch.len());
    let mut g_prior = model.prior.zeroed();
    let mut g_enc = model.encoder.zeroed();
    let mut loss = T::zero();
    for &(x, label) in batch {
        check_label(label, model.n_classes())?;
        let (post, cache) = model.encoder.encode_cached(x)?;
        let (logits, ecache) = model.prior.forward_cached(&post.mean);
        let f = log_sum_exp(&logits);
        loss = loss + f - logits[label];
        let mut d: Vec<T> = logits.iter().map(|&l| (l - f).exp() * inv_n).collect();
        d[label] = d[label] - inv_n;
        let dmean = model.prior.backward(&ecache, &d, Some(&mut g_prior));
        let zeros = vec![T::zero(); dmean.len()];
        model.encoder.backward(&cache, &dmean, &zeros, &mut g_enc);
    }
    Ok((loss * inv_n, g_prior, g_enc))
}
