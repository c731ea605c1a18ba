//! Amortized diagonal-Gaussian posterior `q(z | x)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Example;
use crate::error::{check_dim, Error, Result};
use crate::nn::{prefixed_specs, Activation, ArraySpec, Embedding, Gru, GruStepCache, Linear, Mlp, MlpCache, Params};
use crate::scalar::{ln_two_pi, Scalar};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Mean and log-variance of `q(z | x)`. The log-variance is kept inside
/// `[LOG_VAR_MIN, LOG_VAR_MAX]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior<T> {
    pub mean: Vec<T>,
    pub log_var: Vec<T>,
}

impl<T: Scalar> GaussianPosterior<T> {
    pub fn new(mean: Vec<T>, log_var: Vec<T>) -> Self {
        assert_eq!(mean.len(), log_var.len(), "mean and log-variance lengths differ");
        let lo = T::lit(LOG_VAR_MIN);
        let hi = T::lit(LOG_VAR_MAX);
        let log_var = log_var.into_iter().map(|v| v.max(lo).min(hi)).collect();
        Self { mean, log_var }
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![T::zero(); dim], log_var: vec![T::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self) -> Vec<T> {
        self.log_var.iter().map(|&lv| (lv * T::lit(0.5)).exp()).collect()
    }

    /// `μ + σ ⊙ e` for a caller-supplied standard-normal draw.
    pub fn reparam_with_noise(&self, noise: &[T]) -> Vec<T> {
        self.mean
            .iter()
            .zip(&self.log_var)
            .zip(noise)
            .map(|((&m, &lv), &e)| m + (lv * T::lit(0.5)).exp() * e)
            .collect()
    }

    /// Draws `z = μ + σ ⊙ e` and returns it with the noise `e`.
    pub fn reparam_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Vec<T>) {
        let noise = standard_normal_vec(self.dim(), rng);
        (self.reparam_with_noise(&noise), noise)
    }

    /// Backpropagates `dL/dz` through the reparameterization; returns
    /// `(dL/dμ, dL/dlogvar)`.
    pub fn reparam_backward(&self, noise: &[T], dz: &[T]) -> (Vec<T>, Vec<T>) {
        let half = T::lit(0.5);
        let dlv = self
            .log_var
            .iter()
            .zip(noise)
            .zip(dz)
            .map(|((&lv, &e), &g)| g * e * half * (lv * half).exp())
            .collect();
        (dz.to_vec(), dlv)
    }

    /// `KL(q || N(0, I)) = ½ Σ (μ² + σ² - 1 - log σ²)`.
    pub fn kl_to_reference(&self) -> T {
        let half = T::lit(0.5);
        self.mean
            .iter()
            .zip(&self.log_var)
            .map(|(&m, &lv)| half * (m * m + lv.exp() - T::one() - lv))
            .sum()
    }

    /// Gradient of [`Self::kl_to_reference`] with respect to `(μ, logvar)`.
    pub fn kl_grad(&self) -> (Vec<T>, Vec<T>) {
        let half = T::lit(0.5);
        let dm = self.mean.clone();
        let dlv = self.log_var.iter().map(|&lv| half * (lv.exp() - T::one())).collect();
        (dm, dlv)
    }

    pub fn log_density(&self, z: &[T]) -> T {
        let half = T::lit(0.5);
        self.mean
            .iter()
            .zip(&self.log_var)
            .zip(z)
            .map(|((&m, &lv), &zi)| {
                let d = zi - m;
                -half * (ln_two_pi::<T>() + lv + d * d / lv.exp())
            })
            .sum()
    }
}

pub(crate) fn standard_normal_vec<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    (0..n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            T::lit(e)
        })
        .collect()
}

/// Feature extractor in front of the two Gaussian heads.
#[derive(Clone, Debug, PartialEq)]
pub enum EncoderBody<T> {
    /// Token embeddings read by a gated recurrent cell; the final hidden
    /// state is the feature vector.
    Sequence { embedding: Embedding<T>, gru: Gru<T> },
    /// MLP over point coordinates or normalized bag-of-words counts.
    Mlp(Mlp<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub body: EncoderBody<T>,
    pub mean_head: Linear<T>,
    pub log_var_head: Linear<T>,
}

#[derive(Clone, Debug)]
enum BodyCache<T> {
    Sequence { tokens: Vec<u32>, steps: Vec<GruStepCache<T>> },
    Mlp(MlpCache<T>),
}

/// Forward record for [`EncoderParams::backward`].
#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    body: BodyCache<T>,
    features: Vec<T>,
    raw_log_var: Vec<T>,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn sequence<R: Rng + ?Sized>(vocab: usize, embed_dim: usize, hidden: usize, latent_dim: usize, rng: &mut R) -> Self {
        let embedding = Embedding::init(vocab, embed_dim, 1.0 / (embed_dim as f64).sqrt(), rng);
        let gru = Gru::init(embed_dim, hidden, rng);
        Self::with_heads(EncoderBody::Sequence { embedding, gru }, hidden, latent_dim, rng)
    }

    /// `sizes` runs from the input width to the feature width.
    pub fn mlp<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, latent_dim: usize, rng: &mut R) -> Self {
        let body = Mlp::init(sizes, activation, activation, rng);
        let width = body.n_out();
        Self::with_heads(EncoderBody::Mlp(body), width, latent_dim, rng)
    }

    fn with_heads<R: Rng + ?Sized>(body: EncoderBody<T>, width: usize, latent_dim: usize, rng: &mut R) -> Self {
        Self {
            body,
            mean_head: Linear::init(width, latent_dim, 1.0, rng),
            log_var_head: Linear::init(width, latent_dim, 0.1, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.n_out
    }

    /// Zeroes both heads so every input encodes to `N(0, I)`.
    pub fn zero_heads(&mut self) {
        self.mean_head.fill(T::zero());
        self.log_var_head.fill(T::zero());
    }

    pub fn encode(&self, x: &Example<T>) -> Result<GaussianPosterior<T>> {
        Ok(self.encode_cached(x)?.0)
    }

    pub fn encode_cached(&self, x: &Example<T>) -> Result<(GaussianPosterior<T>, EncoderCache<T>)> {
        let (features, body) = match (&self.body, x) {
            (EncoderBody::Sequence { embedding, gru }, Example::Sequence(s)) => {
                let mut h = vec![T::zero(); gru.hidden()];
                let mut steps = Vec::with_capacity(s.tokens.len());
                for &t in &s.tokens {
                    if t as usize >= embedding.vocab {
                        return Err(Error::Data(format!(
                            "token id {t} outside vocabulary of size {}",
                            embedding.vocab
                        )));
                    }
                    let (hn, c) = gru.step(embedding.row(t as usize), &h);
                    steps.push(c);
                    h = hn;
                }
                (h, BodyCache::Sequence { tokens: s.tokens.clone(), steps })
            }
            (EncoderBody::Mlp(mlp), Example::Point(p)) => {
                check_dim("point encoder input", mlp.n_in(), p.coords.len())?;
                let (f, c) = mlp.forward_cached(&p.coords);
                (f, BodyCache::Mlp(c))
            }
            (EncoderBody::Mlp(mlp), Example::Document(d)) => {
                check_dim("document encoder input", mlp.n_in(), d.counts.len())?;
                let total = d.total();
                if total == 0 {
                    return Err(Error::Data("document has zero total count".into()));
                }
                let inv = T::one() / T::lit(total as f64);
                let input: Vec<T> = d.counts.iter().map(|&c| T::lit(c as f64) * inv).collect();
                let (f, c) = mlp.forward_cached(&input);
                (f, BodyCache::Mlp(c))
            }
            (_, other) => {
                return Err(Error::Data(format!("encoder cannot read {} observations", other.modality())));
            }
        };
        let mean = self.mean_head.forward(&features);
        let raw_log_var = self.log_var_head.forward(&features);
        let post = GaussianPosterior::new(mean, raw_log_var.clone());
        Ok((post, EncoderCache { body, features, raw_log_var }))
    }

    /// Accumulates parameter gradients given `dL/dμ` and `dL/dlogvar`.
    pub fn backward(&self, cache: &EncoderCache<T>, dmean: &[T], dlog_var: &[T], grad: &mut EncoderParams<T>) {
        let lo = T::lit(LOG_VAR_MIN);
        let hi = T::lit(LOG_VAR_MAX);
        // clamped coordinates pass no gradient
        let dlv: Vec<T> = dlog_var
            .iter()
            .zip(&cache.raw_log_var)
            .map(|(&g, &raw)| if raw < lo || raw > hi { T::zero() } else { g })
            .collect();
        let mut df = self.mean_head.backward(&cache.features, dmean, Some(&mut grad.mean_head));
        let df2 = self.log_var_head.backward(&cache.features, &dlv, Some(&mut grad.log_var_head));
        for (a, b) in df.iter_mut().zip(df2) {
            *a = *a + b;
        }
        match (&self.body, &cache.body, &mut grad.body) {
            (
                EncoderBody::Sequence { gru, .. },
                BodyCache::Sequence { tokens, steps },
                EncoderBody::Sequence { embedding: g_emb, gru: g_gru },
            ) => {
                let mut dh = df;
                for t in (0..steps.len()).rev() {
                    let (dx, dh_prev) = gru.step_backward(&steps[t], &dh, Some(g_gru));
                    g_emb.accumulate(tokens[t] as usize, &dx);
                    dh = dh_prev;
                }
            }
            (EncoderBody::Mlp(mlp), BodyCache::Mlp(c), EncoderBody::Mlp(g)) => {
                mlp.backward(c, &df, Some(g));
            }
            _ => unreachable!("encoder cache does not match encoder body"),
        }
    }
}

impl<T: Scalar> Params<T> for EncoderParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut v = match &self.body {
            EncoderBody::Sequence { embedding, gru } => {
                let mut v = embedding.arrays();
                v.extend(gru.arrays());
                v
            }
            EncoderBody::Mlp(m) => m.arrays(),
        };
        v.extend(self.mean_head.arrays());
        v.extend(self.log_var_head.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = match &mut self.body {
            EncoderBody::Sequence { embedding, gru } => {
                let mut v = embedding.arrays_mut();
                v.extend(gru.arrays_mut());
                v
            }
            EncoderBody::Mlp(m) => m.arrays_mut(),
        };
        v.extend(self.mean_head.arrays_mut());
        v.extend(self.log_var_head.arrays_mut());
        v
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        let mut v = match &self.body {
            EncoderBody::Sequence { embedding, gru } => {
                let mut v = prefixed_specs(embedding, prefix, "embedding");
                v.extend(prefixed_specs(gru, prefix, "gru"));
                v
            }
            EncoderBody::Mlp(m) => prefixed_specs(m, prefix, "body"),
        };
        v.extend(prefixed_specs(&self.mean_head, prefix, "mean_head"));
        v.extend(prefixed_specs(&self.log_var_head, prefix, "log_var_head"));
        v
    }
}
