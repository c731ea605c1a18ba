//! Top-down models `p(x | z)`: autoregressive token decoder, multinomial
//! bag-of-words decoder, and a Gaussian point decoder for 2-D toys.

use rand::Rng;

use crate::data::{DocumentExample, Example, SequenceExample, BOS, EOS};
use crate::error::{check_dim, Error, Result};
use crate::nn::{prefixed_specs, Activation, ArraySpec, Embedding, Gru, GruStepCache, Linear, Mlp, Params};
use crate::scalar::{argmax, ln_two_pi, log_sum_exp, softmax, Scalar};

/// Recurrent decoder. `z` sets the initial state through `init` and is
/// appended to every step's token embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqDecoder<T> {
    pub embedding: Embedding<T>,
    pub init: Linear<T>,
    pub gru: Gru<T>,
    pub output: Linear<T>,
    pub max_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecoderParams<T> {
    Sequence(SeqDecoder<T>),
    /// `z -> V` logits of a multinomial over words.
    Document(Mlp<T>),
    /// `z -> mean` of an isotropic Gaussian with fixed standard deviation.
    Points { net: Mlp<T>, obs_std: T },
}

impl<T: Scalar> SeqDecoder<T> {
    pub fn init<R: Rng + ?Sized>(
        vocab: usize,
        embed_dim: usize,
        hidden: usize,
        latent_dim: usize,
        max_len: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            embedding: Embedding::init(vocab, embed_dim, 1.0 / (embed_dim as f64).sqrt(), rng),
            init: Linear::init(latent_dim, hidden, 1.0, rng),
            gru: Gru::init(embed_dim + latent_dim, hidden, rng),
            output: Linear::init(hidden, vocab, 1.0, rng),
            max_len,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.output.n_out
    }

    pub fn latent_dim(&self) -> usize {
        self.init.n_in
    }

    fn initial_state(&self, z: &[T]) -> (Vec<T>, Vec<T>) {
        let pre = self.init.forward(z);
        let h = pre.iter().map(|v| v.tanh()).collect();
        (pre, h)
    }

    fn step_input(&self, prev: u32, z: &[T]) -> Vec<T> {
        let mut inp = self.embedding.row(prev as usize).to_vec();
        inp.extend_from_slice(z);
        inp
    }

    /// Teacher-forced `log p(x | z)` including the EOS term. With `grad`
    /// given, accumulates `weight * ∇_params`; always returns
    /// `weight * ∇_z` alongside the value.
    pub fn log_likelihood_backward(
        &self,
        x: &SequenceExample,
        z: &[T],
        weight: T,
        grad: Option<&mut SeqDecoder<T>>,
    ) -> Result<(T, Vec<T>)> {
        check_dim("sequence decoder latent", self.latent_dim(), z.len())?;
        x.validate(self.vocab_size(), self.max_len)?;
        if x.tokens.is_empty() {
            return Err(Error::Data("empty sequence".into()));
        }
        let (h0_pre, mut h) = self.initial_state(z);
        let n_steps = x.tokens.len() + 1;
        let mut caches: Vec<GruStepCache<T>> = Vec::with_capacity(n_steps);
        let mut hiddens: Vec<Vec<T>> = Vec::with_capacity(n_steps);
        let mut dlogits: Vec<Vec<T>> = Vec::with_capacity(n_steps);
        let mut ll = T::zero();
        let mut prev = BOS;
        for t in 0..n_steps {
            let target = if t < x.tokens.len() { x.tokens[t] } else { EOS };
            let (hn, c) = self.gru.step(&self.step_input(prev, z), &h);
            let logits = self.output.forward(&hn);
            let lse = log_sum_exp(&logits);
            ll = ll + logits[target as usize] - lse;
            let mut d: Vec<T> = logits.iter().map(|&l| -(l - lse).exp() * weight).collect();
            d[target as usize] = d[target as usize] + weight;
            dlogits.push(d);
            caches.push(c);
            hiddens.push(hn.clone());
            h = hn;
            prev = target;
        }

        let mut grad = grad;
        let mut dz = vec![T::zero(); z.len()];
        let mut dh = vec![T::zero(); self.gru.hidden()];
        let e = self.embedding.dim;
        for t in (0..n_steps).rev() {
            let dh_out = match grad.as_deref_mut() {
                Some(g) => self.output.backward(&hiddens[t], &dlogits[t], Some(&mut g.output)),
                None => self.output.backward_input(&dlogits[t]),
            };
            for (a, b) in dh.iter_mut().zip(dh_out) {
                *a = *a + b;
            }
            let (dx, dh_prev) = self.gru.step_backward(&caches[t], &dh, grad.as_deref_mut().map(|g| &mut g.gru));
            let prev = if t == 0 { BOS } else { x.tokens[t - 1] };
            if let Some(g) = grad.as_deref_mut() {
                g.embedding.accumulate(prev as usize, &dx[..e]);
            }
            for (a, &b) in dz.iter_mut().zip(&dx[e..]) {
                *a = *a + b;
            }
            dh = dh_prev;
        }
        let d_pre: Vec<T> = dh
            .iter()
            .zip(&h0_pre)
            .map(|(&g, &p)| {
                let th = p.tanh();
                g * (T::one() - th * th)
            })
            .collect();
        let dz0 = match grad {
            Some(g) => self.init.backward(z, &d_pre, Some(&mut g.init)),
            None => self.init.backward_input(&d_pre),
        };
        for (a, b) in dz.iter_mut().zip(dz0) {
            *a = *a + b;
        }
        Ok((ll, dz))
    }

    /// Per-step predictive distributions under teacher forcing.
    pub fn step_distributions(&self, x: &SequenceExample, z: &[T]) -> Vec<Vec<T>> {
        let (_, mut h) = self.initial_state(z);
        let mut prev = BOS;
        let mut out = Vec::new();
        for t in 0..=x.tokens.len() {
            h = self.gru.step(&self.step_input(prev, z), &h).0;
            out.push(softmax(&self.output.forward(&h)));
            if t < x.tokens.len() {
                prev = x.tokens[t];
            }
        }
        out
    }

    /// Ancestral sampling until EOS or `max_len` content tokens.
    /// `temperature = None` decodes greedily.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        z: &[T],
        max_len: usize,
        temperature: Option<T>,
        rng: &mut R,
    ) -> Result<SequenceExample> {
        match temperature {
            None => self.greedy(z, max_len),
            Some(temp) => {
                if !(temp > T::zero()) {
                    return Err(Error::Config("sampling temperature must be positive".into()));
                }
                self.decode_with(z, max_len, |logits| {
                    let scaled: Vec<T> = logits.iter().map(|&l| l / temp).collect();
                    sample_categorical(&softmax(&scaled), rng) as u32
                })
            }
        }
    }

    /// Argmax decoding, lowest id on ties.
    pub fn greedy(&self, z: &[T], max_len: usize) -> Result<SequenceExample> {
        self.decode_with(z, max_len, |logits| argmax(logits) as u32)
    }

    fn decode_with(&self, z: &[T], max_len: usize, mut pick: impl FnMut(&[T]) -> u32) -> Result<SequenceExample> {
        check_dim("sequence decoder latent", self.latent_dim(), z.len())?;
        let (_, mut h) = self.initial_state(z);
        let mut prev = BOS;
        let mut tokens = Vec::new();
        while tokens.len() < max_len {
            h = self.gru.step(&self.step_input(prev, z), &h).0;
            let next = pick(&self.output.forward(&h));
            if next == EOS {
                break;
            }
            tokens.push(next);
            prev = next;
        }
        Ok(SequenceExample::new(tokens))
    }
}

pub(crate) fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver of mass past the end
    probs.iter().rposition(|p| *p > T::zero()).unwrap_or(probs.len() - 1)
}

/// `Σ_w c_w log softmax(logits)_w`, without the multinomial coefficient.
pub fn multinomial_log_likelihood<T: Scalar>(logits: &[T], counts: &[u32]) -> T {
    let lse = log_sum_exp(logits);
    counts
        .iter()
        .zip(logits)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &l)| T::lit(c as f64) * (l - lse))
        .sum()
}

impl<T: Scalar> DecoderParams<T> {
    pub fn document<R: Rng + ?Sized>(latent_dim: usize, hidden: &[usize], vocab: usize, activation: Activation, rng: &mut R) -> Self {
        let mut sizes = vec![latent_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(vocab);
        DecoderParams::Document(Mlp::init(&sizes, activation, Activation::Identity, rng))
    }

    pub fn points<R: Rng + ?Sized>(
        latent_dim: usize,
        hidden: &[usize],
        point_dim: usize,
        activation: Activation,
        obs_std: T,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![latent_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(point_dim);
        DecoderParams::Points { net: Mlp::init(&sizes, activation, Activation::Identity, rng), obs_std }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            DecoderParams::Sequence(s) => s.latent_dim(),
            DecoderParams::Document(m) => m.n_in(),
            DecoderParams::Points { net, .. } => net.n_in(),
        }
    }

    pub fn log_likelihood(&self, x: &Example<T>, z: &[T]) -> Result<T> {
        match (self, x) {
            (DecoderParams::Sequence(d), Example::Sequence(s)) => seq_log_likelihood(d, s, z),
            (DecoderParams::Document(_), Example::Document(doc)) => self.doc_log_likelihood(doc, z),
            (DecoderParams::Points { net, obs_std }, Example::Point(p)) => {
                check_dim("point decoder latent", net.n_in(), z.len())?;
                check_dim("point decoder output", net.n_out(), p.coords.len())?;
                Ok(gaussian_log_likelihood(&net.forward(z), &p.coords, *obs_std))
            }
            (_, other) => Err(Error::Data(format!("decoder cannot score {} observations", other.modality()))),
        }
    }

    /// Value of `log p(x | z)`, accumulating `weight * ∇_params` into `grad`
    /// when given and returning `weight * ∇_z`.
    pub fn log_likelihood_backward(
        &self,
        x: &Example<T>,
        z: &[T],
        weight: T,
        grad: Option<&mut DecoderParams<T>>,
    ) -> Result<(T, Vec<T>)> {
        match (self, x) {
            (DecoderParams::Sequence(d), Example::Sequence(s)) => {
                let g = match grad {
                    Some(DecoderParams::Sequence(g)) => Some(g),
                    Some(_) => unreachable!("gradient buffer has a different decoder kind"),
                    None => None,
                };
                d.log_likelihood_backward(s, z, weight, g)
            }
            (DecoderParams::Document(net), Example::Document(doc)) => {
                check_dim("document decoder latent", net.n_in(), z.len())?;
                doc.validate(net.n_out())?;
                let (logits, cache) = net.forward_cached(z);
                let ll = multinomial_log_likelihood(&logits, &doc.counts);
                let total = T::lit(doc.total() as f64);
                let p = softmax(&logits);
                let dl: Vec<T> = doc
                    .counts
                    .iter()
                    .zip(&p)
                    .map(|(&c, &pw)| weight * (T::lit(c as f64) - total * pw))
                    .collect();
                let g = match grad {
                    Some(DecoderParams::Document(g)) => Some(g),
                    Some(_) => unreachable!("gradient buffer has a different decoder kind"),
                    None => None,
                };
                Ok((ll, net.backward(&cache, &dl, g)))
            }
            (DecoderParams::Points { net, obs_std }, Example::Point(p)) => {
                check_dim("point decoder latent", net.n_in(), z.len())?;
                check_dim("point decoder output", net.n_out(), p.coords.len())?;
                let (mean, cache) = net.forward_cached(z);
                let ll = gaussian_log_likelihood(&mean, &p.coords, *obs_std);
                let inv_var = T::one() / (*obs_std * *obs_std);
                let dm: Vec<T> = p.coords.iter().zip(&mean).map(|(&x, &m)| weight * (x - m) * inv_var).collect();
                let g = match grad {
                    Some(DecoderParams::Points { net: g, .. }) => Some(g),
                    Some(_) => unreachable!("gradient buffer has a different decoder kind"),
                    None => None,
                };
                Ok((ll, net.backward(&cache, &dm, g)))
            }
            (_, other) => Err(Error::Data(format!("decoder cannot score {} observations", other.modality()))),
        }
    }

    pub fn doc_log_likelihood(&self, x: &DocumentExample, z: &[T]) -> Result<T> {
        match self {
            DecoderParams::Document(net) => {
                check_dim("document decoder latent", net.n_in(), z.len())?;
                x.validate(net.n_out())?;
                Ok(multinomial_log_likelihood(&net.forward(z), &x.counts))
            }
            _ => Err(Error::Data("not a document decoder".into())),
        }
    }

    /// Draws an observation from `p(x | z)`. Sequence decoding uses
    /// `temperature` (`None` is greedy); document draws use `doc_length` words.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        z: &[T],
        temperature: Option<T>,
        doc_length: usize,
        rng: &mut R,
    ) -> Result<Example<T>> {
        match self {
            DecoderParams::Sequence(d) => Ok(Example::Sequence(d.sample(z, d.max_len, temperature, rng)?)),
            DecoderParams::Document(net) => {
                check_dim("document decoder latent", net.n_in(), z.len())?;
                let p = softmax(&net.forward(z));
                let mut counts = vec![0u32; p.len()];
                for _ in 0..doc_length {
                    counts[sample_categorical(&p, rng)] += 1;
                }
                Ok(Example::Document(DocumentExample::new(counts)))
            }
            DecoderParams::Points { net, obs_std } => {
                check_dim("point decoder latent", net.n_in(), z.len())?;
                let mean = net.forward(z);
                let noise: Vec<T> = crate::encoder::standard_normal_vec(mean.len(), rng);
                let coords = mean.iter().zip(noise).map(|(&m, e)| m + *obs_std * e).collect();
                Ok(Example::point(coords, None))
            }
        }
    }

    /// Deterministic decoding: greedy tokens, or the Gaussian mean.
    pub fn decode_mean(&self, z: &[T]) -> Result<Example<T>> {
        match self {
            DecoderParams::Sequence(d) => Ok(Example::Sequence(d.greedy(z, d.max_len)?)),
            DecoderParams::Points { net, .. } => {
                check_dim("point decoder latent", net.n_in(), z.len())?;
                Ok(Example::point(net.forward(z), None))
            }
            DecoderParams::Document(net) => {
                check_dim("document decoder latent", net.n_in(), z.len())?;
                let p = softmax(&net.forward(z));
                let counts = p.iter().map(|v| (v.as_f64() * 100.0).round() as u32).collect();
                Ok(Example::Document(DocumentExample::new(counts)))
            }
        }
    }
}

fn gaussian_log_likelihood<T: Scalar>(mean: &[T], x: &[T], std: T) -> T {
    let half = T::lit(0.5);
    let inv_var = T::one() / (std * std);
    let norm = std.ln() + half * ln_two_pi::<T>();
    mean.iter()
        .zip(x)
        .map(|(&m, &xi)| {
            let d = xi - m;
            -half * d * d * inv_var - norm
        })
        .sum()
}

/// Teacher-forced sequence log-likelihood.
pub fn seq_log_likelihood<T: Scalar>(params: &SeqDecoder<T>, x: &SequenceExample, z: &[T]) -> Result<T> {
    Ok(params.log_likelihood_backward(x, z, T::zero(), None)?.0)
}

impl<T: Scalar> Params<T> for SeqDecoder<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut v = self.embedding.arrays();
        v.extend(self.init.arrays());
        v.extend(self.gru.arrays());
        v.extend(self.output.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.embedding.arrays_mut();
        v.extend(self.init.arrays_mut());
        v.extend(self.gru.arrays_mut());
        v.extend(self.output.arrays_mut());
        v
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        let mut v = prefixed_specs(&self.embedding, prefix, "embedding");
        v.extend(prefixed_specs(&self.init, prefix, "init"));
        v.extend(prefixed_specs(&self.gru, prefix, "gru"));
        v.extend(prefixed_specs(&self.output, prefix, "output"));
        v
    }
}

impl<T: Scalar> Params<T> for DecoderParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        match self {
            DecoderParams::Sequence(s) => s.arrays(),
            DecoderParams::Document(m) => m.arrays(),
            DecoderParams::Points { net, .. } => net.arrays(),
        }
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            DecoderParams::Sequence(s) => s.arrays_mut(),
            DecoderParams::Document(m) => m.arrays_mut(),
            DecoderParams::Points { net, .. } => net.arrays_mut(),
        }
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        match self {
            DecoderParams::Sequence(s) => s.specs(prefix),
            DecoderParams::Document(m) => prefixed_specs(m, prefix, "net"),
            DecoderParams::Points { net, .. } => prefixed_specs(net, prefix, "net"),
        }
    }
}
