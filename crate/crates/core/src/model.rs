//! The complete model: energy prior, inference network and decoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, RESERVED_TOKENS};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::generator::{DecoderParams, SeqDecoder};
use crate::nn::{Activation, ArraySpec, Params};
use crate::prior::EnergyParams;
use crate::scalar::Scalar;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modality: Modality,
    pub latent_dim: usize,
    pub n_classes: usize,
    pub energy_hidden: Vec<usize>,
    pub energy_activation: Activation,
    /// Vocabulary size for sequence and document data.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub rnn_hidden: usize,
    pub max_len: usize,
    /// Hidden widths of the MLP encoder and decoder (points and documents).
    pub mlp_hidden: Vec<usize>,
    pub mlp_activation: Activation,
    pub point_dim: usize,
    /// Observation standard deviation of the point decoder.
    pub obs_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            modality: Modality::Points,
            latent_dim: 2,
            n_classes: 8,
            energy_hidden: vec![200, 200],
            energy_activation: Activation::Silu,
            vocab_size: 0,
            embed_dim: 128,
            rnn_hidden: 512,
            max_len: 40,
            mlp_hidden: vec![128, 128],
            mlp_activation: Activation::Silu,
            point_dim: 2,
            obs_std: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim < 1 {
            return bad("model.latent_dim must be at least 1".into());
        }
        if self.n_classes < 2 {
            return bad("model.n_classes must be at least 2".into());
        }
        match self.modality {
            Modality::Sequence | Modality::Document if self.vocab_size <= RESERVED_TOKENS.len() => {
                bad(format!("model.vocab_size must exceed {} reserved tokens", RESERVED_TOKENS.len()))
            }
            Modality::Sequence if self.embed_dim == 0 || self.rnn_hidden == 0 || self.max_len == 0 => {
                bad("model.embed_dim, model.rnn_hidden and model.max_len must be positive".into())
            }
            Modality::Points if self.point_dim == 0 => bad("model.point_dim must be positive".into()),
            Modality::Points if !(self.obs_std > 0.0) => bad("model.obs_std must be positive".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub prior: EnergyParams<T>,
    pub encoder: EncoderParams<T>,
    pub decoder: DecoderParams<T>,
}

impl<T: Scalar> Model<T> {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.latent_dim;
        let prior = EnergyParams::init(d, config.n_classes, &config.energy_hidden, config.energy_activation, rng);
        let (encoder, decoder) = match config.modality {
            Modality::Sequence => (
                EncoderParams::sequence(config.vocab_size, config.embed_dim, config.rnn_hidden, d, rng),
                DecoderParams::Sequence(SeqDecoder::init(
                    config.vocab_size,
                    config.embed_dim,
                    config.rnn_hidden,
                    d,
                    config.max_len,
                    rng,
                )),
            ),
            Modality::Document => {
                let mut sizes = vec![config.vocab_size];
                sizes.extend_from_slice(&config.mlp_hidden);
                (
                    EncoderParams::mlp(&sizes, config.mlp_activation, d, rng),
                    DecoderParams::document(d, &config.mlp_hidden, config.vocab_size, config.mlp_activation, rng),
                )
            }
            Modality::Points => {
                let mut sizes = vec![config.point_dim];
                sizes.extend_from_slice(&config.mlp_hidden);
                (
                    EncoderParams::mlp(&sizes, config.mlp_activation, d, rng),
                    DecoderParams::points(
                        d,
                        &config.mlp_hidden,
                        config.point_dim,
                        config.mlp_activation,
                        T::lit(config.obs_std),
                        rng,
                    ),
                )
            }
        };
        Ok(Self { config, prior, encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    /// Names and shapes of every array, in [`Params`] order.
    pub fn array_specs(&self) -> Vec<ArraySpec> {
        let mut v = self.prior.specs("prior");
        v.extend(self.encoder.specs("encoder"));
        v.extend(self.decoder.specs("decoder"));
        v
    }
}

impl<T: Scalar> Params<T> for Model<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut v = self.prior.arrays();
        v.extend(self.encoder.arrays());
        v.extend(self.decoder.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.prior.arrays_mut();
        v.extend(self.encoder.arrays_mut());
        v.extend(self.decoder.arrays_mut());
        v
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        let mut v = self.prior.specs(&crate::nn::prefixed(prefix, "prior"));
        v.extend(self.encoder.specs(&crate::nn::prefixed(prefix, "encoder")));
        v.extend(self.decoder.specs(&crate::nn::prefixed(prefix, "decoder")));
        v
    }
}
