//! The joint training loop: persistent-chain prior sampling, amortized
//! posterior sampling, prior update, encoder/decoder update and an optional
//! supervised update per iteration.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::encoder::standard_normal_vec;
use crate::error::{Error, Result};
use crate::langevin::{ChainPool, LangevinConfig};
use crate::model::{Model, ModelConfig};
use crate::nn::{Optimizer, OptimizerKind, Params};
use crate::objectives::{supervised_objective, unsupervised_objective, LossBreakdown, MiWeight};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Symbol-vector coupling without the mutual-information term.
    Svebm,
    /// Information-bottleneck variant.
    IbEbm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Svebm => "svebm",
            Mode::IbEbm => "ib-ebm",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "svebm" => Ok(Mode::Svebm),
            "ib-ebm" | "ibebm" => Ok(Mode::IbEbm),
            other => Err(format!("unknown mode '{other}' (expected svebm or ib-ebm)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Total iterations `T`.
    pub steps: u64,
    /// Energy-head rate (unsupervised update).
    pub lr_prior: f64,
    /// Encoder and decoder rate.
    pub lr_psi: f64,
    /// Energy-head and encoder rate for the supervised update.
    pub lr_supervised: f64,
    pub batch_size: usize,
    pub labeled_batch_size: usize,
    pub langevin: LangevinConfig,
    pub n_chains: usize,
    /// Mutual-information weight; used only in [`Mode::IbEbm`].
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm clip per parameter group; `None` disables it.
    pub clip_norm: Option<f64>,
    /// Linear KL warm-up length in steps; 0 disables warm-up.
    pub kl_warmup_steps: u64,
    /// Posterior draws per observation per step.
    pub posterior_samples: usize,
    /// Whether labeled observations also feed the unsupervised stream.
    pub labeled_in_elbo: bool,
    pub log_every: u64,
    /// Intermediate checkpoint cadence; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::IbEbm,
            steps: 10_000,
            lr_prior: 1e-4,
            lr_psi: 1e-3,
            lr_supervised: 1e-3,
            batch_size: 64,
            labeled_batch_size: 0,
            langevin: LangevinConfig::default(),
            n_chains: 1000,
            lambda: 50.0,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            clip_norm: Some(5.0),
            kl_warmup_steps: 0,
            posterior_samples: 1,
            labeled_in_elbo: true,
            log_every: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        for (name, v) in [("lr_prior", self.lr_prior), ("lr_psi", self.lr_psi), ("lr_supervised", self.lr_supervised)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("train.{name} must be a non-negative number")));
            }
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be at least 1");
        }
        if self.posterior_samples == 0 {
            return bad("train.posterior_samples must be at least 1");
        }
        if self.n_chains < self.batch_size {
            return bad("train.n_chains must be at least train.batch_size");
        }
        if !(self.lambda >= 0.0) {
            return bad("train.lambda must be non-negative");
        }
        if self.mode == Mode::IbEbm && !(self.lambda > 0.0) {
            return bad("mode ib-ebm requires train.lambda > 0");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("train.clip_norm must be positive when set");
            }
        }
        if self.log_every == 0 {
            return bad("train.log_every must be at least 1");
        }
        self.langevin.validate()
    }

    fn mi_weight<T: Scalar>(&self) -> MiWeight<T> {
        match self.mode {
            Mode::Svebm => MiWeight::Off,
            Mode::IbEbm => MiWeight::On(T::lit(self.lambda)),
        }
    }

    fn kl_weight<T: Scalar>(&self, step: u64) -> T {
        if self.kl_warmup_steps == 0 {
            T::one()
        } else {
            T::lit(((step + 1) as f64 / self.kl_warmup_steps as f64).min(1.0))
        }
    }
}

/// Shuffled pass over `0..len`, reshuffled at every epoch boundary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochCursor {
    pub order: Vec<usize>,
    pub pos: usize,
    pub epoch: u64,
}

impl EpochCursor {
    pub fn next_batch(&mut self, n: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        if len == 0 {
            return out;
        }
        while out.len() < n {
            if self.order.len() != len || self.pos >= self.order.len() {
                self.order = (0..len).collect();
                self.order.shuffle(rng);
                self.pos = 0;
                self.epoch += 1;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct ModelState<T> {
    pub model: Model<T>,
    pub chains: ChainPool<T>,
    pub opt_prior: Optimizer<T>,
    pub opt_psi: Optimizer<T>,
    pub opt_supervised: Optimizer<T>,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub unlabeled_cursor: EpochCursor,
    pub labeled_cursor: EpochCursor,
}

impl<T: Scalar> ModelState<T> {
    pub fn new(model_cfg: ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = Model::init(model_cfg, &mut rng)?;
        let chains = ChainPool::new(cfg.n_chains, model.latent_dim(), cfg.seed.wrapping_add(1))?;
        Ok(Self::from_parts(model, chains, cfg, rng))
    }

    pub fn from_parts(model: Model<T>, chains: ChainPool<T>, cfg: &TrainConfig, rng: ChaCha8Rng) -> Self {
        let clip = cfg.clip_norm.map(T::lit);
        Self {
            model,
            chains,
            opt_prior: Optimizer::new(cfg.optimizer, T::lit(cfg.lr_prior), clip),
            opt_psi: Optimizer::new(cfg.optimizer, T::lit(cfg.lr_psi), clip),
            opt_supervised: Optimizer::new(cfg.optimizer, T::lit(cfg.lr_supervised), clip),
            step: 0,
            rng,
            unlabeled_cursor: EpochCursor::default(),
            labeled_cursor: EpochCursor::default(),
        }
    }
}

fn non_finite(context: &str, breakdown: LossBreakdown) -> Error {
    Error::NonFinite { context: context.to_string(), breakdown }
}

/// One iteration on the given batches. Returns the objective parts measured
/// before the parameter updates.
pub fn train_step<T: Scalar>(
    state: &mut ModelState<T>,
    unlabeled: &[&Example<T>],
    labeled: &[(&Example<T>, usize)],
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    if unlabeled.is_empty() {
        return Err(Error::Data("unlabeled batch is empty".into()));
    }
    let d = state.model.latent_dim();

    // prior sampling from persistent chains
    let z_neg = state
        .chains
        .sample_prior(&state.model.prior, &cfg.langevin, unlabeled.len(), &mut state.rng)?;

    // posterior sampling through the reparameterization
    let s = cfg.posterior_samples;
    let mut batch = Vec::with_capacity(unlabeled.len() * s);
    let mut noises = Vec::with_capacity(unlabeled.len() * s);
    for &x in unlabeled {
        for _ in 0..s {
            batch.push(x);
            noises.push(standard_normal_vec(d, &mut state.rng));
        }
    }

    let kl_weight = cfg.kl_weight::<T>(state.step);
    let (mut breakdown, grads) =
        unsupervised_objective(&state.model, &batch, &noises, &z_neg, cfg.mi_weight(), kl_weight)?;
    if !breakdown.is_finite() || !grads.is_finite() {
        return Err(non_finite("unsupervised objective", breakdown));
    }

    let model = &mut state.model;
    state.opt_prior.step(model.prior.arrays_mut(), grads.prior.arrays());
    let mut psi = model.encoder.arrays_mut();
    psi.extend(model.decoder.arrays_mut());
    let mut psi_grads = grads.encoder.arrays();
    psi_grads.extend(grads.decoder.arrays());
    state.opt_psi.step(psi, psi_grads);

    if !labeled.is_empty() {
        let (loss, g_prior, g_enc) = supervised_objective(model, labeled)?;
        breakdown.supervised = loss.as_f64();
        breakdown.total += breakdown.supervised;
        if !loss.is_finite() || !g_prior.is_finite() || !g_enc.is_finite() {
            return Err(non_finite("supervised objective", breakdown));
        }
        let mut gamma = model.prior.arrays_mut();
        gamma.extend(model.encoder.arrays_mut());
        let mut gamma_grads = g_prior.arrays();
        gamma_grads.extend(g_enc.arrays());
        state.opt_supervised.step(gamma, gamma_grads);
    }

    state.step += 1;
    Ok(breakdown)
}

/// Unlabeled and labeled training data. Labeled pairs carry their label
/// separately from the observation.
#[derive(Clone, Debug, Default)]
pub struct TrainData<T> {
    pub unlabeled: Vec<Example<T>>,
    pub labeled: Vec<(Example<T>, usize)>,
}

impl<T: Scalar> TrainData<T> {
    pub fn unsupervised(examples: Vec<Example<T>>) -> Self {
        Self { unlabeled: examples, labeled: Vec::new() }
    }

    /// Splits `examples` so the first `n_labeled` that carry a label become
    /// labeled pairs and everything else is unlabeled.
    pub fn split_labeled(examples: Vec<Example<T>>, n_labeled: usize) -> Self {
        let mut data = Self::default();
        for x in examples {
            match x.label() {
                Some(y) if data.labeled.len() < n_labeled => data.labeled.push((x.with_label(None), y)),
                _ => data.unlabeled.push(x),
            }
        }
        data
    }
}

/// Where `fit` writes its artifacts.
#[derive(Clone, Debug, Default)]
pub struct FitOutput {
    pub dir: Option<PathBuf>,
}

pub const LOG_FILE: &str = "train_log.tsv";
pub const FINAL_CHECKPOINT: &str = "checkpoint.json";

/// Runs `train_step` until `state.step == cfg.steps`. Resuming is a matter
/// of passing a restored state. Returns the per-step log rows produced by
/// this call.
pub fn fit<T: Scalar>(
    state: &mut ModelState<T>,
    data: &TrainData<T>,
    cfg: &TrainConfig,
    out: &FitOutput,
    extra: &crate::checkpoint::CheckpointExtras,
) -> Result<Vec<(u64, LossBreakdown)>> {
    cfg.validate()?;
    let stream: Vec<&Example<T>> = if cfg.labeled_in_elbo {
        data.unlabeled.iter().chain(data.labeled.iter().map(|(x, _)| x)).collect()
    } else {
        data.unlabeled.iter().collect()
    };
    if stream.is_empty() {
        return Err(Error::Data("no unlabeled training data".into()));
    }
    let mut log = match &out.dir {
        Some(dir) => Some(open_log(dir, state.step)?),
        None => None,
    };
    let mut rows = Vec::new();
    while state.step < cfg.steps {
        let idx = state.unlabeled_cursor.next_batch(cfg.batch_size, stream.len(), &mut state.rng);
        let batch: Vec<&Example<T>> = idx.iter().map(|&i| stream[i]).collect();
        let labeled: Vec<(&Example<T>, usize)> = if cfg.labeled_batch_size > 0 && !data.labeled.is_empty() {
            state
                .labeled_cursor
                .next_batch(cfg.labeled_batch_size, data.labeled.len(), &mut state.rng)
                .into_iter()
                .map(|i| (&data.labeled[i].0, data.labeled[i].1))
                .collect()
        } else {
            Vec::new()
        };
        let step = state.step;
        let b = train_step(state, &batch, &labeled, cfg)?;
        rows.push((step, b));
        if let Some((path, w)) = log.as_mut() {
            if step % cfg.log_every == 0 {
                writeln!(w, "{}", b.log_row(step)).map_err(|e| Error::io(path.clone(), e))?;
            }
        }
        if let Some(dir) = &out.dir {
            if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.steps {
                if let Some((path, w)) = log.as_mut() {
                    w.flush().map_err(|e| Error::io(path.clone(), e))?;
                }
                let path = dir.join(format!("checkpoint_{:08}.json", state.step));
                crate::checkpoint::save(&path, state, cfg, extra)?;
            }
        }
    }
    if let Some((path, mut w)) = log {
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if let Some(dir) = &out.dir {
        crate::checkpoint::save(&dir.join(FINAL_CHECKPOINT), state, cfg, extra)?;
    }
    Ok(rows)
}

fn open_log(dir: &Path, step: u64) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(LOG_FILE);
    let file = if step == 0 || !path.exists() {
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", LossBreakdown::HEADER).map_err(|e| Error::io(&path, e))?;
        f
    } else {
        OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?
    };
    Ok((path, BufWriter::new(file)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Modality;
    use crate::nn::Activation;

    fn small_cfg() -> (ModelConfig, TrainConfig) {
        let m = ModelConfig {
            modality: Modality::Points,
            latent_dim: 2,
            n_classes: 3,
            energy_hidden: vec![8],
            mlp_hidden: vec![8],
            mlp_activation: Activation::Tanh,
            ..ModelConfig::default()
        };
        let t = TrainConfig {
            mode: Mode::Svebm,
            lambda: 0.0,
            batch_size: 4,
            n_chains: 16,
            langevin: LangevinConfig { step_size: 0.1, n_steps: 3, restart_every: None },
            ..TrainConfig::default()
        };
        (m, t)
    }

    fn points() -> Vec<Example<f64>> {
        (0..4).map(|i| Example::point(vec![i as f64 * 0.5, 1.0 - i as f64], None)).collect()
    }

    #[test]
    fn unsupervised_step_moves_params_and_ages_chains() {
        let (m, t) = small_cfg();
        let mut s = ModelState::<f64>::new(m, &t).unwrap();
        let before = s.model.clone();
        let xs = points();
        let batch: Vec<&Example<f64>> = xs.iter().collect();
        train_step(&mut s, &batch, &[], &t).unwrap();
        assert_ne!(s.model.prior, before.prior);
        assert_ne!(s.model.encoder, before.encoder);
        assert_ne!(s.model.decoder, before.decoder);
        assert_eq!(s.chains.ages.iter().filter(|&&a| a == 3).count(), 4);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn frozen_rates_leave_params() {
        let (m, mut t) = small_cfg();
        t.lr_prior = 0.0;
        t.lr_psi = 0.0;
        t.lr_supervised = 0.0;
        let mut s = ModelState::<f64>::new(m, &t).unwrap();
        let before = s.model.clone();
        let xs = points();
        let batch: Vec<&Example<f64>> = xs.iter().collect();
        let labeled = vec![(&xs[0], 1usize)];
        train_step(&mut s, &batch, &labeled, &t).unwrap();
        assert_eq!(s.model, before);
        assert_eq!(s.chains.ages.iter().sum::<u64>(), 12);
    }

    #[test]
    fn ib_mode_needs_positive_lambda() {
        let (_, mut t) = small_cfg();
        t.mode = Mode::IbEbm;
        t.lambda = 0.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn cursor_visits_everything_each_epoch() {
        let mut c = EpochCursor::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = c.next_batch(7, 7, &mut rng);
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        assert_eq!(c.epoch, 1);
        c.next_batch(3, 7, &mut rng);
        assert_eq!(c.epoch, 2);
    }
}
