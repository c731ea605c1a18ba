//! Single-file JSON checkpoints. Arrays are stored as `f64` with names and
//! shapes, so `f32` and `f64` values both round-trip exactly.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::langevin::ChainPool;
use crate::model::{Model, ModelConfig};
use crate::nn::{OptimizerState, Params};
use crate::scalar::Scalar;
use crate::trainer::{EpochCursor, ModelState, TrainConfig};

pub const FORMAT_TAG: &str = "svebm-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Side information stored with a checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointExtras {
    /// Resolved run configuration as ordered key/value pairs.
    pub config_echo: Vec<(String, String)>,
    pub vocab: Option<Vocabulary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ChainRecord {
    states: Vec<Vec<f64>>,
    ages: Vec<u64>,
    seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerRecord {
    prior: OptimizerState,
    psi: OptimizerState,
    supervised: OptimizerState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    scalar: String,
    step: u64,
    model_config: ModelConfig,
    train_config: TrainConfig,
    config_echo: Vec<(String, String)>,
    vocab: Option<Vec<String>>,
    arrays: Vec<NamedArray>,
    chains: ChainRecord,
    optimizers: OptimizerRecord,
    rng: ChaCha8Rng,
    unlabeled_cursor: EpochCursor,
    labeled_cursor: EpochCursor,
}

/// A loaded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub state: ModelState<T>,
    pub train_config: TrainConfig,
    pub extras: CheckpointExtras,
}

fn scalar_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn model_arrays<T: Scalar>(model: &Model<T>) -> Vec<NamedArray> {
    model
        .array_specs()
        .into_iter()
        .zip(model.arrays())
        .map(|(spec, a)| NamedArray {
            name: spec.name,
            shape: spec.shape,
            data: a.iter().map(|v| v.as_f64()).collect(),
        })
        .collect()
}

/// Builds a model from `config` and overwrites every parameter with the
/// matching named array.
pub fn model_from_arrays<T: Scalar>(config: ModelConfig, arrays: &[NamedArray]) -> Result<Model<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::<T>::init(config, &mut rng)?;
    let specs = model.array_specs();
    if specs.len() != arrays.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} arrays, found {}",
            specs.len(),
            arrays.len()
        )));
    }
    for ((spec, dst), src) in specs.iter().zip(model.arrays_mut()).zip(arrays) {
        if spec.name != src.name || spec.shape != src.shape || dst.len() != src.data.len() {
            return Err(Error::Checkpoint(format!(
                "array '{}' {:?} does not match expected '{}' {:?}",
                src.name, src.shape, spec.name, spec.shape
            )));
        }
        for (d, &s) in dst.iter_mut().zip(&src.data) {
            *d = T::lit(s);
        }
    }
    Ok(model)
}

fn to_f64(v: &[Vec<impl Scalar>]) -> Vec<Vec<f64>> {
    v.iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

pub fn to_json<T: Scalar>(state: &ModelState<T>, cfg: &TrainConfig, extras: &CheckpointExtras) -> Result<String> {
    let file = CheckpointFile {
        format: FORMAT_TAG.to_string(),
        scalar: scalar_name::<T>().to_string(),
        step: state.step,
        model_config: state.model.config.clone(),
        train_config: cfg.clone(),
        config_echo: extras.config_echo.clone(),
        vocab: extras.vocab.as_ref().map(|v| v.tokens().to_vec()),
        arrays: model_arrays(&state.model),
        chains: ChainRecord {
            states: to_f64(&state.chains.states),
            ages: state.chains.ages.clone(),
            seed: state.chains.seed,
        },
        optimizers: OptimizerRecord {
            prior: state.opt_prior.state(),
            psi: state.opt_psi.state(),
            supervised: state.opt_supervised.state(),
        },
        rng: state.rng.clone(),
        unlabeled_cursor: state.unlabeled_cursor.clone(),
        labeled_cursor: state.labeled_cursor.clone(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn from_json<T: Scalar>(text: &str) -> Result<Checkpoint<T>> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if file.format != FORMAT_TAG {
        return Err(Error::Checkpoint(format!("unsupported checkpoint format '{}'", file.format)));
    }
    let model = model_from_arrays::<T>(file.model_config, &file.arrays)?;
    if file.chains.states.iter().any(|s| s.len() != model.latent_dim()) {
        return Err(Error::Checkpoint("chain state dimension does not match the model".into()));
    }
    let chains = ChainPool {
        states: file.chains.states.iter().map(|s| s.iter().map(|&x| T::lit(x)).collect()).collect(),
        ages: file.chains.ages,
        seed: file.chains.seed,
    };
    let mut state = ModelState::from_parts(model, chains, &file.train_config, file.rng);
    state.opt_prior.restore(&file.optimizers.prior);
    state.opt_psi.restore(&file.optimizers.psi);
    state.opt_supervised.restore(&file.optimizers.supervised);
    state.step = file.step;
    state.unlabeled_cursor = file.unlabeled_cursor;
    state.labeled_cursor = file.labeled_cursor;
    let extras = CheckpointExtras {
        config_echo: file.config_echo,
        vocab: file.vocab.map(Vocabulary::from_tokens),
    };
    Ok(Checkpoint { state, train_config: file.train_config, extras })
}

pub fn save<T: Scalar>(path: &Path, state: &ModelState<T>, cfg: &TrainConfig, extras: &CheckpointExtras) -> Result<()> {
    let text = to_json(state, cfg, extras)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Example, Modality};
    use crate::langevin::LangevinConfig;
    use crate::trainer::{train_step, Mode};

    fn trained_state<T: Scalar>() -> (ModelState<T>, TrainConfig) {
        let mc = ModelConfig {
            modality: Modality::Points,
            n_classes: 3,
            energy_hidden: vec![6],
            mlp_hidden: vec![6],
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            mode: Mode::IbEbm,
            lambda: 2.0,
            batch_size: 2,
            n_chains: 5,
            langevin: LangevinConfig { step_size: 0.1, n_steps: 2, restart_every: None },
            ..TrainConfig::default()
        };
        let mut s = ModelState::<T>::new(mc, &tc).unwrap();
        let xs = [Example::point(vec![T::lit(0.3), T::lit(-1.0)], None), Example::point(vec![T::lit(1.2), T::lit(0.4)], None)];
        let b: Vec<&Example<T>> = xs.iter().collect();
        train_step(&mut s, &b, &[], &tc).unwrap();
        (s, tc)
    }

    fn same<T: Scalar>(a: &ModelState<T>, b: &ModelState<T>) {
        assert_eq!(a.model, b.model);
        assert_eq!(a.chains, b.chains);
        assert_eq!(a.step, b.step);
        assert_eq!(a.rng, b.rng);
        assert_eq!(a.opt_prior.state(), b.opt_prior.state());
        assert_eq!(a.opt_psi.state(), b.opt_psi.state());
    }

    #[test]
    fn round_trip_f64_and_f32() {
        let (s, tc) = trained_state::<f64>();
        let extras = CheckpointExtras { config_echo: vec![("train.steps".into(), "3".into())], vocab: None };
        let back = from_json::<f64>(&to_json(&s, &tc, &extras).unwrap()).unwrap();
        same(&s, &back.state);
        assert_eq!(back.extras, extras);
        assert_eq!(back.train_config, tc);

        let (s, tc) = trained_state::<f32>();
        let back = from_json::<f32>(&to_json(&s, &tc, &extras).unwrap()).unwrap();
        same(&s, &back.state);
    }

    #[test]
    fn rejects_foreign_format() {
        let (s, tc) = trained_state::<f64>();
        let text = to_json(&s, &tc, &CheckpointExtras::default()).unwrap().replace(FORMAT_TAG, "other/9");
        assert!(matches!(from_json::<f64>(&text), Err(Error::Checkpoint(_))));
        assert!(matches!(from_json::<f64>("{not json"), Err(Error::Checkpoint(_))));
    }
}
