//! Run configuration: flat `key = value` lines with dotted section
//! prefixes (`train.steps = 2000`). `#` starts a comment line.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::Modality;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::trainer::{Mode, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    File,
    EightGaussians,
    Pinwheel,
    ToyText,
}

impl Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataSource::File => "file",
            DataSource::EightGaussians => "eight_gaussians",
            DataSource::Pinwheel => "pinwheel",
            DataSource::ToyText => "toy_text",
        })
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "file" => Ok(DataSource::File),
            "eight_gaussians" => Ok(DataSource::EightGaussians),
            "pinwheel" => Ok(DataSource::Pinwheel),
            "toy_text" => Ok(DataSource::ToyText),
            other => Err(format!("unknown data source '{other}' (expected file, eight_gaussians, pinwheel or toy_text)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Training observations (file source).
    pub train: Option<PathBuf>,
    /// Extra labeled observations (file source).
    pub labeled: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Generated dataset size (preset sources).
    pub n: usize,
    /// Fraction of generated examples whose label is used for training.
    pub label_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { source: DataSource::File, train: None, labeled: None, vocab: None, n: 5000, label_fraction: 0.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub metrics: Vec<String>,
    pub is_samples: usize,
    pub log_z_samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: vec!["elbo".into(), "homogeneity".into(), "matched_accuracy".into()],
            is_samples: crate::metrics::DEFAULT_IS_SAMPLES,
            log_z_samples: crate::metrics::DEFAULT_LOG_Z_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: {key}: {e}"))),
        }
    }

    fn set<V: FromStr>(&mut self, key: &str, dst: &mut V) -> Result<()>
    where
        V::Err: Display,
    {
        if let Some(v) = self.take(key)? {
            *dst = v;
        }
        Ok(())
    }

    /// `none` clears the option.
    fn set_opt<V: FromStr>(&mut self, key: &str, dst: &mut Option<V>) -> Result<()>
    where
        V::Err: Display,
    {
        if let Some(raw) = self.take::<String>(key)? {
            *dst = if raw == "none" { None } else { Some(Wrap::<V>::parse(key, &raw)?) };
        }
        Ok(())
    }

    fn set_list(&mut self, key: &str, dst: &mut Vec<usize>) -> Result<()> {
        if let Some((line, raw)) = self.map.remove(key) {
            *dst = raw
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("line {line}: {key}: {e}")))?;
        }
        Ok(())
    }
}

struct Wrap<V>(std::marker::PhantomData<V>);

impl<V: FromStr> Wrap<V>
where
    V::Err: Display,
{
    fn parse(key: &str, raw: &str) -> Result<V> {
        raw.parse().map_err(|e| Error::Config(format!("{key}: {e}")))
    }
}

fn lines_to_entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected 'key = value', found '{l}'")))?;
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(Error::Config(format!("line {line}: empty key")));
        }
        if let Some((first, _)) = map.insert(k.clone(), (line, v.trim().to_string())) {
            return Err(Error::Config(format!("line {line}: duplicate key '{k}' (first set on line {first})")));
        }
    }
    Ok(Entries { map })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = lines_to_entries(text)?;
        let mut c = RunConfig::default();

        c.model.modality = e
            .take("data.modality")?
            .ok_or_else(|| Error::Config("missing required field data.modality".into()))?;
        e.set("run.out_dir", &mut c.out_dir)?;
        e.set("data.source", &mut c.data.source)?;
        c.data.train = e.take("data.train")?;
        c.data.labeled = e.take("data.labeled")?;
        c.data.vocab = e.take("data.vocab")?;
        e.set("data.n", &mut c.data.n)?;
        e.set("data.label_fraction", &mut c.data.label_fraction)?;
        e.set("data.seed", &mut c.data.seed)?;

        let m = &mut c.model;
        e.set("model.latent_dim", &mut m.latent_dim)?;
        e.set("model.n_classes", &mut m.n_classes)?;
        e.set_list("model.energy_hidden", &mut m.energy_hidden)?;
        e.set("model.energy_activation", &mut m.energy_activation)?;
        e.set("model.vocab_size", &mut m.vocab_size)?;
        e.set("model.embed_dim", &mut m.embed_dim)?;
        e.set("model.rnn_hidden", &mut m.rnn_hidden)?;
        e.set("model.max_len", &mut m.max_len)?;
        e.set_list("model.mlp_hidden", &mut m.mlp_hidden)?;
        e.set("model.mlp_activation", &mut m.mlp_activation)?;
        e.set("model.point_dim", &mut m.point_dim)?;
        e.set("model.obs_std", &mut m.obs_std)?;

        let t = &mut c.train;
        e.set("run.mode", &mut t.mode)?;
        e.set("train.steps", &mut t.steps)?;
        e.set("train.lr_prior", &mut t.lr_prior)?;
        e.set("train.lr_psi", &mut t.lr_psi)?;
        e.set("train.lr_supervised", &mut t.lr_supervised)?;
        e.set("train.batch_size", &mut t.batch_size)?;
        e.set("train.labeled_batch_size", &mut t.labeled_batch_size)?;
        t.n_chains = e.take("train.n_chains")?.unwrap_or(t.batch_size.max(1000));
        e.set("train.lambda", &mut t.lambda)?;
        e.set("train.seed", &mut t.seed)?;
        e.set("train.optimizer", &mut t.optimizer)?;
        e.set_opt("train.clip_norm", &mut t.clip_norm)?;
        e.set("train.kl_warmup_steps", &mut t.kl_warmup_steps)?;
        e.set("train.posterior_samples", &mut t.posterior_samples)?;
        e.set("train.labeled_in_elbo", &mut t.labeled_in_elbo)?;
        e.set("train.log_every", &mut t.log_every)?;
        e.set("train.checkpoint_every", &mut t.checkpoint_every)?;
        e.set("langevin.step_size", &mut t.langevin.step_size)?;
        e.set("langevin.n_steps", &mut t.langevin.n_steps)?;
        e.set_opt("langevin.restart_every", &mut t.langevin.restart_every)?;

        if let Some((line, raw)) = e.map.remove("eval.metrics") {
            c.eval.metrics = raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            crate::cli::check_metric_names(&c.eval.metrics)
                .map_err(|err| Error::Config(format!("line {line}: {err}")))?;
        }
        e.set("eval.is_samples", &mut c.eval.is_samples)?;
        e.set("eval.log_z_samples", &mut c.eval.log_z_samples)?;
        e.set("eval.seed", &mut c.eval.seed)?;

        if let Some((k, (line, _))) = e.map.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key '{k}'")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Cross-field checks that do not depend on data.
    pub fn validate(&self) -> Result<()> {
        if self.data.source == DataSource::File && self.data.train.is_none() {
            return Err(Error::Config("missing required field data.train".into()));
        }
        if !(0.0..=1.0).contains(&self.data.label_fraction) {
            return Err(Error::Config("data.label_fraction must lie in [0, 1]".into()));
        }
        let preset_modality = match self.data.source {
            DataSource::EightGaussians | DataSource::Pinwheel => Some(vec![Modality::Points]),
            DataSource::ToyText => Some(vec![Modality::Sequence, Modality::Document]),
            DataSource::File => None,
        };
        if let Some(ok) = preset_modality {
            if !ok.contains(&self.model.modality) {
                return Err(Error::Config(format!(
                    "data.source {} does not produce {} data",
                    self.data.source, self.model.modality
                )));
            }
        }
        if self.train.mode == Mode::Svebm && self.train.lambda != 0.0 {
            return Err(Error::Config("mode svebm ignores the mutual-information term; set train.lambda = 0".into()));
        }
        self.train.validate()
    }

    /// Every key with its resolved value, in a form `parse` accepts.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        fn list(v: &[usize]) -> String {
            v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        }
        fn opt<V: Display>(v: &Option<V>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), V::to_string)
        }
        let mut p: Vec<(&str, String)> = vec![
            ("run.mode", self.train.mode.to_string()),
            ("run.out_dir", self.out_dir.display().to_string()),
            ("data.modality", self.model.modality.to_string()),
            ("data.source", self.data.source.to_string()),
        ];
        for (k, v) in [("data.train", &self.data.train), ("data.labeled", &self.data.labeled), ("data.vocab", &self.data.vocab)] {
            if let Some(v) = v {
                p.push((k, v.display().to_string()));
            }
        }
        let m = &self.model;
        let t = &self.train;
        p.extend([
            ("data.n", self.data.n.to_string()),
            ("data.label_fraction", format!("{:?}", self.data.label_fraction)),
            ("data.seed", self.data.seed.to_string()),
            ("model.latent_dim", m.latent_dim.to_string()),
            ("model.n_classes", m.n_classes.to_string()),
            ("model.energy_hidden", list(&m.energy_hidden)),
            ("model.energy_activation", m.energy_activation.to_string()),
            ("model.vocab_size", m.vocab_size.to_string()),
            ("model.embed_dim", m.embed_dim.to_string()),
            ("model.rnn_hidden", m.rnn_hidden.to_string()),
            ("model.max_len", m.max_len.to_string()),
            ("model.mlp_hidden", list(&m.mlp_hidden)),
            ("model.mlp_activation", m.mlp_activation.to_string()),
            ("model.point_dim", m.point_dim.to_string()),
            ("model.obs_std", format!("{:?}", m.obs_std)),
            ("train.steps", t.steps.to_string()),
            ("train.lr_prior", format!("{:?}", t.lr_prior)),
            ("train.lr_psi", format!("{:?}", t.lr_psi)),
            ("train.lr_supervised", format!("{:?}", t.lr_supervised)),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.labeled_batch_size", t.labeled_batch_size.to_string()),
            ("train.n_chains", t.n_chains.to_string()),
            ("train.lambda", format!("{:?}", t.lambda)),
            ("train.seed", t.seed.to_string()),
            ("train.optimizer", t.optimizer.to_string()),
            ("train.clip_norm", opt(&t.clip_norm.map(|c| format!("{c:?}")))),
            ("train.kl_warmup_steps", t.kl_warmup_steps.to_string()),
            ("train.posterior_samples", t.posterior_samples.to_string()),
            ("train.labeled_in_elbo", t.labeled_in_elbo.to_string()),
            ("train.log_every", t.log_every.to_string()),
            ("train.checkpoint_every", t.checkpoint_every.to_string()),
            ("langevin.step_size", format!("{:?}", t.langevin.step_size)),
            ("langevin.n_steps", t.langevin.n_steps.to_string()),
            ("langevin.restart_every", opt(&t.langevin.restart_every)),
            ("eval.metrics", self.eval.metrics.join(",")),
            ("eval.is_samples", self.eval.is_samples.to_string()),
            ("eval.log_z_samples", self.eval.log_z_samples.to_string()),
            ("eval.seed", self.eval.seed.to_string()),
        ]);
        p.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
