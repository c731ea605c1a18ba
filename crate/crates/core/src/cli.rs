//! Command implementations behind the `svebm` binary. Each command takes
//! parsed arguments and writes its artifacts; the binary only maps errors
//! to exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, Checkpoint, CheckpointExtras};
use crate::config::{DataSource, RunConfig};
use crate::data::{DocumentExample, Example, Modality, Vocabulary};
use crate::error::{Error, Result};
use crate::langevin::{conditional_prior_samples, fresh_prior_samples, LangevinConfig};
use crate::metrics::{self, ReportRow};
use crate::model::Model;
use crate::objectives::mutual_info_zy;
use crate::synth::{self, GridSpec, PointDataset};
use crate::trainer::{fit, FitOutput, ModelState, TrainData, TrainConfig};

pub const METRIC_NAMES: [&str; 9] = [
    "elbo",
    "nll",
    "homogeneity",
    "matched_accuracy",
    "accuracy",
    "bleu",
    "word_kl",
    "mutual_info",
    "attribute_control",
];

pub fn check_metric_names(names: &[String]) -> Result<()> {
    for n in names {
        if !METRIC_NAMES.contains(&n.as_str()) {
            return Err(Error::Config(format!(
                "unknown metric '{n}' (valid: {})",
                METRIC_NAMES.join(", ")
            )));
        }
    }
    Ok(())
}

/// Fresh-chain length used for generation, as a multiple of the training
/// chain length.
pub const GENERATION_CHAIN_FACTOR: usize = 5;
/// Words per generated document.
pub const DOC_LENGTH: usize = 50;

/// Observations with optional ground truth, plus the labeled training pairs.
#[derive(Clone, Debug, Default)]
pub struct LoadedData {
    pub examples: Vec<Example<f64>>,
    pub truth: Vec<Option<usize>>,
    pub labeled: Vec<(Example<f64>, usize)>,
    pub vocab: Option<Vocabulary>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn from_points(d: &PointDataset, label_fraction: f64) -> LoadedData {
    let n_labeled = (label_fraction * d.len() as f64).round() as usize;
    let examples: Vec<Example<f64>> = d.examples();
    let labeled = examples
        .iter()
        .zip(&d.components)
        .take(n_labeled)
        .map(|(x, &c)| (x.clone(), c))
        .collect();
    LoadedData { truth: d.components.iter().map(|&c| Some(c)).collect(), examples, labeled, vocab: None }
}

fn split_observations(xs: Vec<Example<f64>>, label_fraction: Option<f64>) -> LoadedData {
    let n_labeled = label_fraction.map(|f| (f * xs.len() as f64).round() as usize).unwrap_or(0);
    let mut out = LoadedData::default();
    for x in xs {
        let y = x.label();
        if let (Some(c), true) = (y, out.labeled.len() < n_labeled) {
            out.labeled.push((x.clone().with_label(None), c));
        }
        out.truth.push(y);
        out.examples.push(x.with_label(None));
    }
    out
}

fn sequences_to_examples(seqs: Vec<crate::data::SequenceExample>, modality: Modality, vocab_size: usize) -> Vec<Example<f64>> {
    seqs.into_iter()
        .map(|s| match modality {
            Modality::Document => Example::Document(DocumentExample::from_tokens(&s.tokens, vocab_size, s.label)),
            _ => Example::Sequence(s),
        })
        .collect()
}

/// Reads or generates the dataset described by `cfg`. Fills in
/// `model.vocab_size` from the vocabulary when it is 0.
pub fn load_data(cfg: &mut RunConfig, vocab_override: Option<&Vocabulary>) -> Result<LoadedData> {
    let d = &cfg.data;
    let modality = cfg.model.modality;
    let mut data = match d.source {
        DataSource::EightGaussians => from_points(
            &synth::eight_gaussians(d.n, synth::EIGHT_GAUSSIANS_RADIUS, synth::EIGHT_GAUSSIANS_STD, d.seed),
            d.label_fraction,
        ),
        DataSource::Pinwheel => from_points(&synth::pinwheel(d.n, Default::default(), d.seed)?, d.label_fraction),
        DataSource::ToyText => {
            let corpus = synth::toy_corpus(&synth::GrammarSpec::default(), d.n, d.seed)?;
            let v = corpus.vocab.len();
            let mut out = split_observations(sequences_to_examples(corpus.examples, modality, v), Some(d.label_fraction));
            out.vocab = Some(corpus.vocab);
            out
        }
        DataSource::File => {
            let path = d.train.as_ref().ok_or_else(|| Error::Config("missing required field data.train".into()))?;
            let vocab_file = match (&d.vocab, vocab_override) {
                (_, Some(v)) => Some(v.clone()),
                (Some(p), None) => Some(Vocabulary::parse(&read(p)?)?),
                (None, None) => None,
            };
            let out = match modality {
                Modality::Points => {
                    let mut out = from_points(&crate::formats::parse_points(&read(path)?)?, 0.0);
                    if let Some(lp) = &d.labeled {
                        let l = crate::formats::parse_points(&read(lp)?)?;
                        out.labeled = l.examples().into_iter().zip(l.components).collect();
                    }
                    out
                }
                Modality::Sequence | Modality::Document => {
                    if modality == Modality::Document {
                        let v = vocab_file
                            .as_ref()
                            .map(Vocabulary::len)
                            .filter(|_| cfg.model.vocab_size == 0)
                            .unwrap_or(cfg.model.vocab_size);
                        if v == 0 {
                            return Err(Error::Config("document data needs data.vocab or model.vocab_size".into()));
                        }
                        let docs = crate::formats::parse_bow(&read(path)?, v)?;
                        let mut out = split_observations(docs.into_iter().map(Example::Document).collect(), None);
                        if let Some(lp) = &d.labeled {
                            out.labeled = crate::formats::parse_bow(&read(lp)?, v)?
                                .into_iter()
                                .filter_map(|doc| doc.label.map(|y| (Example::Document(DocumentExample { label: None, ..doc }), y)))
                                .collect();
                        }
                        out.vocab = vocab_file;
                        if cfg.model.vocab_size == 0 {
                            cfg.model.vocab_size = v;
                        }
                        out
                    } else {
                        let (vocab, seqs) = crate::formats::parse_corpus(&read(path)?, vocab_file.as_ref())?;
                        let mut out = split_observations(seqs.into_iter().map(Example::Sequence).collect(), None);
                        if let Some(lp) = &d.labeled {
                            let (_, l) = crate::formats::parse_corpus(&read(lp)?, Some(&vocab))?;
                            out.labeled = l
                                .into_iter()
                                .filter_map(|s| s.label.map(|y| (Example::Sequence(crate::data::SequenceExample::new(s.tokens)), y)))
                                .collect();
                        }
                        out.vocab = Some(vocab);
                        out
                    }
                }
            };
            if out.examples.is_empty() {
                return Err(Error::Data(format!("{} contains no observations", path.display())));
            }
            out
        }
    };
    if let (Some(v), 0) = (&data.vocab, cfg.model.vocab_size) {
        cfg.model.vocab_size = v.len();
    }
    if let Some(v) = vocab_override {
        data.vocab = Some(v.clone());
    }
    validate_examples(&cfg.model, &data)?;
    Ok(data)
}

fn validate_examples(m: &crate::model::ModelConfig, data: &LoadedData) -> Result<()> {
    let all = data.examples.iter().chain(data.labeled.iter().map(|(x, _)| x));
    for (i, x) in all.enumerate() {
        let r = match x {
            Example::Sequence(s) => s.validate(m.vocab_size.max(1), m.max_len),
            Example::Document(d) => d.validate(m.vocab_size),
            Example::Point(p) if p.coords.len() != m.point_dim => Err(Error::Data(format!(
                "point has {} coordinates, model expects {}",
                p.coords.len(),
                m.point_dim
            ))),
            Example::Point(_) => Ok(()),
        };
        r.map_err(|e| Error::Data(format!("observation {}: {e}", i + 1)))?;
        if x.modality() != m.modality {
            return Err(Error::Data(format!("observation {} is not {} data", i + 1, m.modality)));
        }
    }
    for &(_, y) in &data.labeled {
        if y >= m.n_classes {
            return Err(Error::Data(format!("label {y} out of range for {} categories", m.n_classes)));
        }
    }
    Ok(())
}

/// Short content hash of a checkpoint file.
pub fn checkpoint_id(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

fn labeled_pairs(pred: &[usize], truth: &[Option<usize>]) -> Result<(Vec<usize>, Vec<usize>)> {
    let (t, p): (Vec<usize>, Vec<usize>) = truth
        .iter()
        .zip(pred)
        .filter_map(|(t, &p)| t.map(|t| (t, p)))
        .unzip();
    if t.is_empty() {
        return Err(Error::Evaluation("metric needs ground-truth labels and the data has none".into()));
    }
    Ok((t, p))
}

fn generation_chain(cfg: &LangevinConfig) -> LangevinConfig {
    LangevinConfig { n_steps: cfg.n_steps * GENERATION_CHAIN_FACTOR, ..cfg.clone() }
}

/// Computes the named metrics on `data`.
pub fn evaluate(
    model: &Model<f64>,
    data: &LoadedData,
    names: &[String],
    eval: &crate::config::EvalConfig,
    langevin: &LangevinConfig,
    checkpoint_id: &str,
) -> Result<Vec<ReportRow>> {
    check_metric_names(names)?;
    let mut rng = ChaCha8Rng::seed_from_u64(eval.seed);
    let n = data.examples.len();
    let row = |metric: &str, value: f64, n: usize| ReportRow {
        metric: metric.to_string(),
        value,
        n,
        seed: eval.seed,
        checkpoint_id: checkpoint_id.to_string(),
    };
    let mut log_z = None;
    let mut pred = None;
    let mut rows = Vec::new();
    for name in names {
        let needs_z = matches!(name.as_str(), "elbo" | "nll");
        if needs_z && log_z.is_none() {
            log_z = Some(metrics::log_partition_estimate(&model.prior, eval.log_z_samples, &mut rng)?);
        }
        if matches!(name.as_str(), "homogeneity" | "matched_accuracy" | "accuracy") && pred.is_none() {
            pred = Some(metrics::classify_all(model, &data.examples)?);
        }
        let r = match name.as_str() {
            "elbo" => row(name, metrics::mean_elbo(model, &data.examples, log_z.unwrap_or(0.0), &mut rng)?, n),
            "nll" => {
                let mut s = 0.0;
                for x in &data.examples {
                    s += metrics::nll_importance_sampling(model, x, eval.is_samples, log_z.unwrap_or(0.0), &mut rng)?;
                }
                row(name, s / n.max(1) as f64, n)
            }
            "homogeneity" | "matched_accuracy" | "accuracy" => {
                let (t, p) = labeled_pairs(pred.as_deref().unwrap_or(&[]), &data.truth)?;
                let v = match name.as_str() {
                    "homogeneity" => metrics::homogeneity(&t, &p)?,
                    "accuracy" => t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64,
                    _ => {
                        let c = t.iter().copied().max().unwrap_or(0).max(model.n_classes() - 1) + 1;
                        metrics::matched_accuracy(&t, &p, model.n_classes().max(c), c)?
                    }
                };
                row(name, v, t.len())
            }
            "bleu" => row(name, metrics::bleu_reconstruction(model, &data.examples)?, n),
            "word_kl" => {
                let data_words = word_lists(&data.examples)?;
                let m = n.min(1000);
                let zs = fresh_prior_samples(&model.prior, &generation_chain(langevin), m, &mut rng)?;
                let mut gen = Vec::with_capacity(m);
                for z in &zs {
                    gen.push(model.decoder.sample(z, Some(1.0), DOC_LENGTH, &mut rng)?);
                }
                row(name, metrics::word_kl(&data_words, &word_lists(&gen)?)?, m)
            }
            "mutual_info" => {
                let mut zs = Vec::with_capacity(n);
                for x in &data.examples {
                    zs.push(model.encoder.encode(x)?.mean);
                }
                row(name, mutual_info_zy(&model.prior, &zs)?, n)
            }
            "attribute_control" => {
                let per_label = 100;
                let mut s = 0.0;
                for y in 0..model.n_classes() {
                    s += metrics::attribute_control_accuracy(
                        model,
                        y,
                        per_label,
                        |x| metrics::classify(model, x).map(|(k, _)| k),
                        &generation_chain(langevin),
                        &mut rng,
                    )?;
                }
                row(name, s / model.n_classes() as f64, per_label * model.n_classes())
            }
            _ => unreachable!("names checked above"),
        };
        rows.push(r);
    }
    Ok(rows)
}

fn word_lists(xs: &[Example<f64>]) -> Result<Vec<Vec<u32>>> {
    xs.iter()
        .map(|x| match x {
            Example::Sequence(s) => Ok(s.tokens.clone()),
            Example::Document(d) => Ok(d
                .counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat_n(i as u32, c as usize))
                .collect()),
            Example::Point(_) => Err(Error::Data("word-level KL needs text data".into())),
        })
        .collect()
}

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub steps: u64,
    pub report: Vec<ReportRow>,
}

pub const CONFIG_ECHO: &str = "config.resolved";
pub const REPORT_FILE: &str = "report.tsv";

/// Trains from `cfg` (or resumes from `resume`), writes the resolved
/// config, log, checkpoints and a final report into `cfg.out_dir`.
pub fn cmd_train(mut cfg: RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    let restored = resume.map(checkpoint::load::<f64>).transpose()?;
    let vocab = restored.as_ref().and_then(|c| c.extras.vocab.clone());
    let data = load_data(&mut cfg, vocab.as_ref())?;
    cfg.model.validate()?;
    let extras = CheckpointExtras { config_echo: cfg.to_pairs(), vocab: data.vocab.clone() };
    let mut state = match restored {
        Some(ck) => {
            if ck.state.model.config != cfg.model {
                return Err(Error::Checkpoint("checkpoint model settings differ from the configuration".into()));
            }
            ck.state
        }
        None => ModelState::new(cfg.model.clone(), &cfg.train)?,
    };
    // optimizer rates follow the configuration on resume
    state.opt_prior.lr = cfg.train.lr_prior;
    state.opt_psi.lr = cfg.train.lr_psi;
    state.opt_supervised.lr = cfg.train.lr_supervised;

    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write(&cfg.out_dir.join(CONFIG_ECHO), &cfg.to_text())?;
    let train_data = TrainData { unlabeled: data.examples.clone(), labeled: data.labeled.clone() };
    fit(&mut state, &train_data, &cfg.train, &FitOutput { dir: Some(cfg.out_dir.clone()) }, &extras)?;

    let ck_path = cfg.out_dir.join(crate::trainer::FINAL_CHECKPOINT);
    let id = checkpoint_id(&ck_path)?;
    let names: Vec<String> = cfg
        .eval
        .metrics
        .iter()
        .filter(|m| metric_applies(m, cfg.model.modality, &data))
        .cloned()
        .collect();
    let report = evaluate(&state.model, &data, &names, &cfg.eval, &cfg.train.langevin, &id)?;
    write(&cfg.out_dir.join(REPORT_FILE), &metrics::report_text(&report))?;
    Ok(TrainOutcome { out_dir: cfg.out_dir, steps: state.step, report })
}

/// Metrics that make no sense for the data are skipped after training
/// rather than failing the run.
fn metric_applies(name: &str, modality: Modality, data: &LoadedData) -> bool {
    match name {
        "homogeneity" | "matched_accuracy" | "accuracy" => data.truth.iter().any(Option::is_some),
        "bleu" => modality == Modality::Sequence,
        "word_kl" => modality != Modality::Points,
        _ => true,
    }
}

/// Loads a checkpoint and the evaluation data: `data` if given (read in
/// the checkpoint's modality), otherwise the dataset of `config`.
fn eval_inputs(ck: &Checkpoint<f64>, data: Option<&Path>, config: Option<&Path>) -> Result<(RunConfig, LoadedData)> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.train = ck.train_config.clone();
            c
        }
    };
    cfg.model = ck.state.model.config.clone();
    if let Some(p) = data {
        cfg.data.source = DataSource::File;
        cfg.data.train = Some(p.to_path_buf());
        cfg.data.labeled = None;
    } else if config.is_none() {
        return Err(Error::Config("evaluation data missing: pass --data or --config".into()));
    }
    let data = load_data(&mut cfg, ck.extras.vocab.as_ref())?;
    Ok((cfg, data))
}

pub fn cmd_eval(
    checkpoint_path: &Path,
    data: Option<&Path>,
    config: Option<&Path>,
    names: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Vec<ReportRow>> {
    check_metric_names(names)?;
    let ck = checkpoint::load::<f64>(checkpoint_path)?;
    let (mut cfg, data) = eval_inputs(&ck, data, config)?;
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    let names = if names.is_empty() { cfg.eval.metrics.clone() } else { names.to_vec() };
    let id = checkpoint_id(checkpoint_path)?;
    let rows = evaluate(&ck.state.model, &data, &names, &cfg.eval, &ck.train_config.langevin, &id)?;
    if let Some(p) = out {
        write(p, &metrics::report_text(&rows))?;
    }
    Ok(rows)
}

/// Draws `count` observations, from `p(z | y = label)` when a label is
/// given and from the marginal prior otherwise, and renders them in the
/// modality's file format.
pub fn cmd_sample(
    checkpoint_path: &Path,
    count: usize,
    label: Option<usize>,
    temperature: Option<f64>,
    seed: u64,
) -> Result<String> {
    let ck = checkpoint::load::<f64>(checkpoint_path)?;
    let model = &ck.state.model;
    if let Some(t) = temperature {
        if !(t > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {t}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = generation_chain(&ck.train_config.langevin);
    let zs = match label {
        Some(y) => conditional_prior_samples(&model.prior, y, &chain, count, &mut rng)?,
        None => fresh_prior_samples(&model.prior, &chain, count, &mut rng)?,
    };
    let mut xs = Vec::with_capacity(count);
    for z in &zs {
        xs.push(model.decoder.sample(z, temperature, DOC_LENGTH, &mut rng)?);
    }
    match model.config.modality {
        Modality::Points => {
            let mut d = PointDataset { points: Vec::new(), components: Vec::new() };
            for (x, z) in xs.iter().zip(&zs) {
                let Example::Point(p) = x else { unreachable!("point decoder") };
                if p.coords.len() != 2 {
                    return Err(Error::Data("point samples must be two-dimensional".into()));
                }
                d.points.push([p.coords[0], p.coords[1]]);
                d.components.push(match label {
                    Some(y) => y,
                    None => model.prior.symbol_posterior(z)?.argmax(),
                });
            }
            Ok(crate::formats::write_points(&d))
        }
        Modality::Sequence => {
            let vocab = ck.extras.vocab.clone().unwrap_or_default();
            let seqs: Vec<_> = xs
                .into_iter()
                .filter_map(|x| match x {
                    Example::Sequence(s) => Some(s),
                    _ => None,
                })
                .collect();
            Ok(crate::formats::write_corpus(&vocab, &seqs))
        }
        Modality::Document => {
            let docs: Vec<_> = xs
                .into_iter()
                .filter_map(|x| match x {
                    Example::Document(d) => Some(d),
                    _ => None,
                })
                .collect();
            Ok(crate::formats::write_bow(&docs))
        }
    }
}

/// One line per observation: index, predicted category and the category
/// distribution.
pub fn cmd_classify(checkpoint_path: &Path, data: Option<&Path>, config: Option<&Path>) -> Result<String> {
    let ck = checkpoint::load::<f64>(checkpoint_path)?;
    let (_, data) = eval_inputs(&ck, data, config)?;
    let mut s = String::from("index\tprediction\tprobabilities\n");
    for (i, x) in data.examples.iter().enumerate() {
        let (k, dist) = metrics::classify(&ck.state.model, x)?;
        let probs: Vec<String> = dist.probs().iter().map(|p| format!("{p:.6}")).collect();
        let _ = writeln!(s, "{i}\t{k}\t{}", probs.join(","));
    }
    Ok(s)
}

pub const PANELS: [&str; 5] = ["true_x", "posterior_x", "prior_x", "posterior_z", "prior_z"];
pub const GRID_RESOLUTION: usize = 100;
pub const GRID_MARGIN: f64 = 1.0;
pub const PANEL_INDEX: &str = "panels.tsv";

fn xy(v: &[f64]) -> Result<[f64; 2]> {
    match v {
        [a, b, ..] => Ok([*a, *b]),
        _ => Err(Error::Data("density panels need at least two dimensions".into())),
    }
}

/// Sample sets for the five density panels. Without a model only the
/// data panel is produced.
pub fn density_samples(
    model: Option<&Model<f64>>,
    langevin: &LangevinConfig,
    data: &[[f64; 2]],
    seed: u64,
) -> Result<Vec<(&'static str, Vec<[f64; 2]>)>> {
    let mut panels = vec![(PANELS[0], data.to_vec())];
    let Some(model) = model else {
        return Ok(panels);
    };
    if model.config.modality != Modality::Points || model.config.point_dim != 2 {
        return Err(Error::Data("density panels need a model of two-dimensional points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut post_x, mut post_z) = (Vec::new(), Vec::new());
    for p in data {
        let q = model.encoder.encode(&Example::point(p.to_vec(), None))?;
        let (z, _) = q.reparam_sample(&mut rng);
        let Example::Point(x) = model.decoder.sample(&z, None, 0, &mut rng)? else { unreachable!("point decoder") };
        post_x.push(xy(&x.coords)?);
        post_z.push(xy(&z)?);
    }
    let zs = fresh_prior_samples(&model.prior, &generation_chain(langevin), data.len(), &mut rng)?;
    let (mut prior_x, mut prior_z) = (Vec::new(), Vec::new());
    for z in &zs {
        let Example::Point(x) = model.decoder.sample(z, None, 0, &mut rng)? else { unreachable!("point decoder") };
        prior_x.push(xy(&x.coords)?);
        prior_z.push(xy(z)?);
    }
    panels.extend([(PANELS[1], post_x), (PANELS[2], prior_x), (PANELS[3], post_z), (PANELS[4], prior_z)]);
    Ok(panels)
}

/// Grid shared by the observation-space panels: the data's bounding box
/// with a fixed margin.
pub fn observation_grid(data: &[[f64; 2]]) -> Result<GridSpec> {
    GridSpec::covering(data, GRID_MARGIN, GRID_RESOLUTION)
}

/// Writes one density grid per panel plus an index file. Returns the
/// panel names written.
pub fn cmd_plot_density(
    checkpoint_path: Option<&Path>,
    data_path: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<Vec<String>> {
    let data = crate::formats::parse_points(&read(data_path)?)?;
    let ck = checkpoint_path.map(checkpoint::load::<f64>).transpose()?;
    let (model, langevin) = match &ck {
        Some(c) => (Some(&c.state.model), c.train_config.langevin.clone()),
        None => (None, TrainConfig::default().langevin),
    };
    let panels = density_samples(model, &langevin, &data.points, seed)?;
    let x_grid = observation_grid(&data.points)?;
    let z_points: Vec<[f64; 2]> = panels
        .iter()
        .filter(|(n, _)| n.ends_with("_z"))
        .flat_map(|(_, p)| p.iter().copied())
        .collect();
    let z_grid = if z_points.is_empty() { None } else { Some(GridSpec::covering(&z_points, GRID_MARGIN, GRID_RESOLUTION)?) };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut index = String::from("panel\tfile\tn\tbandwidth\tx_min\tx_max\ty_min\ty_max\tnx\tny\n");
    let mut names = Vec::new();
    for (name, pts) in &panels {
        let grid = if name.ends_with("_z") { z_grid.unwrap_or(x_grid) } else { x_grid };
        let h = synth::scott_bandwidth(pts)?;
        let dens = synth::kde_grid(pts, h, grid)?;
        let file = format!("{name}.tsv");
        write(&out_dir.join(&file), &dens.to_text())?;
        let _ = writeln!(
            index,
            "{name}\t{file}\t{}\t{h:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\t{}",
            pts.len(),
            grid.x_min,
            grid.x_max,
            grid.y_min,
            grid.y_max,
            grid.nx,
            grid.ny
        );
        names.push(name.to_string());
    }
    write(&out_dir.join(PANEL_INDEX), &index)?;
    Ok(names)
}
