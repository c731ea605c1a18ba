//! One function per acceptance criterion. Each returns an [`Outcome`]
//! whose detail line records the measured values.

use std::path::Path;

use rand::Rng;
use svebm::cli::density_samples;
use svebm::data::{Example, Modality, SequenceExample};
use svebm::encoder::GaussianPosterior;
use svebm::langevin::{ChainPool, LangevinConfig};
use svebm::metrics::{self, bleu, classify_all, homogeneity, matched_accuracy, word_kl};
use svebm::model::{Model, ModelConfig};
use svebm::nn::Params;
use svebm::objectives::{
    ib_objective, mutual_info_zy, mutual_info_zy_backward, prior_grad_estimate, supervised_class_loss,
    supervised_objective, svebm_objective, unsupervised_objective, MiWeight,
};
use svebm::prior::EnergyParams;
use svebm::synth::{self, GrammarSpec};
use svebm::trainer::{fit, FitOutput, Mode, ModelState, TrainConfig, TrainData};

use super::*;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

// ---------------------------------------------------------------------------
// 1. gradient correctness

type ArraysMut = for<'a> fn(&'a mut Model<f64>) -> Vec<&'a mut [f64]>;

fn prior_mut(m: &mut Model<f64>) -> Vec<&mut [f64]> {
    m.prior.arrays_mut()
}

fn encoder_mut(m: &mut Model<f64>) -> Vec<&mut [f64]> {
    m.encoder.arrays_mut()
}

fn decoder_mut(m: &mut Model<f64>) -> Vec<&mut [f64]> {
    m.decoder.arrays_mut()
}

fn owned(arrays: Vec<&[f64]>) -> Vec<Vec<f64>> {
    arrays.into_iter().map(<[f64]>::to_vec).collect()
}

/// Worst relative error over `n` random coordinates of one parameter group.
fn check_params(
    model: &Model<f64>,
    group: ArraysMut,
    analytic: &[Vec<f64>],
    f: &dyn Fn(&Model<f64>) -> f64,
    n: usize,
    r: &mut impl Rng,
) -> f64 {
    let mut work = model.clone();
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut worst: f64 = 0.0;
    for _ in 0..n.min(total) {
        let mut flat = r.random_range(0..total);
        let mut a = 0;
        while flat >= sizes[a] {
            flat -= sizes[a];
            a += 1;
        }
        let x0 = group(&mut work)[a][flat];
        let num = central_diff(
            |v| {
                group(&mut work)[a][flat] = v;
                f(&work)
            },
            x0,
            FD_STEP,
        );
        group(&mut work)[a][flat] = x0;
        worst = worst.max(rel_err(analytic[a][flat], num));
    }
    worst
}

/// Worst relative error of `analytic` against `f` over every coordinate of `x`.
fn check_vec(x: &[f64], analytic: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let num = central_diff(
            |v| {
                work[i] = v;
                f(&work)
            },
            x[i],
            FD_STEP,
        );
        work[i] = x[i];
        worst = worst.max(rel_err(analytic[i], num));
    }
    worst
}

/// Max relative error per quantity over `instances` random tiny models.
pub fn gradient_errors(instances: usize) -> Vec<(&'static str, f64)> {
    let mut names: Vec<(&'static str, f64)> = [
        "marginal_energy/z",
        "marginal_energy/alpha",
        "kl_to_reference",
        "seq_log_likelihood/z",
        "seq_log_likelihood/beta",
        "decoder_log_likelihood/beta",
        "mutual_info_zy/z",
        "mutual_info_zy/alpha",
        "supervised_class_loss/alpha",
        "supervised_class_loss/phi",
        "prior_surrogate/alpha",
        "psi_surrogate/phi",
        "psi_surrogate/beta",
    ]
    .into_iter()
    .map(|n| (n, 0.0))
    .collect();
    let mut bump = |name: &str, e: f64| {
        let slot = names.iter_mut().find(|(n, _)| *n == name).expect("known quantity");
        slot.1 = slot.1.max(e);
    };
    let modalities = [Modality::Points, Modality::Sequence, Modality::Document];
    for i in 0..instances {
        let model = tiny_model(modalities[i % 3], 1000 + i as u64);
        let mut r = rng(i as u64);
        let d = model.latent_dim();
        let k = model.n_classes();

        // marginal energy
        let z = normal_vec(d, &mut r);
        let mut gz = model.prior.grad_z_log_prior(&z).unwrap();
        for (g, zi) in gz.iter_mut().zip(&z) {
            *g += zi;
        }
        bump("marginal_energy/z", check_vec(&z, &gz, &|z| model.prior.marginal_energy(z).unwrap()));
        let mut ga = model.prior.zeroed();
        model.prior.accumulate_energy_grad(&z, 1.0, &mut ga);
        let fz = z.clone();
        bump(
            "marginal_energy/alpha",
            check_params(&model, prior_mut, &owned(ga.arrays()), &|m| m.prior.marginal_energy(&fz).unwrap(), 8, &mut r),
        );

        // KL to the reference
        let mu = normal_vec(d, &mut r);
        let lv: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let post = GaussianPosterior::new(mu.clone(), lv.clone());
        let (dm, dlv) = post.kl_grad();
        bump("kl_to_reference", check_vec(&mu, &dm, &|m| GaussianPosterior::new(m.to_vec(), lv.clone()).kl_to_reference()));
        bump("kl_to_reference", check_vec(&lv, &dlv, &|l| GaussianPosterior::new(mu.clone(), l.to_vec()).kl_to_reference()));

        // decoder likelihood
        let x = random_example(&model, &mut r);
        let z = normal_vec(d, &mut r);
        let mut gd = model.decoder.zeroed();
        let (_, dz) = model.decoder.log_likelihood_backward(&x, &z, 1.0, Some(&mut gd)).unwrap();
        let (fx, fz) = (x.clone(), z.clone());
        let beta = check_params(&model, decoder_mut, &owned(gd.arrays()), &|m| m.decoder.log_likelihood(&fx, &fz).unwrap(), 8, &mut r);
        let zerr = check_vec(&z, &dz, &|z| model.decoder.log_likelihood(&x, z).unwrap());
        if model.config.modality == Modality::Sequence {
            bump("seq_log_likelihood/z", zerr);
            bump("seq_log_likelihood/beta", beta);
        } else {
            bump("decoder_log_likelihood/beta", beta.max(zerr));
        }

        // mutual information
        let b = r.random_range(2..=5);
        let zs: Vec<Vec<f64>> = (0..b).map(|_| normal_vec(d, &mut r)).collect();
        let mut gmi = model.prior.zeroed();
        let (_, dzs) = mutual_info_zy_backward(&model.prior, &zs, 1.0, Some(&mut gmi)).unwrap();
        for j in 0..b {
            let others = zs.clone();
            bump(
                "mutual_info_zy/z",
                check_vec(&zs[j], &dzs[j], &|zj| {
                    let mut all = others.clone();
                    all[j] = zj.to_vec();
                    mutual_info_zy(&model.prior, &all).unwrap()
                }),
            );
        }
        let fzs = zs.clone();
        bump(
            "mutual_info_zy/alpha",
            check_params(&model, prior_mut, &owned(gmi.arrays()), &|m| mutual_info_zy(&m.prior, &fzs).unwrap(), 8, &mut r),
        );

        // supervised loss
        let label = r.random_range(0..k);
        let (_, gp, ge) = supervised_objective(&model, &[(&x, label)]).unwrap();
        let fx = x.clone();
        let loss = move |m: &Model<f64>| supervised_class_loss(m, &fx, label).unwrap();
        bump("supervised_class_loss/alpha", check_params(&model, prior_mut, &owned(gp.arrays()), &loss, 8, &mut r));
        bump("supervised_class_loss/phi", check_params(&model, encoder_mut, &owned(ge.arrays()), &loss, 8, &mut r));

        // unsupervised surrogates
        let m = r.random_range(1..=3);
        let batch: Vec<Example<f64>> = (0..m).map(|_| random_example(&model, &mut r)).collect();
        let refs: Vec<&Example<f64>> = batch.iter().collect();
        let noises: Vec<Vec<f64>> = (0..m).map(|_| normal_vec(d, &mut r)).collect();
        let z_neg: Vec<Vec<f64>> = (0..m).map(|_| normal_vec(d, &mut r)).collect();
        let mi = if i % 2 == 0 { MiWeight::On(r.random_range(0.0..3.0)) } else { MiWeight::Off };
        let kw = 1.0;
        let (_, grads) = unsupervised_objective(&model, &refs, &noises, &z_neg, mi, kw).unwrap();
        let total = |m: &Model<f64>| unsupervised_objective(m, &refs, &noises, &z_neg, mi, kw).unwrap().0.total;
        let prior_target = |m: &Model<f64>| {
            let neg: f64 = z_neg.iter().map(|z| m.prior.marginal_energy(z).unwrap()).sum::<f64>() / z_neg.len() as f64;
            total(m) + neg
        };
        bump("prior_surrogate/alpha", check_params(&model, prior_mut, &owned(grads.prior.arrays()), &prior_target, 8, &mut r));
        bump("psi_surrogate/phi", check_params(&model, encoder_mut, &owned(grads.encoder.arrays()), &total, 8, &mut r));
        bump("psi_surrogate/beta", check_params(&model, decoder_mut, &owned(grads.decoder.arrays()), &total, 8, &mut r));
    }
    names
}

pub fn criterion_1() -> Outcome {
    let errs = gradient_errors(120);
    let worst = errs.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let bad: Vec<String> = errs.iter().filter(|(_, e)| *e >= 1e-3).map(|(n, e)| format!("{n}={e:.2e}")).collect();
    Outcome::new(
        bad.is_empty(),
        format!("120 instances, max rel err {worst:.2e}{}", if bad.is_empty() { String::new() } else { format!("; over: {}", bad.join(", ")) }),
    )
}

// ---------------------------------------------------------------------------
// 2. sampler stationarity

/// Per-dimension (mean, variance) of pooled chain samples for a zero head.
pub fn zero_head_moments(d: usize, s: f64, seed: u64) -> Vec<(f64, f64)> {
    let prior = EnergyParams::<f64>::zeros(d, 3, &[4], svebm::nn::Activation::Tanh);
    let cfg = LangevinConfig { step_size: s, n_steps: 50, restart_every: None };
    let mut pool = ChainPool::new(1000, d, seed).unwrap();
    let mut r = rng(seed);
    for _ in 0..4 {
        pool.sample_prior(&prior, &cfg, 1000, &mut r).unwrap();
    }
    let mut samples = Vec::with_capacity(10_000);
    for _ in 0..10 {
        samples.extend(pool.sample_prior(&prior, &cfg, 1000, &mut r).unwrap());
    }
    (0..d)
        .map(|j| mean_var(&samples.iter().map(|z| z[j]).collect::<Vec<_>>()))
        .collect()
}

pub fn criterion_2() -> Outcome {
    let moments = zero_head_moments(4, 0.04, 7);
    let pass = moments.iter().all(|&(m, v)| m.abs() < 0.05 && (0.9..=1.1).contains(&v));
    let worst_mean = moments.iter().map(|m| m.0.abs()).fold(0.0, f64::max);
    let (vmin, vmax) = moments.iter().fold((f64::MAX, f64::MIN), |(a, b), m| (a.min(m.1), b.max(m.1)));
    Outcome::new(pass, format!("d=4, 10^4 samples: max |mean| {worst_mean:.4}, variance in [{vmin:.4}, {vmax:.4}]"))
}

// ---------------------------------------------------------------------------
// 3. estimator identities

/// 1-D model: z ~ N(0, 1) (zero head), x | z ~ N(a z + b, sd²), and a
/// deliberately mismatched Gaussian encoder.
pub fn linear_gaussian_model(a: f64, b: f64, sd: f64) -> Model<f64> {
    let cfg = ModelConfig {
        modality: Modality::Points,
        latent_dim: 1,
        n_classes: 2,
        energy_hidden: vec![2],
        mlp_hidden: vec![1],
        mlp_activation: svebm::nn::Activation::Identity,
        point_dim: 1,
        obs_std: sd,
        ..ModelConfig::default()
    };
    let mut m = Model::<f64>::init(cfg, &mut rng(0)).unwrap();
    for a in m.prior.arrays_mut() {
        a.fill(0.0);
    }
    let svebm::generator::DecoderParams::Points { net, .. } = &mut m.decoder else { unreachable!() };
    net.layers[0].weight[0] = 1.0;
    net.layers[0].bias[0] = 0.0;
    net.layers[1].weight[0] = a;
    net.layers[1].bias[0] = b;
    let svebm::encoder::EncoderBody::Mlp(body) = &mut m.encoder.body else { unreachable!() };
    body.layers[0].weight[0] = 1.0;
    body.layers[0].bias[0] = 0.0;
    // exact posterior: precision a²/sd² + 1, mean a (x - b) / sd² / precision;
    // the encoder is slightly shifted and widened on purpose
    let prec = a * a / (sd * sd) + 1.0;
    m.encoder.mean_head.weight[0] = a / (sd * sd) / prec;
    m.encoder.mean_head.bias[0] = -a * b / (sd * sd) / prec + 0.05;
    m.encoder.log_var_head.weight[0] = 0.0;
    m.encoder.log_var_head.bias[0] = (1.1 / prec).ln();
    m
}

pub fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // prior_grad_estimate(z, z) == 0
    let mut zero_ok = true;
    for i in 0..50 {
        let model = tiny_model(Modality::Points, i);
        let mut r = rng(i);
        let zs: Vec<Vec<f64>> = (0..r.random_range(1..6)).map(|_| normal_vec(model.latent_dim(), &mut r)).collect();
        let g = prior_grad_estimate(&model.prior, &zs, &zs).unwrap();
        zero_ok &= g.arrays().iter().all(|a| a.iter().all(|&v| v == 0.0));
    }
    notes.push(format!("zero-estimate {}", if zero_ok { "ok" } else { "FAILED" }));
    pass &= zero_ok;

    // 0 <= MI <= ln K
    let mut lo = f64::MAX;
    let mut hi_gap = f64::MAX;
    for i in 0..1000u64 {
        let model = tiny_model(Modality::Points, 5000 + i % 50);
        let mut r = rng(i);
        let scale = r.random_range(0.1..10.0);
        let zs: Vec<Vec<f64>> = (0..r.random_range(1..20))
            .map(|_| normal_vec(model.latent_dim(), &mut r).into_iter().map(|v| v * scale).collect())
            .collect();
        let mi = mutual_info_zy(&model.prior, &zs).unwrap();
        lo = lo.min(mi);
        hi_gap = hi_gap.min((model.n_classes() as f64).ln() - mi);
    }
    let mi_ok = lo >= 0.0 && hi_gap >= 0.0;
    notes.push(format!("MI min {lo:.3e}, min gap to ln K {hi_gap:.3e}"));
    pass &= mi_ok;

    // λ = 0 IB objective equals the plain objective bitwise
    let mut bitwise = true;
    for i in 0..30 {
        let model = tiny_model([Modality::Points, Modality::Sequence, Modality::Document][i % 3], 900 + i as u64);
        let mut r = rng(i as u64);
        let xs: Vec<Example<f64>> = (0..4).map(|_| random_example(&model, &mut r)).collect();
        let refs: Vec<&Example<f64>> = xs.iter().collect();
        let noises: Vec<Vec<f64>> = (0..4).map(|_| normal_vec(model.latent_dim(), &mut r)).collect();
        let zn: Vec<Vec<f64>> = (0..4).map(|_| normal_vec(model.latent_dim(), &mut r)).collect();
        let (b1, g1) = ib_objective(&model, &refs, &noises, &zn, 0.0).unwrap();
        let (b2, g2) = svebm_objective(&model, &refs, &noises, &zn).unwrap();
        let bits = |g: &svebm::objectives::ModelGradients<f64>| -> Vec<u64> {
            let mut v: Vec<u64> = Vec::new();
            for a in g.prior.arrays().into_iter().chain(g.encoder.arrays()).chain(g.decoder.arrays()) {
                v.extend(a.iter().map(|x| x.to_bits()));
            }
            v
        };
        bitwise &= b1.total.to_bits() == b2.total.to_bits() && bits(&g1) == bits(&g2);
    }
    notes.push(format!("lambda=0 bitwise {}", if bitwise { "ok" } else { "FAILED" }));
    pass &= bitwise;

    // importance-sampled NLL against the analytic marginal
    let (a, b, sd) = (1.3, 0.4, 0.6);
    let model = linear_gaussian_model(a, b, sd);
    let mut r = rng(11);
    let log_z = metrics::log_partition_estimate(&model.prior, 1000, &mut r).unwrap();
    let mut worst: f64 = 0.0;
    for &x in &[-3.0, -2.0, 2.5, 3.5] {
        let var = a * a + sd * sd;
        let exact = 0.5 * (2.0 * std::f64::consts::PI * var).ln() + (x - b) * (x - b) / (2.0 * var);
        let est = metrics::nll_importance_sampling(&model, &Example::point(vec![x], None), 500, log_z, &mut r).unwrap();
        worst = worst.max(((est - exact) / exact).abs());
    }
    notes.push(format!("IS NLL max rel err {worst:.2e}"));
    pass &= worst < 0.01;
    Outcome::new(pass, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 4 and 5. 2-D toys

pub fn points_config(k: usize) -> (ModelConfig, TrainConfig) {
    let m = ModelConfig {
        modality: Modality::Points,
        latent_dim: 2,
        n_classes: k,
        energy_hidden: vec![64, 64],
        mlp_hidden: vec![64, 64],
        ..ModelConfig::default()
    };
    let t = TrainConfig { mode: Mode::IbEbm, lambda: 50.0, batch_size: 100, n_chains: 1000, ..TrainConfig::default() };
    (m, t)
}

pub fn train_points(data: &synth::PointDataset, k: usize, steps: u64, seed: u64) -> Model<f64> {
    let (mc, mut tc) = points_config(k);
    tc.steps = steps;
    tc.seed = seed;
    let mut st = ModelState::<f64>::new(mc, &tc).unwrap();
    fit(&mut st, &TrainData::unsupervised(data.examples()), &tc, &FitOutput::default(), &Default::default()).unwrap();
    st.model
}

pub fn criterion_4() -> Outcome {
    let data = synth::eight_gaussians(4000, synth::EIGHT_GAUSSIANS_RADIUS, synth::EIGHT_GAUSSIANS_STD, 0);
    let model = train_points(&data, 8, 1500, 0);
    let lc = TrainConfig::default().langevin;
    let panels = density_samples(Some(&model), &lc, &data.points[..2000], 1).unwrap();
    let prior_x = &panels.iter().find(|(n, _)| *n == "prior_x").unwrap().1;
    let modes = synth::modes_recovered(prior_x, &synth::eight_gaussian_centers(2.0), 0.3, 0.25 / 8.0);
    let h = homogeneity(&data.components, &classify_all(&model, &data.examples()).unwrap()).unwrap();
    Outcome::new(modes >= 7 && h >= 0.7, format!("1500 steps: {modes}/8 modes recovered in prior x, homogeneity {h:.3}"))
}

pub fn criterion_5() -> Outcome {
    let data = synth::pinwheel(4000, synth::PinwheelParams::default(), 0).unwrap();
    let model = train_points(&data, 5, 2000, 0);
    let pred = classify_all(&model, &data.examples()).unwrap();
    let acc = matched_accuracy(&data.components, &pred, 5, 5).unwrap();
    let clusters = (0..5).filter(|&c| pred.iter().filter(|&&p| p == c).count() as f64 > 0.05 * pred.len() as f64).count();
    Outcome::new(acc >= 0.6 && clusters >= 4, format!("2000 steps: {clusters} clusters, matched accuracy {acc:.3}"))
}

// ---------------------------------------------------------------------------
// 6 and 7. toy text corpus

pub const TEXT_STEPS: u64 = 1500;

pub fn text_config(vocab: usize) -> (ModelConfig, TrainConfig) {
    let m = ModelConfig {
        modality: Modality::Sequence,
        latent_dim: 8,
        n_classes: 4,
        energy_hidden: vec![64, 64],
        vocab_size: vocab,
        embed_dim: 32,
        rnn_hidden: 64,
        max_len: 12,
        ..ModelConfig::default()
    };
    let t = TrainConfig { steps: TEXT_STEPS, batch_size: 64, n_chains: 1000, ..TrainConfig::default() };
    (m, t)
}

pub struct TextRun {
    pub homogeneity: f64,
    pub matched_accuracy: f64,
    pub accuracy: f64,
}

/// Trains on the 5k-sentence toy corpus. `label_fraction > 0` adds a
/// supervised stream with that share of labeled sentences.
pub fn text_run(mode: Mode, label_fraction: f64, seed: u64) -> TextRun {
    let corpus = synth::toy_corpus(&GrammarSpec::default(), 5000, seed).unwrap();
    let truth: Vec<usize> = corpus.examples.iter().map(|e| e.label.unwrap()).collect();
    let xs: Vec<Example<f64>> =
        corpus.examples.iter().map(|e| Example::Sequence(SequenceExample::new(e.tokens.clone()))).collect();
    let (mc, mut tc) = text_config(corpus.vocab.len());
    tc.mode = mode;
    tc.lambda = if mode == Mode::IbEbm { 50.0 } else { 0.0 };
    tc.seed = seed;
    let n_labeled = (label_fraction * xs.len() as f64).round() as usize;
    if n_labeled > 0 {
        tc.labeled_batch_size = 32;
    }
    let data = TrainData {
        unlabeled: xs.clone(),
        labeled: xs.iter().cloned().zip(truth.iter().copied()).take(n_labeled).collect(),
    };
    let mut st = ModelState::<f64>::new(mc, &tc).unwrap();
    fit(&mut st, &data, &tc, &FitOutput::default(), &Default::default()).unwrap();
    let pred = classify_all(&st.model, &xs).unwrap();
    TextRun {
        homogeneity: homogeneity(&truth, &pred).unwrap(),
        matched_accuracy: matched_accuracy(&truth, &pred, 4, 4).unwrap(),
        accuracy: truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64,
    }
}

pub const TEXT_SEEDS: [u64; 3] = [0, 1, 2];

/// Per seed: (IB-EBM run, SVEBM run).
pub fn unsupervised_text_runs() -> Vec<(TextRun, TextRun)> {
    TEXT_SEEDS
        .iter()
        .map(|&s| (text_run(Mode::IbEbm, 0.0, s), text_run(Mode::Svebm, 0.0, s)))
        .collect()
}

pub fn criterion_6(runs: &[(TextRun, TextRun)]) -> Outcome {
    let mut passed = 0;
    let mut parts = Vec::new();
    for (seed, (ib, sv)) in TEXT_SEEDS.iter().zip(runs) {
        let ok = ib.homogeneity - sv.homogeneity >= 0.2 && ib.matched_accuracy >= 0.7;
        passed += ok as usize;
        parts.push(format!(
            "seed {seed}: hom ib {:.3} vs svebm {:.3}, ib matched {:.3}",
            ib.homogeneity, sv.homogeneity, ib.matched_accuracy
        ));
    }
    Outcome::new(passed * 2 > runs.len(), format!("{passed}/{} seeds pass ({})", runs.len(), parts.join("; ")))
}

pub fn criterion_7(runs: &[(TextRun, TextRun)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (seed, (ib, _)) in TEXT_SEEDS.iter().zip(runs) {
        let semi = text_run(Mode::IbEbm, 0.1, *seed);
        ok &= semi.accuracy >= 0.9 && semi.accuracy > ib.matched_accuracy;
        parts.push(format!("seed {seed}: semi acc {:.3} vs unsup matched {:.3}", semi.accuracy, ib.matched_accuracy));
    }
    Outcome::new(ok, parts.join("; "))
}

// ---------------------------------------------------------------------------
// 8. metric oracles

/// Best accuracy over all cluster-to-class bijections (K = C).
pub fn brute_force_matched(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut p in perms(rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }
    perms((0..k).collect())
        .into_iter()
        .map(|p| truth.iter().zip(pred).filter(|(&t, &q)| p[q] == t).count())
        .max()
        .unwrap_or(0) as f64
        / truth.len() as f64
}

pub fn criterion_8() -> Outcome {
    let mut fails = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-9 {
            fails.push(format!("{name}: {got} vs {want}"));
        }
    };
    // homogeneity, entropies in bits
    let h2 = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.log2()).sum() };
    check("homogeneity hand", homogeneity(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 1.0 - 0.75 * h2(&[1.0 / 3.0, 2.0 / 3.0]) / 1.0);
    check("homogeneity permuted", homogeneity(&[0, 1, 2, 2, 1], &[2, 0, 1, 1, 0]).unwrap(), 1.0);
    check("homogeneity single cluster", homogeneity(&[0, 1, 2, 1], &[3, 3, 3, 3]).unwrap(), 0.0);
    // matched accuracy
    let truth = [0, 0, 0, 1, 1, 1, 1, 1];
    let pred = [0, 0, 0, 0, 1, 1, 1, 1];
    check("matched hand", matched_accuracy(&truth, &pred, 2, 2).unwrap(), 7.0 / 8.0);
    let mut r = rng(8);
    for _ in 0..200 {
        let k = r.random_range(2..=5);
        let n = r.random_range(1..30);
        let t: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        check("matched brute force", matched_accuracy(&t, &p, k, k).unwrap(), brute_force_matched(&t, &p, k));
    }
    // BLEU
    let refs = vec![vec!["a", "b", "c", "d"]];
    let hyp = vec![vec!["a", "b", "c", "e"]];
    check("bleu hand", bleu(&refs, &hyp).unwrap(), 100.0 * (0.75f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25));
    check("bleu identical", bleu(&refs, &refs).unwrap(), 100.0);
    check("bleu no overlap", bleu(&refs, &[vec!["x", "y", "z"]]).unwrap(), 0.0);
    // word KL
    let a = vec![vec![1u32, 1, 2], vec![3]];
    let b = vec![vec![1u32, 2, 2], vec![2, 3, 3]];
    let p: [f64; 3] = [0.5, 0.25, 0.25];
    let q = [1.0 / 6.0 + 1e-10, 3.0 / 6.0 + 1e-10, 2.0 / 6.0 + 1e-10];
    let hand: f64 = (0..3).map(|i| p[i] * (p[i] / q[i]).ln()).sum();
    check("word_kl hand", word_kl(&a, &b).unwrap(), hand);
    let same = word_kl(&a, &a).unwrap();
    if same > 1e-9 {
        fails.push(format!("word_kl identical: {same}"));
    }
    let disjoint = word_kl(&a, &[vec![9u32, 10]]).unwrap();
    if !(disjoint > 10.0 && disjoint.is_finite()) {
        fails.push(format!("word_kl disjoint: {disjoint}"));
    }
    Outcome::new(fails.is_empty(), if fails.is_empty() { "all oracle values match".to_string() } else { fails.join("; ") })
}

// ---------------------------------------------------------------------------
// 9. reproducibility

fn repro_setup() -> (ModelConfig, TrainConfig, TrainData<f64>) {
    let data = synth::eight_gaussians(600, 2.0, 0.1, 3);
    let (mut mc, mut tc) = points_config(8);
    mc.energy_hidden = vec![16];
    mc.mlp_hidden = vec![16];
    tc.steps = 120;
    tc.batch_size = 32;
    tc.n_chains = 200;
    tc.checkpoint_every = 60;
    tc.seed = 5;
    (mc, tc, TrainData::split_labeled(data.labeled_examples(), 30))
}

fn eval_signature(model: &Model<f64>) -> Vec<f64> {
    let xs = synth::eight_gaussians(50, 2.0, 0.1, 99).examples();
    let mut out = vec![metrics::mean_elbo(model, &xs, 0.0, &mut rng(4)).unwrap()];
    for x in &xs {
        out.extend(metrics::classify(model, x).unwrap().1.into_vec());
    }
    out
}

pub fn criterion_9(dir: &Path) -> Outcome {
    let (mc, mut tc, data) = repro_setup();
    tc.labeled_batch_size = 8;
    let run = |sub: &str| -> ModelState<f64> {
        let mut st = ModelState::<f64>::new(mc.clone(), &tc).unwrap();
        fit(&mut st, &data, &tc, &FitOutput { dir: Some(dir.join(sub)) }, &Default::default()).unwrap();
        st
    };
    let a = run("a");
    run("b");
    let log_a = std::fs::read(dir.join("a").join(svebm::trainer::LOG_FILE)).unwrap();
    let log_b = std::fs::read(dir.join("b").join(svebm::trainer::LOG_FILE)).unwrap();
    let logs_equal = log_a == log_b;

    let ck = svebm::checkpoint::load::<f64>(&dir.join("a").join("checkpoint_00000060.json")).unwrap();
    let mut resumed = ck.state;
    fit(&mut resumed, &data, &tc, &FitOutput::default(), &Default::default()).unwrap();
    let (sa, sr) = (eval_signature(&a.model), eval_signature(&resumed.model));
    let diff = sa.iter().zip(&sr).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Outcome::new(
        logs_equal && diff <= 1e-5,
        format!("logs byte-identical: {logs_equal}; resume max eval diff {diff:.1e}"),
    )
}
