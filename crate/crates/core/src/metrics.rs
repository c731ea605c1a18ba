//! Evaluation: latent classification, clustering scores, reconstruction
//! and word-frequency scores, importance-sampled likelihood and
//! conditional-generation accuracy.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use rand::Rng;

use crate::data::Example;
use crate::encoder::standard_normal_vec;
use crate::error::{Error, Result};
use crate::langevin::{conditional_prior_samples, LangevinConfig};
use crate::model::Model;
use crate::prior::{EnergyParams, SymbolDistribution};
use crate::scalar::{log_sum_exp, Scalar};

/// `argmax_k p(y = k | z = μ(x))` and the full distribution. Ties go to the
/// lowest index. Only the encoder and energy head are consulted.
pub fn classify<T: Scalar>(model: &Model<T>, x: &Example<T>) -> Result<(usize, SymbolDistribution<T>)> {
    let post = model.encoder.encode(x)?;
    let dist = model.prior.symbol_posterior(&post.mean)?;
    Ok((dist.argmax(), dist))
}

pub fn classify_all<T: Scalar>(model: &Model<T>, xs: &[Example<T>]) -> Result<Vec<usize>> {
    xs.iter().map(|x| classify(model, x).map(|(k, _)| k)).collect()
}

fn check_labels(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Data(format!(
            "label lists differ in length: {} truth vs {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("label lists are empty".into()));
    }
    Ok(())
}

fn entropy_of_counts<I: IntoIterator<Item = usize>>(counts: I, total: usize) -> f64 {
    let n = total as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `1 - H(truth | pred) / H(truth)`, and 1 when `H(truth) = 0`.
pub fn homogeneity(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_labels(truth, pred)?;
    let n = truth.len();
    let mut class_counts: HashMap<usize, usize> = HashMap::new();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cluster_counts: HashMap<usize, usize> = HashMap::new();
    for (&c, &k) in truth.iter().zip(pred) {
        *class_counts.entry(c).or_default() += 1;
        *joint.entry((k, c)).or_default() += 1;
        *cluster_counts.entry(k).or_default() += 1;
    }
    let h_c = entropy_of_counts(class_counts.values().copied(), n);
    if h_c == 0.0 {
        return Ok(1.0);
    }
    // H(C|K) = -Σ n_kc/n log(n_kc/n_k)
    let h_ck: f64 = joint
        .iter()
        .map(|(&(k, _), &n_kc)| {
            let nk = cluster_counts[&k] as f64;
            -(n_kc as f64 / n as f64) * (n_kc as f64 / nk).ln()
        })
        .sum();
    Ok((1.0 - h_ck / h_c).clamp(0.0, 1.0))
}

/// Maximum-weight assignment on a square matrix (Hungarian method).
/// Returns `assign[row] = column`.
fn max_weight_assignment(w: &[Vec<i64>]) -> Vec<usize> {
    let n = w.len();
    let top = w.iter().flatten().copied().max().unwrap_or(0);
    // minimise cost = top - w, 1-based potentials
    let cost = |i: usize, j: usize| top - w[i - 1][j - 1];
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Accuracy after mapping each predicted cluster to a distinct true class
/// so that total agreement is maximal. `k` and `c` are the numbers of
/// clusters and classes.
pub fn matched_accuracy(truth: &[usize], pred: &[usize], k: usize, c: usize) -> Result<f64> {
    check_labels(truth, pred)?;
    if let Some(&bad) = pred.iter().find(|&&p| p >= k) {
        return Err(Error::Data(format!("predicted id {bad} out of range for {k} clusters")));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= c) {
        return Err(Error::Data(format!("true id {bad} out of range for {c} classes")));
    }
    let n = k.max(c);
    let mut confusion = vec![vec![0i64; n]; n];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[p][t] += 1;
    }
    let assign = max_weight_assignment(&confusion);
    let hits: i64 = assign.iter().enumerate().map(|(r, &col)| confusion[r][col]).sum();
    Ok(hits as f64 / truth.len() as f64)
}

fn ngram_counts<W: Eq + Hash + Clone>(s: &[W], n: usize) -> HashMap<&[W], usize> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for g in s.windows(n) {
            *m.entry(g).or_default() += 1;
        }
    }
    m
}

/// Corpus BLEU in `[0, 100]` over n = 1..4 with clipped counts and a
/// brevity penalty. Precisions for n ≥ 2 are smoothed as
/// `(matches + 1) / (total + 1)`; a zero unigram precision gives 0.
pub fn bleu<W: Eq + Hash + Clone>(refs: &[Vec<W>], hyps: &[Vec<W>]) -> Result<f64> {
    if refs.len() != hyps.len() {
        return Err(Error::Data(format!("{} references vs {} hypotheses", refs.len(), hyps.len())));
    }
    if refs.is_empty() {
        return Err(Error::Data("BLEU of an empty corpus".into()));
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut ref_len, mut hyp_len) = (0usize, 0usize);
    for (r, h) in refs.iter().zip(hyps) {
        ref_len += r.len();
        hyp_len += h.len();
        for n in 1..=4 {
            let rc = ngram_counts(r, n);
            let hc = ngram_counts(h, n);
            totals[n - 1] += hc.values().sum::<usize>();
            matches[n - 1] += hc.iter().map(|(g, &c)| c.min(*rc.get(g).unwrap_or(&0))).sum::<usize>();
        }
    }
    if matches[0] == 0 || hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_p = (matches[0] as f64 / totals[0] as f64).ln();
    for n in 1..4 {
        log_p += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if hyp_len >= ref_len { 0.0 } else { 1.0 - ref_len as f64 / hyp_len as f64 };
    Ok(100.0 * (bp + log_p / 4.0).exp())
}

/// BLEU between inputs and their greedy reconstructions from the posterior
/// mean.
pub fn bleu_reconstruction<T: Scalar>(model: &Model<T>, xs: &[Example<T>]) -> Result<f64> {
    let mut refs = Vec::with_capacity(xs.len());
    let mut hyps = Vec::with_capacity(xs.len());
    for x in xs {
        let Example::Sequence(s) = x else {
            return Err(Error::Data("BLEU needs sequence observations".into()));
        };
        let mu = model.encoder.encode(x)?.mean;
        let Example::Sequence(h) = model.decoder.decode_mean(&mu)? else {
            return Err(Error::Data("BLEU needs a sequence decoder".into()));
        };
        refs.push(s.tokens.clone());
        hyps.push(h.tokens);
    }
    bleu(&refs, &hyps)
}

pub const WORD_KL_EPSILON: f64 = 1e-10;

/// `KL(freq_a || freq_b)` over unigram frequencies, with `ε = 1e-10` added
/// to every frequency of `corpus_b` (not renormalized). Clamped at 0.
pub fn word_kl<W: Eq + Hash + Clone>(corpus_a: &[Vec<W>], corpus_b: &[Vec<W>]) -> Result<f64> {
    let freq = |c: &[Vec<W>]| -> Result<(HashMap<W, usize>, usize)> {
        let mut m = HashMap::new();
        let mut total = 0;
        for s in c {
            for w in s {
                *m.entry(w.clone()).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::Data("word-level KL of an empty corpus".into()));
        }
        Ok((m, total))
    };
    let (fa, na) = freq(corpus_a)?;
    let (fb, nb) = freq(corpus_b)?;
    let kl: f64 = fa
        .iter()
        .map(|(w, &ca)| {
            let p = ca as f64 / na as f64;
            let q = *fb.get(w).unwrap_or(&0) as f64 / nb as f64 + WORD_KL_EPSILON;
            p * (p / q).ln()
        })
        .sum();
    Ok(kl.max(0.0))
}

/// `log E_{p0}[exp F(z)]` by the mean over `n` draws from `N(0, I)`.
pub fn log_partition_estimate<T: Scalar, R: Rng + ?Sized>(prior: &EnergyParams<T>, n: usize, rng: &mut R) -> Result<T> {
    if n == 0 {
        return Err(Error::Evaluation("log-partition estimate needs at least one draw".into()));
    }
    let mut f = Vec::with_capacity(n);
    for _ in 0..n {
        let z = standard_normal_vec(prior.latent_dim(), rng);
        f.push(prior.marginal_energy(&z)?);
    }
    Ok(log_sum_exp(&f) - T::lit((n as f64).ln()))
}

/// `log (1/n) Σ_i exp(log_joint(z_i) - log_q(z_i))` with `z_i` drawn by
/// `propose`. All-`-∞` weights are an error.
pub fn importance_log_marginal<T, R, P, Q, J>(n: usize, rng: &mut R, mut propose: P, mut log_q: Q, mut log_joint: J) -> Result<T>
where
    T: Scalar,
    R: Rng + ?Sized,
    P: FnMut(&mut R) -> Vec<T>,
    Q: FnMut(&[T]) -> T,
    J: FnMut(&[T]) -> Result<T>,
{
    if n == 0 {
        return Err(Error::Evaluation("importance sampling needs at least one sample".into()));
    }
    let mut logw = Vec::with_capacity(n);
    for _ in 0..n {
        let z = propose(rng);
        logw.push(log_joint(&z)? - log_q(&z));
    }
    let lse = log_sum_exp(&logw);
    if !lse.is_finite() {
        return Err(Error::Evaluation(format!("importance weights are degenerate (log-sum {lse})")));
    }
    Ok(lse - T::lit((n as f64).ln()))
}

pub const DEFAULT_IS_SAMPLES: usize = 500;
pub const DEFAULT_LOG_Z_SAMPLES: usize = 100_000;

/// `-log p(x)` estimated with `n` encoder proposals; `log_partition` is the
/// prior's `log Z` (see [`log_partition_estimate`]).
pub fn nll_importance_sampling<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    x: &Example<T>,
    n: usize,
    log_partition: T,
    rng: &mut R,
) -> Result<T> {
    let post = model.encoder.encode(x)?;
    let log_marginal = importance_log_marginal(
        n,
        rng,
        |r| post.reparam_sample(r).0,
        |z| post.log_density(z),
        |z| Ok(model.decoder.log_likelihood(x, z)? + model.prior.unnormalized_log_prior(z)?),
    )?;
    Ok(-(log_marginal - log_partition))
}

/// Mean single-draw ELBO, `recon - KL(q || p0) + F(z) - log Z`.
pub fn mean_elbo<T: Scalar, R: Rng + ?Sized>(model: &Model<T>, xs: &[Example<T>], log_partition: T, rng: &mut R) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Data("ELBO of an empty dataset".into()));
    }
    let mut s = 0.0;
    for x in xs {
        let b = crate::objectives::elbo_terms(model, x, rng)?;
        s += b.recon - b.kl + b.prior_energy - log_partition.as_f64();
    }
    Ok(s / xs.len() as f64)
}

/// Fraction of `n` observations generated from `p(z | y = label)` that
/// `judge` assigns to `label`. A single-category prior scores 1.
pub fn attribute_control_accuracy<T, R, J>(
    model: &Model<T>,
    label: usize,
    n: usize,
    mut judge: J,
    langevin: &LangevinConfig,
    rng: &mut R,
) -> Result<f64>
where
    T: Scalar,
    R: Rng + ?Sized,
    J: FnMut(&Example<T>) -> Result<usize>,
{
    if model.n_classes() == 1 {
        return Ok(1.0);
    }
    if n == 0 {
        return Err(Error::Evaluation("attribute control needs at least one sample".into()));
    }
    let zs = conditional_prior_samples(&model.prior, label, langevin, n, rng)?;
    let mut hits = 0usize;
    for z in &zs {
        let x = model.decoder.decode_mean(z)?;
        if judge(&x)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// One line of an evaluation report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
    pub checkpoint_id: String,
}

pub const REPORT_HEADER: &str = "metric\tvalue\tn\tseed\tcheckpoint_id";

pub fn report_text(rows: &[ReportRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}\t{:.9e}\t{}\t{}\t{}", r.metric, r.value, r.n, r.seed, r.checkpoint_id);
    }
    s
}
