//! Synthetic datasets and grid density estimates for 2-D diagnostics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Example, SequenceExample, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2-D points with the id of the mixture component that produced each one.
#[derive(Clone, Debug, PartialEq)]
pub struct PointDataset {
    pub points: Vec<[f64; 2]>,
    pub components: Vec<usize>,
}

impl PointDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Observations without labels.
    pub fn examples<T: Scalar>(&self) -> Vec<Example<T>> {
        self.points
            .iter()
            .map(|p| Example::point(vec![T::lit(p[0]), T::lit(p[1])], None))
            .collect()
    }

    /// Observations labeled with their component id.
    pub fn labeled_examples<T: Scalar>(&self) -> Vec<Example<T>> {
        self.points
            .iter()
            .zip(&self.components)
            .map(|(p, &c)| Example::point(vec![T::lit(p[0]), T::lit(p[1])], Some(c)))
            .collect()
    }
}

pub const EIGHT_GAUSSIANS_RADIUS: f64 = 2.0;
pub const EIGHT_GAUSSIANS_STD: f64 = 0.1;

/// Centers of the eight-Gaussians mixture, counter-clockwise from angle 0.
pub fn eight_gaussian_centers(radius: f64) -> Vec<[f64; 2]> {
    (0..8)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 8.0;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Equal-weight mixture of eight isotropic Gaussians on a circle.
pub fn eight_gaussians(n: usize, radius: f64, std: f64, seed: u64) -> PointDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = eight_gaussian_centers(radius);
    let mut points = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..8);
        let e0: f64 = StandardNormal.sample(&mut rng);
        let e1: f64 = StandardNormal.sample(&mut rng);
        points.push([centers[k][0] + std * e0, centers[k][1] + std * e1]);
        components.push(k);
    }
    PointDataset { points, components }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinwheelParams {
    pub arms: usize,
    pub radial_std: f64,
    pub tangential_std: f64,
    pub rate: f64,
}

impl Default for PinwheelParams {
    fn default() -> Self {
        Self { arms: 5, radial_std: 0.3, tangential_std: 0.05, rate: 0.25 }
    }
}

/// Arm base angle for `arm` out of `arms`.
pub fn pinwheel_arm_angle(arm: usize, arms: usize) -> f64 {
    2.0 * PI * arm as f64 / arms as f64
}

/// Spiral arms: a point at radial offset `r` around 1 with tangential
/// offset `t` is rotated by its arm angle plus `rate * exp(r)`, then
/// scaled by 2.
pub fn pinwheel(n: usize, params: PinwheelParams, seed: u64) -> Result<PointDataset> {
    if params.arms == 0 {
        return Err(Error::Config("pinwheel needs at least one arm".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let arm = rng.random_range(0..params.arms);
        let e0: f64 = StandardNormal.sample(&mut rng);
        let e1: f64 = StandardNormal.sample(&mut rng);
        let r = 1.0 + params.radial_std * e0;
        let t = params.tangential_std * e1;
        let angle = pinwheel_arm_angle(arm, params.arms) + params.rate * r.exp();
        let (s, c) = angle.sin_cos();
        points.push([2.0 * (c * r - s * t), 2.0 * (s * r + c * t)]);
        components.push(arm);
    }
    Ok(PointDataset { points, components })
}

/// A class-conditional toy grammar. Each class owns its nouns, verbs and
/// adjectives; determiners and adverbs are shared. Sentences open with a
/// class-owned word and the shared slots have fewer than `K` options, so no
/// class-independent factor splits the corpus as evenly as the classes do.
#[derive(Clone, Debug, PartialEq)]
pub struct GrammarSpec {
    pub nouns: Vec<Vec<String>>,
    pub verbs: Vec<Vec<String>>,
    pub adjectives: Vec<Vec<String>>,
    pub determiners: Vec<String>,
    pub adverbs: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for GrammarSpec {
    /// Four classes, 60 words in total.
    fn default() -> Self {
        Self {
            nouns: vec![
                words(&["cat", "dog", "horse", "rabbit", "fox"]),
                words(&["bread", "soup", "cheese", "apple", "pie"]),
                words(&["rain", "storm", "wind", "cloud", "snow"]),
                words(&["ball", "goal", "team", "coach", "match"]),
            ],
            verbs: vec![
                words(&["chases", "bites", "licks", "sniffs"]),
                words(&["tastes", "bakes", "feeds", "fills"]),
                words(&["soaks", "covers", "blows", "chills"]),
                words(&["scores", "kicks", "trains", "wins"]),
            ],
            adjectives: vec![
                words(&["furry", "wild", "tame", "sleepy", "small"]),
                words(&["fresh", "salty", "sweet", "warm", "baked"]),
                words(&["grey", "cold", "heavy", "misty", "windy"]),
                words(&["fast", "strong", "rival", "young", "home"]),
            ],
            determiners: words(&["the", "a"]),
            adverbs: words(&["today", "again"]),
        }
    }
}

impl GrammarSpec {
    pub fn n_classes(&self) -> usize {
        self.nouns.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.nouns.len();
        if k == 0 || self.verbs.len() != k || self.adjectives.len() != k {
            return Err(Error::Config("grammar needs matching non-empty word lists per class".into()));
        }
        let empty = |l: &Vec<Vec<String>>| l.iter().any(Vec::is_empty);
        if empty(&self.nouns) || empty(&self.verbs) || self.determiners.is_empty() || self.adverbs.is_empty() {
            return Err(Error::Config("grammar word lists must be non-empty".into()));
        }
        Ok(())
    }

    /// Words of class `c` in a fixed order.
    pub fn class_words(&self, c: usize) -> Vec<&str> {
        self.nouns[c]
            .iter()
            .chain(&self.verbs[c])
            .chain(&self.adjectives[c])
            .map(String::as_str)
            .collect()
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut all: Vec<&str> = Vec::new();
        all.extend(self.determiners.iter().map(String::as_str));
        all.extend(self.adverbs.iter().map(String::as_str));
        for c in 0..self.n_classes() {
            all.extend(self.class_words(c));
        }
        Vocabulary::from_tokens(all)
    }

    /// One sentence of class `c`, 4 to 9 words long:
    /// `adj{0,2} noun verb det adj? noun adv?`, or `noun verb det noun`.
    pub fn sentence<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> Vec<&str> {
        let adj = &self.adjectives[c];
        let mut s = Vec::new();
        if rng.random_bool(0.2) {
            s.push(pick(&self.nouns[c], rng));
            s.push(pick(&self.verbs[c], rng));
            s.push(pick(&self.determiners, rng));
            s.push(pick(&self.nouns[c], rng));
            return s;
        }
        if !adj.is_empty() {
            for _ in 0..rng.random_range(0..=2) {
                s.push(pick(adj, rng));
            }
        }
        s.push(pick(&self.nouns[c], rng));
        s.push(pick(&self.verbs[c], rng));
        s.push(pick(&self.determiners, rng));
        if rng.random_bool(0.5) && !adj.is_empty() {
            s.push(pick(adj, rng));
        }
        s.push(pick(&self.nouns[c], rng));
        if rng.random_bool(0.5) {
            s.push(pick(&self.adverbs, rng));
        }
        s
    }
}

fn pick<'a, R: Rng + ?Sized>(list: &'a [String], rng: &mut R) -> &'a str {
    list[rng.random_range(0..list.len())].as_str()
}

/// Labeled toy sentences and their vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyCorpus {
    pub vocab: Vocabulary,
    pub examples: Vec<SequenceExample>,
}

/// `n` sentences with classes drawn uniformly.
pub fn toy_corpus(spec: &GrammarSpec, n: usize, seed: u64) -> Result<ToyCorpus> {
    spec.validate()?;
    let vocab = spec.vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|_| {
            let c = rng.random_range(0..spec.n_classes());
            SequenceExample::labeled(vocab.encode(&spec.sentence(c, &mut rng)), c)
        })
        .collect();
    Ok(ToyCorpus { vocab, examples })
}

/// Regular evaluation grid; nodes sit at cell centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, resolution: usize) -> Self {
        Self { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width, nx: resolution, ny: resolution }
    }

    /// Bounding box of `points` padded by `margin` on every side.
    pub fn covering(points: &[[f64; 2]], margin: f64, resolution: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("cannot size a grid for an empty sample".into()));
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        Ok(Self { x_min: x0 - margin, x_max: x1 + margin, y_min: y0 - margin, y_max: y1 + margin, nx: resolution, ny: resolution })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.x_min + (ix as f64 + 0.5) * self.dx(), self.y_min + (iy as f64 + 0.5) * self.dy()]
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::Config("grid needs positive extent and resolution".into()));
        }
        Ok(())
    }
}

/// Density values on a grid, row-major with `y` as the outer index.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub grid: GridSpec,
    pub bandwidth: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.nx + ix]
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Grid nodes that are strict maxima over their 8-neighbourhood and
    /// exceed `min_fraction` of the global maximum.
    pub fn local_maxima(&self, min_fraction: f64) -> Vec<[f64; 2]> {
        let g = &self.grid;
        let top = self.values.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let v = self.at(ix, iy);
                if v < min_fraction * top || v <= 0.0 {
                    continue;
                }
                let mut is_max = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                        if jx < 0 || jy < 0 || jx >= g.nx as i64 || jy >= g.ny as i64 {
                            continue;
                        }
                        if self.at(jx as usize, jy as usize) >= v {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    out.push(g.node(ix, iy));
                }
            }
        }
        out
    }

    /// Tab-separated text: one line per grid row, `y` increasing.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for iy in 0..self.grid.ny {
            let row: Vec<String> = (0..self.grid.nx).map(|ix| format!("{:.9e}", self.at(ix, iy))).collect();
            s.push_str(&row.join("\t"));
            s.push('\n');
        }
        s
    }
}

/// Scott's rule for a 2-D isotropic Gaussian kernel: mean per-axis standard
/// deviation times `n^(-1/6)`.
pub fn scott_bandwidth(points: &[[f64; 2]]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Data("bandwidth selection needs at least two points".into()));
    }
    let mut sd = 0.0;
    for axis in 0..2 {
        let mean = points.iter().map(|p| p[axis]).sum::<f64>() / n as f64;
        let var = points.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        sd += var.sqrt() / 2.0;
    }
    if !(sd > 0.0) {
        return Err(Error::Data("sample has zero spread; choose a bandwidth explicitly".into()));
    }
    Ok(sd * (n as f64).powf(-1.0 / 6.0))
}

/// Gaussian kernel density estimate evaluated at every grid node.
pub fn kde_grid(points: &[[f64; 2]], bandwidth: f64, grid: GridSpec) -> Result<DensityGrid> {
    if points.is_empty() {
        return Err(Error::Data("kernel density estimate of an empty sample".into()));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    grid.validate()?;
    let norm = 1.0 / (2.0 * PI * bandwidth * bandwidth * points.len() as f64);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let [gx, gy] = grid.node(ix, iy);
            let s: f64 = points
                .iter()
                .map(|p| (-((p[0] - gx).powi(2) + (p[1] - gy).powi(2)) * inv).exp())
                .sum();
            values.push(norm * s);
        }
    }
    Ok(DensityGrid { grid, bandwidth, values })
}

/// Number of `centers` that receive more than `min_share` of the samples
/// within `radius`.
pub fn modes_recovered(samples: &[[f64; 2]], centers: &[[f64; 2]], radius: f64, min_share: f64) -> usize {
    if samples.is_empty() {
        return 0;
    }
    centers
        .iter()
        .filter(|c| {
            let hits = samples
                .iter()
                .filter(|p| (p[0] - c[0]).hypot(p[1] - c[1]) <= radius)
                .count();
            hits as f64 / samples.len() as f64 > min_share
        })
        .count()
}
