//! Synthetic inputs: 2-D toy shapes with RBF similarities, planted pair
//! tables with controllable noise, and planted clusters in feature space.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::PairTable;
use crate::potentials::{unary_energies, FeatureMatrix, SimilarityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ToyKind {
    Circles,
    Moons,
    Varied,
    Aniso,
    Blobs,
    None,
}

impl ToyKind {
    pub const ALL: [ToyKind; 6] = [
        ToyKind::Circles,
        ToyKind::Moons,
        ToyKind::Varied,
        ToyKind::Aniso,
        ToyKind::Blobs,
        ToyKind::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Circles => "circles",
            ToyKind::Moons => "moons",
            ToyKind::Varied => "varied",
            ToyKind::Aniso => "aniso",
            ToyKind::Blobs => "blobs",
            ToyKind::None => "none",
        }
    }

    /// RBF bandwidth tuned per kind: the ring shapes live in a unit box and
    /// are clustered on a sparse k-NN graph, the blob kinds span tens of
    /// units and are clustered on all pairs.
    pub fn default_gamma(self) -> f64 {
        match self {
            ToyKind::Circles | ToyKind::Moons => 5.0,
            _ => 0.03,
        }
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown toy dataset kind '{s}'")))
    }
}

pub const DEFAULT_TOY_N: usize = 500;
pub const DEFAULT_TOY_NOISE: f64 = 0.05;
const BLOB_CENTERS: usize = 3;
const BLOB_BOX: f64 = 10.0;
const VARIED_STD: [f64; 3] = [1.0, 2.5, 0.5];
const ANISO: [[f64; 2]; 2] = [[0.6, -0.6], [-0.4, 0.8]];
const CIRCLE_FACTOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToySpec {
    pub kind: ToyKind,
    pub n: usize,
    /// Standard deviation of the Gaussian jitter for circles and moons.
    pub noise: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl ToySpec {
    pub fn new(kind: ToyKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            noise: DEFAULT_TOY_NOISE,
            gamma: kind.default_gamma(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Splits `n` into `parts` sizes differing by at most one, larger first.
fn split_sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|p| n / parts + usize::from(p < n % parts))
        .collect()
}

fn blob_centers(rng: &mut ChaCha8Rng, stds: &[f64]) -> Vec<[f64; 2]> {
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(stds.len());
    while centers.len() < stds.len() {
        let c = [
            rng.random_range(-BLOB_BOX..BLOB_BOX),
            rng.random_range(-BLOB_BOX..BLOB_BOX),
        ];
        let s = stds[centers.len()];
        let clear = centers.iter().zip(stds).all(|(o, so)| {
            let d2 = (c[0] - o[0]).powi(2) + (c[1] - o[1]).powi(2);
            d2.sqrt() >= 3.0 * (s + so)
        });
        if clear {
            centers.push(c);
        }
    }
    centers
}

fn blobs(n: usize, stds: &[f64], rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Vec<usize>) {
    let centers = blob_centers(rng, stds);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (class, size) in split_sizes(n, stds.len()).into_iter().enumerate() {
        let normal = Normal::new(0.0, stds[class]).expect("positive std");
        for _ in 0..size {
            points.push([
                centers[class][0] + normal.sample(rng),
                centers[class][1] + normal.sample(rng),
            ]);
            labels.push(class);
        }
    }
    (points, labels)
}

fn add_noise(points: &mut [[f64; 2]], noise: f64, rng: &mut ChaCha8Rng) {
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("positive noise");
        for p in points {
            p[0] += normal.sample(rng);
            p[1] += normal.sample(rng);
        }
    }
}

/// Generates 2-D points and truth labels for one toy shape.
pub fn generate_toy(spec: &ToySpec) -> Result<(FeatureMatrix, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let (points, labels) = match spec.kind {
        ToyKind::Circles => {
            let sizes = split_sizes(n, 2);
            let mut points = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for (class, (&size, radius)) in sizes.iter().zip([1.0, CIRCLE_FACTOR]).enumerate() {
                for t in 0..size {
                    let angle = 2.0 * PI * t as f64 / size as f64;
                    points.push([radius * angle.cos(), radius * angle.sin()]);
                    labels.push(class);
                }
            }
            add_noise(&mut points, spec.noise, &mut rng);
            (points, labels)
        }
        ToyKind::Moons => {
            let sizes = split_sizes(n, 2);
            let mut points = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for (class, &size) in sizes.iter().enumerate() {
                for t in 0..size {
                    let angle = if size > 1 {
                        PI * t as f64 / (size - 1) as f64
                    } else {
                        0.0
                    };
                    points.push(if class == 0 {
                        [angle.cos(), angle.sin()]
                    } else {
                        [1.0 - angle.cos(), 0.5 - angle.sin()]
                    });
                    labels.push(class);
                }
            }
            add_noise(&mut points, spec.noise, &mut rng);
            (points, labels)
        }
        ToyKind::Blobs => blobs(n, &[1.0; BLOB_CENTERS], &mut rng),
        ToyKind::Varied => blobs(n, &VARIED_STD, &mut rng),
        ToyKind::Aniso => {
            let (points, labels) = blobs(n, &[1.0; BLOB_CENTERS], &mut rng);
            let points = points
                .into_iter()
                .map(|[x, y]| {
                    [
                        x * ANISO[0][0] + y * ANISO[1][0],
                        x * ANISO[0][1] + y * ANISO[1][1],
                    ]
                })
                .collect();
            (points, labels)
        }
        ToyKind::None => {
            let points = (0..n)
                .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect();
            (points, vec![0; n])
        }
    };
    // keep the generator's layout but present points in a seeded order
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let data = order.iter().flat_map(|&i| points[i]).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    Ok((FeatureMatrix::new(n, 2, data)?, labels))
}

pub fn rbf_similarity(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn rbf_matrix(points: &FeatureMatrix, gamma: f64) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(points.n(), |i, j| {
        rbf_similarity(points.row(i), points.row(j), gamma)
    })
}

/// Pair-level planted instance: probabilities are drawn directly per pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub sizes: Vec<usize>,
    pub genuine: (f64, f64),
    pub impostor: (f64, f64),
    /// Fraction of pairs whose probability `p` is replaced by `1 - p`.
    pub flip_fraction: f64,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn new(sizes: Vec<usize>, seed: u64) -> Self {
        Self {
            sizes,
            genuine: (0.8, 0.95),
            impostor: (0.05, 0.2),
            flip_fraction: 0.0,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "class sizes must be positive".into(),
            ));
        }
        for (name, (lo, hi)) in [("genuine", self.genuine), ("impostor", self.impostor)] {
            if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "{name} range ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return Err(Error::InvalidParameter(format!(
                "flip fraction {} outside [0, 1]",
                self.flip_fraction
            )));
        }
        Ok(())
    }

    /// Seeded class assignment: class blocks in a random point order.
    pub fn truth(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut truth: Vec<usize> = self
            .sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        truth.shuffle(&mut rng);
        truth
    }

    /// Genuine probability of every pair in canonical key order.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let truth = self.truth();
        let n = truth.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut probs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let (lo, hi) = if truth[i] == truth[j] {
                    self.genuine
                } else {
                    self.impostor
                };
                let u: f64 = rng.random();
                let flip: f64 = rng.random();
                let p = lo + (hi - lo) * u;
                probs.push(if flip < self.flip_fraction {
                    1.0 - p
                } else {
                    p
                });
            }
        }
        Ok(probs)
    }
}

/// Complete pair table with unaries drawn from the planted spec.
pub fn generate_planted(spec: &PlantedSpec) -> Result<(PairTable, Vec<usize>)> {
    let probs = spec.probabilities()?;
    let mut it = probs.into_iter();
    let table = PairTable::complete(spec.n(), |_, _| {
        unary_energies(it.next().expect("one per pair"))
    });
    Ok((table, spec.truth()))
}

/// Feature-level planted instance: Gaussian clusters around random unit
/// directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedFeatureSpec {
    pub num_classes: usize,
    pub class_size: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation around each center.
    pub spread: f64,
    pub seed: u64,
}

pub fn generate_planted_features(spec: &PlantedFeatureSpec) -> Result<(FeatureMatrix, Vec<usize>)> {
    if spec.num_classes == 0 || spec.class_size == 0 || spec.dim == 0 {
        return Err(Error::InvalidParameter(
            "planted feature layout has a zero size".into(),
        ));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "spread must be >= 0, got {}",
            spec.spread
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..spec.dim).map(|_| unit.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let n = spec.num_classes * spec.class_size;
    let mut truth: Vec<usize> = (0..n).map(|p| p / spec.class_size).collect();
    truth.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * spec.dim);
    for &class in &truth {
        for &c in &centers[class] {
            data.push(c + spec.spread * unit.sample(&mut rng));
        }
    }
    Ok((FeatureMatrix::new(n, spec.dim, data)?, truth))
}
