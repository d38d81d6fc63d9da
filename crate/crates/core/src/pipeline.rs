//! End-to-end clustering: similarities, optional k-NN restriction, unary
//! potentials, constraints, inference.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::engine::{self, BpConfig, ConvergenceTrace};
use crate::error::{Error, Result};
use crate::knn::{self, KnnConfig, KnnGraph};
use crate::model::{PairKey, Partition};
use crate::potentials::{
    self, dot, ConstraintSet, FeatureMatrix, SimilarityMatrix, TransformParams, DEFAULT_EPS_CLAMP,
    DEFAULT_E_CON, DEFAULT_TAU,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    Full,
    Knn,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Knn => "knn",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "knn" => Ok(Mode::Knn),
            other => Err(Error::InvalidParameter(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub tau: f64,
    pub eps_clamp: f64,
    pub mode: Mode,
    pub knn: KnnConfig,
    pub bp: BpConfig,
    pub e_con: f64,
    /// Worker threads; 0 picks the hardware parallelism.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            eps_clamp: DEFAULT_EPS_CLAMP,
            mode: Mode::Full,
            knn: KnnConfig::default(),
            bp: BpConfig::default(),
            e_con: DEFAULT_E_CON,
            threads: 0,
        }
    }
}

impl RunConfig {
    /// Checks everything that does not depend on the dataset size.
    pub fn validate(&self) -> Result<()> {
        TransformParams::new(self.tau, self.eps_clamp)?;
        self.bp.validate()?;
        if !(self.e_con.is_finite() && self.e_con > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "constraint energy must be positive and finite, got {}",
                self.e_con
            )));
        }
        if self.mode == Mode::Knn {
            if self.knn.k == 0 {
                return Err(Error::InvalidParameter("k must be at least 1".into()));
            }
            if self.knn.num_trees == 0 {
                return Err(Error::InvalidParameter(
                    "num_trees must be at least 1".into(),
                ));
            }
            if self.knn.search_size < self.knn.k {
                return Err(Error::InvalidParameter(format!(
                    "search_size ({}) must be at least k ({})",
                    self.knn.search_size, self.knn.k
                )));
            }
        }
        Ok(())
    }

    pub fn transform(&self) -> Result<TransformParams> {
        TransformParams::new(self.tau, self.eps_clamp)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Features(&'a FeatureMatrix),
    Similarity(&'a SimilarityMatrix),
}

impl Input<'_> {
    pub fn n(&self) -> usize {
        match self {
            Input::Features(f) => f.n(),
            Input::Similarity(s) => s.n(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub graph_s: f64,
    pub potentials_s: f64,
    pub inference_s: f64,
}

#[derive(Clone, Debug)]
pub struct ClusterOutput {
    pub partition: Partition,
    pub trace: ConvergenceTrace,
    pub num_pairs: usize,
    /// The k-NN graph in k-NN mode.
    pub graph: Option<KnnGraph>,
    pub times: PhaseTimes,
}

/// Runs `f` on a dedicated pool with `threads` workers (0 = automatic).
pub fn with_threads<T, F>(threads: usize, f: F) -> Result<T>
where
    F: FnOnce() -> T + Send,
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Clusters `input` under `cfg`, optionally with pairwise supervision.
///
/// Runs on the current rayon pool; wrap in [`with_threads`] to pin the
/// worker count.
pub fn cluster(
    input: Input<'_>,
    cfg: &RunConfig,
    constraints: Option<&ConstraintSet>,
) -> Result<ClusterOutput> {
    cfg.validate()?;
    let params = cfg.transform()?;
    let n = input.n();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 points, got {n}"
        )));
    }
    if let Some(c) = constraints {
        c.validate(n)?;
    }
    let mut times = PhaseTimes::default();

    let start = Instant::now();
    let unit = match input {
        Input::Features(f) => Some(f.normalized()?),
        Input::Similarity(_) => None,
    };
    let sim = |i: usize, j: usize| match (&unit, input) {
        (Some(u), _) => dot(u.row(i), u.row(j)),
        (None, Input::Similarity(s)) => s.get(i, j),
        (None, Input::Features(_)) => unreachable!("features are normalized up front"),
    };

    let (mut table, graph) = match cfg.mode {
        Mode::Full => {
            let dense = match input {
                Input::Features(_) => Some(SimilarityMatrix::from_fn(n, sim)),
                Input::Similarity(_) => None,
            };
            times.graph_s = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let table = match &dense {
                Some(d) => potentials::full_table(n, &params, |i, j| d.get(i, j)),
                None => potentials::full_table(n, &params, sim),
            };
            times.potentials_s = start.elapsed().as_secs_f64();
            (table, None)
        }
        Mode::Knn => {
            cfg.knn.validate(n)?;
            let graph = match input {
                Input::Features(f) => knn::build(f, &cfg.knn)?,
                Input::Similarity(s) => knn::exact_from_similarity(s, cfg.knn.k)?,
            };
            times.graph_s = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let mut edges: Vec<PairKey> = graph.edges().to_vec();
            if let Some(c) = constraints {
                edges.extend(c.pairs());
                edges.sort_unstable();
                edges.dedup();
            }
            let table = potentials::sparse_table(n, &edges, &params, sim)?;
            times.potentials_s = start.elapsed().as_secs_f64();
            (table, Some(graph))
        }
    };

    if let Some(c) = constraints {
        potentials::apply_constraints(&mut table, c, cfg.e_con)?;
    }

    let start = Instant::now();
    let (partition, trace) = engine::run(&mut table, &cfg.bp)?;
    times.inference_s = start.elapsed().as_secs_f64();

    Ok(ClusterOutput {
        partition,
        trace,
        num_pairs: table.len(),
        graph,
        times,
    })
}
