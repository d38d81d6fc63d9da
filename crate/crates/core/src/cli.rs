//! Command-line surface: `cluster`, `eval`, `toygen`.
//!
//! Exit codes: 0 success, 1 invalid flags or parameters, 2 I/O, parse, or
//! data errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::datasets::{self, ToyKind, ToySpec, DEFAULT_TOY_N, DEFAULT_TOY_NOISE};
use crate::engine::{BpConfig, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::io::{self, FeatureFormat, StatsReport};
use crate::knn::{KnnConfig, DEFAULT_K, DEFAULT_NUM_TREES, DEFAULT_SEARCH_SIZE, DEFAULT_SEED};
use crate::metrics::{evaluate, LabeledPartition};
use crate::pipeline::{self, Input, Mode, RunConfig};
use crate::potentials::{DEFAULT_EPS_CLAMP, DEFAULT_E_CON, DEFAULT_TAU};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "conpac",
    version,
    about = "Pairwise CRF clustering with min-sum belief propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cluster features or a precomputed similarity matrix.
    Cluster(ClusterArgs),
    /// Score predicted labels against truth labels.
    Eval(EvalArgs),
    /// Generate a 2-D toy dataset.
    Toygen(ToygenArgs),
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Feature file (CSV, or binary when the extension is .bin).
    #[arg(
        long,
        conflicts_with = "similarity",
        required_unless_present = "similarity"
    )]
    features: Option<PathBuf>,
    /// Square CSV similarity matrix.
    #[arg(long)]
    similarity: Option<PathBuf>,
    /// Override the feature format: csv or binary.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// full or knn.
    #[arg(long, default_value = "full")]
    mode: String,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Brute-force k-NN instead of the k-d forest.
    #[arg(long)]
    exact_knn: bool,
    #[arg(long, default_value_t = DEFAULT_NUM_TREES)]
    num_trees: usize,
    #[arg(long, default_value_t = DEFAULT_SEARCH_SIZE)]
    search_size: usize,
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_E_CON)]
    e_con: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_CLAMP)]
    eps_clamp: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Keep raw (unnormalized) message energies.
    #[arg(long)]
    no_normalize: bool,
    /// Leave the pair's own unary out of message updates.
    #[arg(long)]
    no_unary_in_update: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads, 0 = all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    labels_out: PathBuf,
    /// Stats report path; printed to stdout when omitted.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Export k-NN edges as "i j similarity" lines (knn mode only).
    #[arg(long)]
    graph_out: Option<PathBuf>,
    /// Optional truth labels; adds metrics to the stats report.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Truth labels; -1 marks an unlabeled point.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ToygenArgs {
    /// circles, moons, varied, aniso, blobs, or none.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = DEFAULT_TOY_N)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_TOY_NOISE)]
    noise: f64,
    /// RBF bandwidth; defaults per kind.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_prefix: PathBuf,
    /// Skip writing the RBF similarity matrix.
    #[arg(long)]
    no_similarity: bool,
}

/// Parses arguments (including the program name) and runs a subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Eval(a) => eval(a),
        Command::Toygen(a) => toygen(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn emit_stats(stats: &StatsReport, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => stats.write(p),
        None => {
            print!("{}", stats.to_toml()?);
            Ok(())
        }
    }
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let mode: Mode = args.mode.parse()?;
    let format = match args.format.as_deref() {
        None => None,
        Some("csv") => Some(FeatureFormat::Csv),
        Some("binary") => Some(FeatureFormat::Binary),
        Some(other) => {
            return Err(Error::InvalidParameter(format!(
                "unknown feature format '{other}'"
            )))
        }
    };
    let cfg = RunConfig {
        tau: args.tau,
        eps_clamp: args.eps_clamp,
        mode,
        knn: KnnConfig {
            k: args.k,
            num_trees: args.num_trees,
            search_size: args.search_size,
            exact: args.exact_knn,
            seed: args.seed,
        },
        bp: BpConfig {
            max_iters: args.max_iters,
            normalize_messages: !args.no_normalize,
            include_unary_in_update: !args.no_unary_in_update,
        },
        e_con: args.e_con,
        threads: args.threads,
    };
    cfg.validate()?;
    if args.graph_out.is_some() && mode != Mode::Knn {
        return Err(Error::InvalidParameter(
            "--graph-out requires --mode knn".into(),
        ));
    }

    let start = Instant::now();
    let features;
    let similarity;
    let input = match (&args.features, &args.similarity) {
        (Some(path), _) => {
            let fmt = format.unwrap_or_else(|| FeatureFormat::from_path(path));
            features = io::read_features(path, fmt)?;
            Input::Features(&features)
        }
        (None, Some(path)) => {
            similarity = io::read_similarity(path)?;
            Input::Similarity(&similarity)
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "one of --features or --similarity is required".into(),
            ))
        }
    };
    let constraints = args
        .constraints
        .as_deref()
        .map(io::read_constraints)
        .transpose()?;
    let truth = args
        .truth
        .as_deref()
        .map(io::read_truth_labels)
        .transpose()?;
    let load_s = start.elapsed().as_secs_f64();

    let out = pipeline::with_threads(cfg.threads, || {
        pipeline::cluster(input, &cfg, constraints.as_ref())
    })??;

    io::write_labels(&args.labels_out, out.partition.labels())?;
    if let (Some(path), Some(graph)) = (&args.graph_out, &out.graph) {
        let sim = |i: usize, j: usize| match input {
            Input::Features(f) => {
                crate::potentials::cosine_similarity(f.row(i), f.row(j)).unwrap_or(0.0)
            }
            Input::Similarity(s) => s.get(i, j),
        };
        io::write_graph(path, graph, sim)?;
    }

    let mut stats = StatsReport::new("cluster");
    stats.num_points = out.partition.len();
    stats.num_clusters = out.partition.num_clusters();
    stats.num_nonsingleton = out.partition.num_nonsingleton();
    stats.mode = Some(mode.to_string());
    stats.num_pairs = Some(out.num_pairs);
    stats.iterations = Some(out.trace.iterations);
    stats.converged = Some(out.trace.converged);
    stats.inconsistent_triplets = Some(out.trace.inconsistent_triplets.clone());
    stats.update_list_sizes = Some(
        out.trace
            .update_list_sizes
            .iter()
            .map(|&s| s as u64)
            .collect(),
    );
    stats.merge_flips = Some(out.trace.merge_flips);
    stats.inconsistent_after_merge = Some(out.trace.inconsistent_after_merge);
    stats.time_load_s = Some(load_s);
    stats.time_graph_s = Some(out.times.graph_s);
    stats.time_potentials_s = Some(out.times.potentials_s);
    stats.time_inference_s = Some(out.times.inference_s);
    if let Some(truth) = truth {
        let lp = LabeledPartition::new(out.partition.labels().to_vec(), truth)?;
        fill_eval_stats(&mut stats, &lp)?;
    }
    emit_stats(&stats, args.stats_out.as_deref())
}

fn fill_eval_stats(stats: &mut StatsReport, lp: &LabeledPartition) -> Result<()> {
    let report = evaluate(lp)?;
    stats.set_metrics(&report);
    stats.num_labeled = Some(lp.num_labeled());
    let mut classes: Vec<usize> = lp.truth().iter().flatten().copied().collect();
    classes.sort_unstable();
    classes.dedup();
    stats.num_truth_classes = Some(classes.len());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let pred = io::read_pred_labels(&args.pred)?;
    let truth = io::read_truth_labels(&args.truth)?;
    let lp = LabeledPartition::new(pred, truth)?;
    let partition = crate::model::Partition::from_labels(lp.pred());
    let mut stats = StatsReport::new("eval");
    stats.num_points = partition.len();
    stats.num_clusters = partition.num_clusters();
    stats.num_nonsingleton = partition.num_nonsingleton();
    fill_eval_stats(&mut stats, &lp)?;
    emit_stats(&stats, args.stats_out.as_deref())
}

fn toygen(args: ToygenArgs) -> Result<()> {
    let kind: ToyKind = args.kind.parse()?;
    let spec = ToySpec {
        kind,
        n: args.n,
        noise: args.noise,
        gamma: args.gamma.unwrap_or(kind.default_gamma()),
        seed: args.seed,
    };
    let (points, truth) = datasets::generate_toy(&spec)?;
    let (features_path, truth_path, sim_path) = io::toy_paths(&args.out_prefix);
    io::write_features(&features_path, &points, FeatureFormat::Csv)?;
    io::write_labels(&truth_path, &truth)?;
    if !args.no_similarity {
        io::write_similarity(&sim_path, &datasets::rbf_matrix(&points, spec.gamma))?;
    }
    Ok(())
}
