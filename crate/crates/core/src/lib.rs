//! Clustering by direct estimation of a valid pairwise adjacency matrix.
//!
//! Pair similarities become unary energies on binary "same cluster"
//! variables, a triplet factor forbids triangles with exactly two links, and
//! min-sum loopy belief propagation searches for a low-energy assignment. A
//! final transitive merge turns whatever adjacency remains into a partition.
//!
//! Modules:
//! - [`model`]: pair keys, energies, the pair table, partitions
//! - [`potentials`]: similarities, the probability transform, constraints
//! - [`engine`]: message passing, convergence trace, exhaustive oracle
//! - [`knn`]: exact and k-d forest nearest-neighbor graphs
//! - [`metrics`]: pairwise and BCubed precision / recall / F
//! - [`datasets`]: toy shapes and planted instances
//! - [`io`]: file formats and the stats report
//! - [`pipeline`]: configuration and the end-to-end run
//! - [`cli`]: the `conpac` command line

pub mod cli;
pub mod datasets;
pub mod engine;
pub mod error;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod potentials;

pub use engine::{run, BpConfig, ConvergenceTrace};
pub use error::{Error, Result};
pub use model::{canonical, EnergyPair, PairKey, PairState, PairTable, Partition};
pub use pipeline::{cluster, Input, Mode, RunConfig};
