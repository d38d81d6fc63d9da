//! Min-sum loopy belief propagation over pair variables with the triplet
//! consistency factor.
//!
//! Every pair `(i, j)` carries an isotropic message: one energy per state,
//! sent unchanged to every factor the pair touches. An update for `(i, j)`
//! sums, over each third point `k` linked to `i` or `j` in the previous
//! iteration, the cheapest consistent assignment of `(i, k)` and `(j, k)`.
//! Inconsistent assignments (exactly two links in a triangle) carry an
//! unbounded penalty and are never enumerated.
//!
//! The table shape selects the mode: a complete table runs the full model,
//! a sparse table restricts third points to those whose pairs with both `i`
//! and `j` exist, which is the fixed neighbor structure of the k-NN variant.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{partition_from_adjacency, EnergyPair, PairState, PairTable, Partition};

/// Largest point count accepted by [`exhaustive_min_energy_partition`].
pub const EXHAUSTIVE_LIMIT: usize = 12;

pub const DEFAULT_MAX_ITERS: usize = 50;

/// Energy of a triangle's state triple: 1 iff exactly two pairs are linked.
pub fn triplet_energy(ij: PairState, ik: PairState, jk: PairState) -> u8 {
    u8::from(ij.as_bit() + ik.as_bit() + jk.as_bit() == 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BpConfig {
    pub max_iters: usize,
    /// Subtract the smaller energy from both states after each update.
    pub normalize_messages: bool,
    /// Add the pair's own unary energy to every update, not only at
    /// initialization.
    pub include_unary_in_update: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            normalize_messages: true,
            include_unary_in_update: true,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-point sorted lists of linked partners under the current states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    lists: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn from_states(table: &PairTable) -> Self {
        Self {
            lists: table.adjacency_lists(),
        }
    }

    pub fn neighbors(&self, point: usize) -> &[usize] {
        &self.lists[point]
    }

    /// Points other than `i` and `j` linked to `i` or `j`, ascending.
    pub fn shared(&self, i: usize, j: usize) -> Vec<usize> {
        let (a, b) = (&self.lists[i], &self.lists[j]);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut x, mut y) = (0, 0);
        while x < a.len() || y < b.len() {
            let next = match (a.get(x), b.get(y)) {
                (Some(&u), Some(&v)) if u == v => {
                    x += 1;
                    y += 1;
                    u
                }
                (Some(&u), Some(&v)) if u < v => {
                    x += 1;
                    u
                }
                (Some(_), Some(&v)) => {
                    y += 1;
                    v
                }
                (Some(&u), None) => {
                    x += 1;
                    u
                }
                (None, Some(&v)) => {
                    y += 1;
                    v
                }
                (None, None) => unreachable!(),
            };
            if next != i && next != j {
                out.push(next);
            }
        }
        out
    }
}

/// Pair indices scheduled for the next message update.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateList(Vec<usize>);

impl UpdateList {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Scans every triangle of the pair graph centered on a point with two
/// links. Each inconsistent triangle has exactly one such center, so the
/// count is exact.
fn scan_inconsistent(table: &PairTable, graph: &NeighborGraph, mark: bool) -> (u64, UpdateList) {
    let marks: Vec<AtomicBool> = if mark {
        (0..table.len()).map(|_| AtomicBool::new(false)).collect()
    } else {
        Vec::new()
    };
    let count = (0..table.n_points())
        .into_par_iter()
        .map(|center| {
            let nbrs = graph.neighbors(center);
            let mut local = 0u64;
            for (x, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[x + 1..] {
                    let Some(ab) = table.index_of(a, b) else {
                        continue;
                    };
                    if table.state(ab).is_linked() {
                        continue;
                    }
                    local += 1;
                    if mark {
                        marks[ab].store(true, Ordering::Relaxed);
                        // both links exist: they are in the neighbor lists
                        marks[table.index_of(center, a).unwrap()].store(true, Ordering::Relaxed);
                        marks[table.index_of(center, b).unwrap()].store(true, Ordering::Relaxed);
                    }
                }
            }
            local
        })
        .sum();
    let list = marks
        .iter()
        .enumerate()
        .filter(|(_, m)| m.load(Ordering::Relaxed))
        .map(|(idx, _)| idx)
        .collect();
    (count, UpdateList(list))
}

/// Number of triangles in the pair graph with exactly two linked pairs.
pub fn count_inconsistent_triplets(table: &PairTable) -> u64 {
    scan_inconsistent(table, &NeighborGraph::from_states(table), false).0
}

/// Pairs that sit in at least one inconsistent triangle.
pub fn build_update_list(table: &PairTable, graph: &NeighborGraph) -> UpdateList {
    scan_inconsistent(table, graph, true).1
}

/// Sets every message to its unary energy and returns the first update list.
pub fn init_messages(table: &mut PairTable) -> UpdateList {
    table.reset_messages();
    build_update_list(table, &NeighborGraph::from_states(table))
}

/// New message for pair `idx`, reading only the previous snapshot. Pinned
/// pairs return their unary.
pub fn update_message(
    idx: usize,
    graph: &NeighborGraph,
    prev: &PairTable,
    cfg: &BpConfig,
) -> EnergyPair {
    if prev.is_pinned(idx) {
        return prev.unary(idx);
    }
    let key = prev.key(idx);
    let shared = graph.shared(key.i, key.j);
    let mut e0 = 0.0;
    let mut e1 = 0.0;
    let mut used = 0usize;
    for k in shared {
        let (Some(ik), Some(jk)) = (prev.index_of(key.i, k), prev.index_of(key.j, k)) else {
            continue;
        };
        let a = prev.message(ik);
        let b = prev.message(jk);
        // linked: both or neither of (i,k), (j,k) linked
        e1 += (a.e1 + b.e1).min(a.e0 + b.e0);
        // apart: anything but both linked
        e0 += (a.e0 + b.e0).min(a.e1 + b.e0).min(a.e0 + b.e1);
        used += 1;
    }
    if used == 0 {
        return prev.message(idx);
    }
    if cfg.include_unary_in_update {
        let d = prev.unary(idx);
        e0 += d.e0;
        e1 += d.e1;
    }
    let msg = EnergyPair::new(e0, e1);
    if cfg.normalize_messages {
        msg.normalized()
    } else {
        msg
    }
}

/// Per-iteration diagnostics of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConvergenceTrace {
    /// Inconsistent triangles after initialization (entry 0) and after each
    /// executed iteration.
    pub inconsistent_triplets: Vec<u64>,
    /// Update-list size aligned with `inconsistent_triplets`.
    pub update_list_sizes: Vec<usize>,
    pub iterations: usize,
    /// True when the update list emptied before the iteration cap.
    pub converged: bool,
    /// Pair states changed by the transitive merge.
    pub merge_flips: u64,
    /// Inconsistent triangles of the merged adjacency; always 0.
    pub inconsistent_after_merge: u64,
}

/// Runs inference on `table` and returns the merged partition.
///
/// On return the table's states hold the partition-induced adjacency and the
/// messages hold the last iteration's energies.
pub fn run(table: &mut PairTable, cfg: &BpConfig) -> Result<(Partition, ConvergenceTrace)> {
    cfg.validate()?;
    table.reset_messages();
    let mut trace = ConvergenceTrace::default();
    let mut graph = NeighborGraph::from_states(table);
    let (mut count, mut list) = scan_inconsistent(table, &graph, true);
    trace.inconsistent_triplets.push(count);
    trace.update_list_sizes.push(list.len());

    while !list.is_empty() && trace.iterations < cfg.max_iters {
        let snapshot: &PairTable = table;
        let updated: Vec<EnergyPair> = list
            .indices()
            .par_iter()
            .map(|&idx| update_message(idx, &graph, snapshot, cfg))
            .collect();
        for (&idx, msg) in list.indices().iter().zip(updated) {
            table.set_message(idx, msg);
        }
        trace.iterations += 1;
        graph = NeighborGraph::from_states(table);
        (count, list) = scan_inconsistent(table, &graph, true);
        trace.inconsistent_triplets.push(count);
        trace.update_list_sizes.push(list.len());
    }
    trace.converged = list.is_empty();

    let partition = partition_from_adjacency(table);
    trace.merge_flips = table.apply_partition(&partition);
    trace.inconsistent_after_merge = count_inconsistent_triplets(table);
    Ok((partition, trace))
}

/// Total unary energy of the adjacency induced by `partition`; the triplet
/// term vanishes for any partition.
pub fn partition_energy(table: &PairTable, partition: &Partition) -> f64 {
    table
        .keys()
        .iter()
        .zip(table.unaries())
        .map(|(key, d)| {
            if partition.same_cluster(key.i, key.j) {
                d.e1
            } else {
                d.e0
            }
        })
        .sum()
}

/// Exact minimizer over all set partitions by depth-first enumeration of
/// restricted growth strings with branch-and-bound. Ties keep the
/// lexicographically smallest label vector.
pub fn exhaustive_min_energy_partition(table: &PairTable) -> Result<(Partition, f64)> {
    let n = table.n_points();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooManyPoints(n));
    }
    if n == 0 {
        return Ok((Partition::singletons(0), 0.0));
    }
    // cost[p][q] for q < p; absent pairs cost nothing
    let mut cost = vec![vec![None; n]; n];
    for (key, d) in table.keys().iter().zip(table.unaries()) {
        cost[key.j][key.i] = Some(*d);
    }

    struct Search<'a> {
        n: usize,
        cost: &'a [Vec<Option<EnergyPair>>],
        labels: Vec<usize>,
        best: Option<(Vec<usize>, f64)>,
    }

    impl Search<'_> {
        fn visit(&mut self, p: usize, blocks: usize, partial: f64) {
            if let Some((_, best)) = &self.best {
                if partial >= *best {
                    return;
                }
            }
            if p == self.n {
                self.best = Some((self.labels.clone(), partial));
                return;
            }
            for block in 0..=blocks {
                let mut add = 0.0;
                for q in 0..p {
                    if let Some(d) = self.cost[p][q] {
                        add += if self.labels[q] == block { d.e1 } else { d.e0 };
                    }
                }
                self.labels[p] = block;
                let next_blocks = if block == blocks { blocks + 1 } else { blocks };
                self.visit(p + 1, next_blocks, partial + add);
            }
        }
    }

    let mut search = Search {
        n,
        cost: &cost,
        labels: vec![0; n],
        best: None,
    };
    search.labels[0] = 0;
    search.visit(1, 1, 0.0);
    let (labels, _) = search.best.expect("at least one partition exists");
    let partition = Partition::from_labels(&labels);
    let energy = partition_energy(table, &partition);
    Ok((partition, energy))
}
