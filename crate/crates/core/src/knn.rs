//! k-nearest-neighbor graphs by cosine similarity: an exact brute-force
//! builder and a randomized k-d forest with best-bin-first search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::PairKey;
use crate::potentials::{dot, FeatureMatrix, SimilarityMatrix};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_NUM_TREES: usize = 4;
pub const DEFAULT_SEARCH_SIZE: usize = 200;
pub const DEFAULT_SEED: u64 = 42;

/// Points held by a leaf.
const LEAF_SIZE: usize = 4;
/// Split dimension is drawn from this many highest-variance dimensions.
const RAND_DIMS: usize = 5;
/// Points sampled when estimating per-dimension variance.
const VARIANCE_SAMPLE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
    pub num_trees: usize,
    /// Upper bound on points examined per query across all trees.
    pub search_size: usize,
    /// Use brute force instead of the forest.
    pub exact: bool,
    pub seed: u64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            num_trees: DEFAULT_NUM_TREES,
            search_size: DEFAULT_SEARCH_SIZE,
            exact: false,
            seed: DEFAULT_SEED,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(Error::InvalidParameter(format!(
                "k must satisfy 1 <= k < N (k = {}, N = {n})",
                self.k
            )));
        }
        if self.num_trees == 0 {
            return Err(Error::InvalidParameter(
                "num_trees must be at least 1".into(),
            ));
        }
        if self.search_size < self.k {
            return Err(Error::InvalidParameter(format!(
                "search_size ({}) must be at least k ({})",
                self.search_size, self.k
            )));
        }
        Ok(())
    }
}

/// Directed neighbor lists plus the symmetrized edge set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnnGraph {
    lists: Vec<Vec<usize>>,
    edges: Vec<PairKey>,
}

impl KnnGraph {
    /// Lists must not contain self-loops or out-of-range indices.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let mut edges = Vec::new();
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, n });
                }
                edges.push(crate::model::canonical(i, j)?);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self { lists, edges })
    }

    pub fn n_points(&self) -> usize {
        self.lists.len()
    }

    /// Neighbors of `point`, most similar first.
    pub fn neighbors(&self, point: usize) -> &[usize] {
        &self.lists[point]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// Canonical edges, sorted.
    pub fn edges(&self) -> &[PairKey] {
        &self.edges
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    sim: f64,
    idx: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Better candidates (higher similarity, then lower index) sort first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then(self.idx.cmp(&other.idx))
    }
}

/// Keeps the `k` best candidates; the heap top is the worst kept.
struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, cand: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if self.heap.peek().is_some_and(|worst| cand < *worst) {
            self.heap.pop();
            self.heap.push(cand);
        }
    }

    fn len(&self) -> usize {
        self.heap.len()
    }

    fn into_sorted(self) -> Vec<usize> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| c.idx)
            .collect()
    }
}

fn top_k_by<F>(n: usize, query: usize, k: usize, sim: F) -> Vec<usize>
where
    F: Fn(usize) -> f64,
{
    let mut top = TopK::new(k);
    for j in (0..n).filter(|&j| j != query) {
        top.offer(Candidate {
            sim: sim(j),
            idx: j,
        });
    }
    top.into_sorted()
}

/// Brute-force k-NN by cosine similarity; ties go to the lower index.
pub fn build_exact(features: &FeatureMatrix, k: usize) -> Result<KnnGraph> {
    let n = features.n();
    check_k(k, n)?;
    let unit = features.normalized()?;
    let lists = (0..n)
        .into_par_iter()
        .map(|i| top_k_by(n, i, k, |j| dot(unit.row(i), unit.row(j))))
        .collect();
    KnnGraph::from_lists(lists)
}

/// Brute-force k-NN over a precomputed similarity matrix.
pub fn exact_from_similarity(sim: &SimilarityMatrix, k: usize) -> Result<KnnGraph> {
    let n = sim.n();
    check_k(k, n)?;
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = sim.row(i);
            top_k_by(n, i, k, |j| row[j])
        })
        .collect();
    KnnGraph::from_lists(lists)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < N (k = {k}, N = {n})"
        )));
    }
    Ok(())
}

/// Exact or approximate graph depending on `cfg.exact`.
pub fn build(features: &FeatureMatrix, cfg: &KnnConfig) -> Result<KnnGraph> {
    cfg.validate(features.n())?;
    if cfg.exact {
        build_exact(features, cfg.k)
    } else {
        build_approx(features, cfg)
    }
}

/// Approximate k-NN from a randomized k-d forest.
pub fn build_approx(features: &FeatureMatrix, cfg: &KnnConfig) -> Result<KnnGraph> {
    let n = features.n();
    cfg.validate(n)?;
    let unit = features.normalized()?;
    let forest = KdForest::build(&unit, cfg.num_trees, cfg.seed);
    let lists = (0..n)
        .into_par_iter()
        .map_init(
            || vec![usize::MAX; n],
            |seen, i| forest.search(&unit, i, cfg.k, cfg.search_size, seen),
        )
        .collect();
    KnnGraph::from_lists(lists)
}

/// Mean fraction of each exact list recovered by the approximate list.
pub fn recall(approx: &KnnGraph, exact: &KnnGraph) -> f64 {
    let n = exact.n_points();
    if n == 0 {
        return 1.0;
    }
    let total: f64 = (0..n)
        .map(|i| {
            let truth = exact.neighbors(i);
            if truth.is_empty() {
                return 1.0;
            }
            let hits = approx
                .neighbors(i)
                .iter()
                .filter(|j| truth.contains(j))
                .count();
            hits as f64 / truth.len() as f64
        })
        .sum();
    total / n as f64
}

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl KdTree {
    fn build(points: &FeatureMatrix, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..points.n()).collect();
        order.shuffle(rng);
        let mut tree = Self {
            nodes: Vec::new(),
            order,
        };
        tree.split(points, 0, points.n(), rng);
        tree
    }

    fn split(
        &mut self,
        points: &FeatureMatrix,
        start: usize,
        end: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = choose_dim(points, &self.order[start..end], rng);
        let slice = &mut self.order[start..end];
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            points.row(a)[dim]
                .total_cmp(&points.row(b)[dim])
                .then(a.cmp(&b))
        });
        let value = points.row(slice[mid])[dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.split(points, start, start + mid, rng);
        let right = self.split(points, start + mid, end, rng);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }
}

fn choose_dim(points: &FeatureMatrix, members: &[usize], rng: &mut ChaCha8Rng) -> usize {
    let d = points.dim();
    let sample = &members[..members.len().min(VARIANCE_SAMPLE)];
    let mut mean = vec![0.0; d];
    for &p in sample {
        for (m, v) in mean.iter_mut().zip(points.row(p)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= sample.len() as f64);
    let mut var = vec![0.0; d];
    for &p in sample {
        for ((s, v), m) in var.iter_mut().zip(points.row(p)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut dims: Vec<usize> = (0..d).collect();
    dims.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    dims[rng.random_range(0..RAND_DIMS.min(d))]
}

#[derive(Clone, Copy, Debug)]
struct Branch {
    bound: f64,
    tree: usize,
    node: usize,
}

impl PartialEq for Branch {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Branch {}

impl PartialOrd for Branch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Branch {
    /// Reversed so the max-heap pops the smallest bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.tree.cmp(&self.tree))
            .then(other.node.cmp(&self.node))
    }
}

struct KdForest {
    trees: Vec<KdTree>,
}

impl KdForest {
    fn build(points: &FeatureMatrix, num_trees: usize, seed: u64) -> Self {
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..num_trees).map(|_| seeder.random()).collect();
        let trees = seeds
            .into_par_iter()
            .map(|s| KdTree::build(points, &mut ChaCha8Rng::seed_from_u64(s)))
            .collect();
        Self { trees }
    }

    /// Best-bin-first search shared across trees. `seen` is scratch space
    /// indexed by point; entries equal to `query` mark points already
    /// examined for this query.
    fn search(
        &self,
        points: &FeatureMatrix,
        query: usize,
        k: usize,
        search_size: usize,
        seen: &mut [usize],
    ) -> Vec<usize> {
        let q = points.row(query);
        let mut top = TopK::new(k);
        let mut checks = 0usize;
        let mut queue: BinaryHeap<Branch> = (0..self.trees.len())
            .map(|tree| Branch {
                bound: 0.0,
                tree,
                node: 0,
            })
            .collect();
        while let Some(branch) = queue.pop() {
            if checks >= search_size && top.len() >= k {
                break;
            }
            let tree = &self.trees[branch.tree];
            let mut node = branch.node;
            loop {
                match tree.nodes[node] {
                    Node::Split {
                        dim,
                        value,
                        left,
                        right,
                    } => {
                        let diff = q[dim] - value;
                        let (near, far) = if diff < 0.0 {
                            (left, right)
                        } else {
                            (right, left)
                        };
                        queue.push(Branch {
                            bound: branch.bound + diff * diff,
                            tree: branch.tree,
                            node: far,
                        });
                        node = near;
                    }
                    Node::Leaf { start, end } => {
                        for &p in &tree.order[start..end] {
                            if seen[p] == query {
                                continue;
                            }
                            seen[p] = query;
                            checks += 1;
                            if p != query {
                                top.offer(Candidate {
                                    sim: dot(q, points.row(p)),
                                    idx: p,
                                });
                            }
                        }
                        break;
                    }
                }
            }
        }
        top.into_sorted()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
        FeatureMatrix::new(n, d, data).unwrap()
    }

    /// Full sort of all similarities; independent of the heap-based path.
    fn sorted_oracle(features: &FeatureMatrix, k: usize) -> Vec<Vec<usize>> {
        let unit = features.normalized().unwrap();
        (0..unit.n())
            .map(|i| {
                let mut all: Vec<(f64, usize)> = (0..unit.n())
                    .filter(|&j| j != i)
                    .map(|j| (dot(unit.row(i), unit.row(j)), j))
                    .collect();
                all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                all.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect()
    }

    #[test]
    fn exact_matches_sort_oracle() {
        let f = gaussian(60, 5, 3);
        let g = build_exact(&f, 7).unwrap();
        assert_eq!(g.lists(), sorted_oracle(&f, 7).as_slice());
    }

    #[test]
    fn collinear_points_pick_nearest_angle() {
        // angles 0, 10 and 50 degrees
        let rows: Vec<Vec<f64>> = [0.0f64, 10.0, 50.0]
            .iter()
            .map(|deg| vec![deg.to_radians().cos(), deg.to_radians().sin()])
            .collect();
        let g = build_exact(&FeatureMatrix::from_rows(&rows).unwrap(), 1).unwrap();
        assert_eq!(g.lists(), &[vec![1], vec![0], vec![1]]);
        assert_eq!(g.edges(), &[PairKey { i: 0, j: 1 }, PairKey { i: 1, j: 2 }]);
    }

    #[test]
    fn full_k_gives_complete_graph() {
        let f = gaussian(9, 3, 1);
        let g = build_exact(&f, 8).unwrap();
        assert_eq!(g.edges().len(), 36);
    }

    #[test]
    fn planted_clusters_stay_separate() {
        let mut rows = Vec::new();
        for c in 0..2 {
            for p in 0..5 {
                let jitter = 0.01 * p as f64;
                rows.push(if c == 0 {
                    vec![1.0, jitter, 0.0]
                } else {
                    vec![0.0, jitter, 1.0]
                });
            }
        }
        let g = build_exact(&FeatureMatrix::from_rows(&rows).unwrap(), 4).unwrap();
        for i in 0..10 {
            assert!(g.neighbors(i).iter().all(|&j| (j < 5) == (i < 5)));
        }
    }

    #[test]
    fn full_budget_is_exact() {
        let f = gaussian(200, 6, 9);
        let cfg = KnnConfig {
            k: 10,
            num_trees: 1,
            search_size: 200,
            exact: false,
            seed: 5,
        };
        let approx = build_approx(&f, &cfg).unwrap();
        let exact = build_exact(&f, 10).unwrap();
        assert_eq!(recall(&approx, &exact), 1.0);
        assert_eq!(approx, exact);
    }

    #[test]
    fn duplicates_find_each_other() {
        let mut rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                vec![
                    (i as f64 * 0.37).cos(),
                    (i as f64 * 0.37).sin(),
                    0.1 * i as f64,
                ]
            })
            .collect();
        rows.push(rows[17].clone());
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let cfg = KnnConfig {
            k: 1,
            num_trees: 2,
            search_size: 8,
            exact: false,
            seed: 1,
        };
        let g = build_approx(&f, &cfg).unwrap();
        assert_eq!(g.neighbors(17), &[50]);
        assert_eq!(g.neighbors(50), &[17]);
    }

    #[test]
    fn config_validation() {
        let f = gaussian(10, 2, 0);
        let mut cfg = KnnConfig {
            k: 0,
            ..KnnConfig::default()
        };
        assert!(build(&f, &cfg).is_err());
        cfg.k = 10;
        assert!(build(&f, &cfg).is_err());
        cfg.k = 3;
        cfg.num_trees = 0;
        assert!(build(&f, &cfg).is_err());
        cfg.num_trees = 1;
        cfg.search_size = 2;
        assert!(build(&f, &cfg).is_err());
        cfg.search_size = 3;
        assert!(build(&f, &cfg).is_ok());
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let f = gaussian(300, 8, 4);
        let cfg = KnnConfig {
            k: 5,
            ..KnnConfig::default()
        };
        assert_eq!(
            build_approx(&f, &cfg).unwrap(),
            build_approx(&f, &cfg).unwrap()
        );
    }

    #[test]
    fn recall_grows_with_budget() {
        let f = gaussian(800, 12, 11);
        let exact = build_exact(&f, 10).unwrap();
        let mut last = 0.0;
        for search_size in [10, 50, 200, 800] {
            let cfg = KnnConfig {
                k: 10,
                search_size,
                ..KnnConfig::default()
            };
            let r = recall(&build_approx(&f, &cfg).unwrap(), &exact);
            assert!(r + 1e-9 >= last, "recall fell to {r} at {search_size}");
            last = r;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn exact_is_permutation_equivariant() {
        let f = gaussian(40, 4, 8);
        let perm: Vec<usize> = (0..40).map(|i| (i * 17 + 3) % 40).collect();
        let rows: Vec<Vec<f64>> = perm.iter().map(|&p| f.row(p).to_vec()).collect();
        let permuted = FeatureMatrix::from_rows(&rows).unwrap();
        let g = build_exact(&f, 5).unwrap();
        let gp = build_exact(&permuted, 5).unwrap();
        let mut inverse = vec![0; 40];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        for (new, &old) in perm.iter().enumerate() {
            // continuous data: no ties, so lists map exactly
            let mapped: Vec<usize> = g.neighbors(old).iter().map(|&j| inverse[j]).collect();
            assert_eq!(gp.neighbors(new), mapped.as_slice());
        }
    }

    #[test]
    fn similarity_input_matches_features() {
        let f = gaussian(30, 4, 2);
        let sim = SimilarityMatrix::cosine(&f).unwrap();
        assert_eq!(
            exact_from_similarity(&sim, 4).unwrap(),
            build_exact(&f, 4).unwrap()
        );
    }

    #[test]
    fn edges_are_symmetric_closure() {
        let g = KnnGraph::from_lists(vec![vec![1], vec![2], vec![1]]).unwrap();
        assert_eq!(g.edges(), &[PairKey { i: 0, j: 1 }, PairKey { i: 1, j: 2 }]);
        assert!(KnnGraph::from_lists(vec![vec![0]]).is_err());
    }
}
