//! Shared data types: canonical pair keys, binary pair states, per-state
//! energies, the pair table that holds every variable of the model, and the
//! final partition.

use std::fmt;

use crate::error::{Error, Result};

/// Unordered point pair stored canonically with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub i: usize,
    pub j: usize,
}

impl PairKey {
    /// Canonicalizes `(i, j)`; self-pairs are rejected.
    pub fn new(i: usize, j: usize) -> Result<Self> {
        canonical(i, j)
    }

    /// Returns the endpoint opposite to `point`, if `point` is an endpoint.
    pub fn other(&self, point: usize) -> Option<usize> {
        if point == self.i {
            Some(self.j)
        } else if point == self.j {
            Some(self.i)
        } else {
            None
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

pub fn canonical(i: usize, j: usize) -> Result<PairKey> {
    match i.cmp(&j) {
        std::cmp::Ordering::Less => Ok(PairKey { i, j }),
        std::cmp::Ordering::Greater => Ok(PairKey { i: j, j: i }),
        std::cmp::Ordering::Equal => Err(Error::SelfPair(i)),
    }
}

/// Binary adjacency state of a pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PairState {
    #[default]
    Apart,
    Linked,
}

impl PairState {
    pub fn is_linked(self) -> bool {
        self == PairState::Linked
    }

    pub fn as_bit(self) -> u8 {
        match self {
            PairState::Apart => 0,
            PairState::Linked => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            PairState::Linked
        } else {
            PairState::Apart
        }
    }
}

/// Energies of the two states of one pair variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyPair {
    /// Energy of the not-adjacent state.
    pub e0: f64,
    /// Energy of the adjacent state.
    pub e1: f64,
}

impl EnergyPair {
    pub const fn new(e0: f64, e1: f64) -> Self {
        Self { e0, e1 }
    }

    pub fn energy(&self, state: PairState) -> f64 {
        match state {
            PairState::Apart => self.e0,
            PairState::Linked => self.e1,
        }
    }

    /// Strict comparison: ties resolve to [`PairState::Apart`].
    pub fn state(&self) -> PairState {
        PairState::from_bit(self.e1 < self.e0)
    }

    /// Subtracts the smaller energy from both states.
    pub fn normalized(self) -> Self {
        let m = self.e0.min(self.e1);
        Self {
            e0: self.e0 - m,
            e1: self.e1 - m,
        }
    }
}

#[derive(Clone, Debug)]
enum PairIndex {
    /// Every pair of `n` points is present; index is the row-major position
    /// in the strict upper triangle.
    Complete,
    /// Per-point rows of `(other, pair index)` sorted by `other`.
    Sparse {
        offsets: Vec<usize>,
        entries: Vec<(usize, usize)>,
    },
}

/// Symmetric store of pair variables keyed by canonical [`PairKey`].
///
/// Pairs are laid out in lexicographic key order, so pair indices are stable
/// and iteration order is deterministic. A table either covers all
/// `n (n - 1) / 2` pairs (full mode) or an explicit edge set (k-NN mode).
#[derive(Clone, Debug)]
pub struct PairTable {
    n: usize,
    keys: Vec<PairKey>,
    unary: Vec<EnergyPair>,
    message: Vec<EnergyPair>,
    state: Vec<PairState>,
    pinned: Vec<bool>,
    index: PairIndex,
}

impl PairTable {
    /// Builds a table over every pair of `n` points.
    pub fn complete<F>(n: usize, mut unary: F) -> Self
    where
        F: FnMut(usize, usize) -> EnergyPair,
    {
        let len = n * n.saturating_sub(1) / 2;
        let mut keys = Vec::with_capacity(len);
        let mut energies = Vec::with_capacity(len);
        for i in 0..n {
            for j in i + 1..n {
                keys.push(PairKey { i, j });
                energies.push(unary(i, j));
            }
        }
        Self::assemble(n, keys, energies, PairIndex::Complete)
    }

    /// Builds a table over an explicit set of pairs. Duplicate keys keep the
    /// first energy supplied.
    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PairKey, EnergyPair)>,
    {
        let mut pairs: Vec<(PairKey, EnergyPair)> = pairs.into_iter().collect();
        for (key, _) in &pairs {
            if key.i >= key.j {
                return Err(Error::InvalidParameter(format!(
                    "pair {key} is not canonical"
                )));
            }
            if key.j >= n {
                return Err(Error::IndexOutOfRange { index: key.j, n });
            }
        }
        pairs.sort_by_key(|(key, _)| *key);
        pairs.dedup_by_key(|(key, _)| *key);

        let mut degree = vec![0usize; n + 1];
        for (key, _) in &pairs {
            degree[key.i] += 1;
            degree[key.j] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for d in degree.iter().take(n) {
            offsets.push(acc);
            acc += d;
        }
        offsets.push(acc);
        let mut fill = offsets.clone();
        let mut entries = vec![(0usize, 0usize); acc];
        // Keys are sorted, so each row comes out sorted by `other` (see
        // `adjacency_lists` for the same argument).
        for (idx, (key, _)) in pairs.iter().enumerate() {
            entries[fill[key.i]] = (key.j, idx);
            fill[key.i] += 1;
            entries[fill[key.j]] = (key.i, idx);
            fill[key.j] += 1;
        }
        let (keys, energies) = pairs.into_iter().unzip();
        Ok(Self::assemble(
            n,
            keys,
            energies,
            PairIndex::Sparse { offsets, entries },
        ))
    }

    fn assemble(n: usize, keys: Vec<PairKey>, unary: Vec<EnergyPair>, index: PairIndex) -> Self {
        let state = unary.iter().map(EnergyPair::state).collect();
        Self {
            n,
            keys,
            message: unary.clone(),
            pinned: vec![false; unary.len()],
            unary,
            state,
            index,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    /// Number of pair variables.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// True when the table holds all pairs with direct index arithmetic.
    pub fn is_complete(&self) -> bool {
        matches!(self.index, PairIndex::Complete)
    }

    pub fn keys(&self) -> &[PairKey] {
        &self.keys
    }

    pub fn key(&self, idx: usize) -> PairKey {
        self.keys[idx]
    }

    /// Resolves `(i, j)` in either order to the index of the canonical entry.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.n || j >= self.n {
            return None;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        match &self.index {
            PairIndex::Complete => Some(a * (2 * self.n - a - 1) / 2 + (b - a - 1)),
            PairIndex::Sparse { offsets, entries } => {
                let row = &entries[offsets[a]..offsets[a + 1]];
                row.binary_search_by_key(&b, |&(other, _)| other)
                    .ok()
                    .map(|pos| row[pos].1)
            }
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.index_of(i, j).is_some()
    }

    /// Points sharing a pair variable with `point`, ascending.
    pub fn graph_neighbors(&self, point: usize) -> Vec<usize> {
        match &self.index {
            PairIndex::Complete => (0..self.n).filter(|&k| k != point).collect(),
            PairIndex::Sparse { offsets, entries } => entries[offsets[point]..offsets[point + 1]]
                .iter()
                .map(|&(other, _)| other)
                .collect(),
        }
    }

    pub fn unary(&self, idx: usize) -> EnergyPair {
        self.unary[idx]
    }

    pub fn unaries(&self) -> &[EnergyPair] {
        &self.unary
    }

    pub fn message(&self, idx: usize) -> EnergyPair {
        self.message[idx]
    }

    pub fn messages(&self) -> &[EnergyPair] {
        &self.message
    }

    pub fn state(&self, idx: usize) -> PairState {
        self.state[idx]
    }

    pub fn states(&self) -> &[PairState] {
        &self.state
    }

    /// Replaces a unary energy. The message is left alone; call
    /// [`PairTable::reset_messages`] once all unaries are final.
    pub fn set_unary(&mut self, idx: usize, energy: EnergyPair) {
        self.unary[idx] = energy;
    }

    /// Pinned pairs are observed: inference keeps their message at the unary.
    pub fn is_pinned(&self, idx: usize) -> bool {
        self.pinned[idx]
    }

    pub fn set_pinned(&mut self, idx: usize, pinned: bool) {
        self.pinned[idx] = pinned;
    }

    pub fn set_state(&mut self, idx: usize, state: PairState) {
        self.state[idx] = state;
    }

    /// Writes a message and re-derives the pair state from it.
    pub fn set_message(&mut self, idx: usize, energy: EnergyPair) {
        self.message[idx] = energy;
        self.state[idx] = energy.state();
    }

    /// Sets every message to its unary energy and derives states.
    pub fn reset_messages(&mut self) {
        self.message.copy_from_slice(&self.unary);
        for (s, m) in self.state.iter_mut().zip(&self.message) {
            *s = m.state();
        }
    }

    /// Ascending lists of points linked to each point under current states.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        // Keys are visited in lexicographic order: for a point x, partners
        // a < x arrive first (ascending by row), then partners b > x
        // (ascending within row x), so each list ends up sorted.
        for (key, state) in self.keys.iter().zip(&self.state) {
            if state.is_linked() {
                adj[key.i].push(key.j);
                adj[key.j].push(key.i);
            }
        }
        adj
    }

    /// Overwrites states with the adjacency induced by `partition` and
    /// returns how many pair states changed.
    pub fn apply_partition(&mut self, partition: &Partition) -> u64 {
        let mut flips = 0;
        for (key, state) in self.keys.iter().zip(self.state.iter_mut()) {
            let induced = PairState::from_bit(partition.same_cluster(key.i, key.j));
            if induced != *state {
                *state = induced;
                flips += 1;
            }
        }
        flips
    }
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Hard cluster assignment.
///
/// Labels are contiguous from 0 and numbered in order of each cluster's
/// smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    num_clusters: usize,
    num_nonsingleton: usize,
}

impl Partition {
    /// Renumbers arbitrary labels by first occurrence.
    pub fn from_labels<T>(raw: &[T]) -> Self
    where
        T: Eq + std::hash::Hash + Copy,
    {
        let mut seen = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(*l).or_insert(next)
            })
            .collect();
        Self::from_canonical(labels, seen.len())
    }

    fn from_canonical(labels: Vec<usize>, num_clusters: usize) -> Self {
        let mut sizes = vec![0usize; num_clusters];
        for &l in &labels {
            sizes[l] += 1;
        }
        let num_nonsingleton = sizes.iter().filter(|&&s| s > 1).count();
        Self {
            labels,
            num_clusters,
            num_nonsingleton,
        }
    }

    /// Every point in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self::from_canonical((0..n).collect(), n)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, point: usize) -> usize {
        self.labels[point]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_nonsingleton(&self) -> usize {
        self.num_nonsingleton
    }

    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Member lists per cluster, each ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (point, &l) in self.labels.iter().enumerate() {
            out[l].push(point);
        }
        out
    }
}

/// Transitive merge: links every linked pair with a disjoint-set forest and
/// labels each point by its component.
pub fn partition_from_adjacency(table: &PairTable) -> Partition {
    let n = table.n_points();
    let mut dsu = DisjointSet::new(n);
    for (key, state) in table.keys().iter().zip(table.states()) {
        if state.is_linked() {
            dsu.union(key.i, key.j);
        }
    }
    let roots: Vec<usize> = (0..n).map(|p| dsu.find(p)).collect();
    Partition::from_labels(&roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with_links(n: usize, links: &[(usize, usize)]) -> PairTable {
        let mut table = PairTable::complete(n, |_, _| EnergyPair::new(0.0, 1.0));
        for &(i, j) in links {
            let idx = table.index_of(i, j).unwrap();
            table.set_state(idx, PairState::Linked);
        }
        table
    }

    fn bfs_components(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            comp[start] = next;
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    #[test]
    fn canonical_orders_and_rejects_self_pairs() {
        assert_eq!(canonical(5, 2).unwrap(), PairKey { i: 2, j: 5 });
        assert_eq!(canonical(0, 1).unwrap(), PairKey { i: 0, j: 1 });
        assert!(matches!(canonical(7, 7), Err(Error::SelfPair(7))));
    }

    #[test]
    fn adjacency_predicate_is_strict() {
        assert_eq!(EnergyPair::new(2.303, 0.105).state(), PairState::Linked);
        assert_eq!(EnergyPair::new(0.693, 0.693).state(), PairState::Apart);
        assert_eq!(EnergyPair::new(0.1, 0.2).state(), PairState::Apart);
    }

    #[test]
    fn transitive_merge_closes_triangle() {
        let table = table_with_links(3, &[(0, 1), (0, 2)]);
        let p = partition_from_adjacency(&table);
        assert_eq!(p.labels(), &[0, 0, 0]);
        assert_eq!(p.num_clusters(), 1);
        assert_eq!(p.num_nonsingleton(), 1);
    }

    #[test]
    fn no_links_gives_singletons() {
        let table = table_with_links(3, &[]);
        let p = partition_from_adjacency(&table);
        assert_eq!(p.labels(), &[0, 1, 2]);
        assert_eq!(p.num_clusters(), 3);
        assert_eq!(p.num_nonsingleton(), 0);
    }

    #[test]
    fn two_disjoint_components() {
        let table = table_with_links(4, &[(0, 1), (2, 3)]);
        let p = partition_from_adjacency(&table);
        assert_eq!(p.labels(), &[0, 0, 1, 1]);
        assert_eq!(p.num_clusters(), 2);
        assert_eq!(p.num_nonsingleton(), 2);
    }

    #[test]
    fn labels_follow_smallest_member() {
        let table = table_with_links(5, &[(3, 4), (1, 4)]);
        let p = partition_from_adjacency(&table);
        assert_eq!(p.labels(), &[0, 1, 2, 1, 1]);
    }

    #[test]
    fn complete_and_sparse_index_agree() {
        let n = 7;
        let complete = PairTable::complete(n, |i, j| EnergyPair::new(i as f64, j as f64));
        let sparse = PairTable::from_pairs(
            n,
            complete
                .keys()
                .iter()
                .rev()
                .map(|&k| (k, EnergyPair::new(k.i as f64, k.j as f64))),
        )
        .unwrap();
        assert_eq!(complete.keys(), sparse.keys());
        for i in 0..n {
            for j in 0..n {
                assert_eq!(complete.index_of(i, j), sparse.index_of(i, j));
                assert_eq!(complete.index_of(i, j), complete.index_of(j, i));
            }
            assert_eq!(complete.graph_neighbors(i), sparse.graph_neighbors(i));
        }
        for idx in 0..complete.len() {
            let key = complete.key(idx);
            assert_eq!(complete.index_of(key.i, key.j), Some(idx));
        }
    }

    #[test]
    fn sparse_table_rejects_bad_keys() {
        let bad = PairKey { i: 1, j: 9 };
        assert!(PairTable::from_pairs(4, [(bad, EnergyPair::new(0.0, 0.0))]).is_err());
        let reversed = PairKey { i: 2, j: 1 };
        assert!(PairTable::from_pairs(4, [(reversed, EnergyPair::new(0.0, 0.0))]).is_err());
    }

    #[test]
    fn sparse_lookup_misses_absent_pairs() {
        let table = PairTable::from_pairs(4, [(PairKey { i: 0, j: 2 }, EnergyPair::new(1.0, 0.0))])
            .unwrap();
        assert_eq!(table.index_of(2, 0), Some(0));
        assert_eq!(table.index_of(0, 1), None);
        assert_eq!(table.graph_neighbors(1), Vec::<usize>::new());
        assert_eq!(table.state(0), PairState::Linked);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn merge_matches_bfs_and_is_idempotent(
                n in 2usize..14,
                bits in proptest::collection::vec(any::<bool>(), 91),
            ) {
                let mut table = table_with_links(n, &[]);
                for (idx, &bit) in bits.iter().take(table.len()).enumerate() {
                    table.set_state(idx, PairState::from_bit(bit));
                }
                let p = partition_from_adjacency(&table);
                let comp = bfs_components(n, &table.adjacency_lists());
                prop_assert_eq!(&Partition::from_labels(&comp), &p);
                prop_assert_eq!(p.labels().iter().max().unwrap() + 1, p.num_clusters());
                prop_assert!(p.num_nonsingleton() <= p.num_clusters());
                prop_assert!(p.num_clusters() <= n);

                table.apply_partition(&p);
                prop_assert_eq!(partition_from_adjacency(&table), p);
            }
        }
    }
}
