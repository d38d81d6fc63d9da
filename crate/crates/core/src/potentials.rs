//! Unary potentials: similarity computation, the similarity-to-probability
//! transform, per-pair energies, and must-link / cannot-link overrides.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{canonical, EnergyPair, PairKey, PairTable};

pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_EPS_CLAMP: f64 = 1e-6;
pub const DEFAULT_E_CON: f64 = 1e6;

/// Dense row-major feature vectors, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if data.len() != n * d {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for a {n}x{d} matrix, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(d, bad.len()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy with every row scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_mut(self.d).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm(i));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self {
            n: self.n,
            d: self.d,
            data,
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let na = dot(a, a).sqrt();
    if na == 0.0 {
        return Err(Error::ZeroNorm(0));
    }
    let nb = dot(b, b).sqrt();
    if nb == 0.0 {
        return Err(Error::ZeroNorm(1));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Dense symmetric similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Cosine similarities between all rows of `features`.
    pub fn cosine(features: &FeatureMatrix) -> Result<Self> {
        let unit = features.normalized()?;
        Ok(Self::from_fn(unit.n(), |i, j| {
            dot(unit.row(i), unit.row(j)).clamp(-1.0, 1.0)
        }))
    }

    /// Fills the upper triangle from `sim` in parallel and mirrors it; the
    /// diagonal is 1.
    pub fn from_fn<F>(n: usize, sim: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            row[i] = 1.0;
            for (j, v) in row.iter_mut().enumerate().skip(i + 1) {
                *v = sim(i, j);
            }
        });
        for i in 0..n {
            for j in i + 1..n {
                values[j * n + i] = values[i * n + j];
            }
        }
        Self { n, values }
    }

    /// Accepts a user-supplied square matrix. Off-diagonal entries are
    /// symmetrized by averaging `(i, j)` and `(j, i)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "similarity matrix row {r} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Parameters of the similarity-to-probability map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformParams {
    tau: f64,
    eps_clamp: f64,
}

impl TransformParams {
    pub fn new(tau: f64, eps_clamp: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        if !(eps_clamp > 0.0 && eps_clamp < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "eps_clamp must lie in (0, 0.5), got {eps_clamp}"
            )));
        }
        Ok(Self { tau, eps_clamp })
    }

    pub fn with_tau(tau: f64) -> Result<Self> {
        Self::new(tau, DEFAULT_EPS_CLAMP)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eps_clamp(&self) -> f64 {
        self.eps_clamp
    }
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            eps_clamp: DEFAULT_EPS_CLAMP,
        }
    }
}

/// Maps a similarity to the probability that the pair is genuine.
///
/// Two linear pieces through `(0, 0)`, `(tau, 0.5)` and `(1, 1)`; the input is
/// clamped to `[0, 1]` and the output to `[eps, 1 - eps]`.
pub fn transform(s: f64, params: &TransformParams) -> f64 {
    let s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
    let tau = params.tau;
    let p = if s <= tau {
        0.5 * s / tau
    } else {
        0.5 + 0.5 * (s - tau) / (1.0 - tau)
    };
    p.clamp(params.eps_clamp, 1.0 - params.eps_clamp)
}

/// Negative log-likelihood energies of a pair with genuine probability `p`.
///
/// # Panics
///
/// If `p` is not strictly inside `(0, 1)`.
pub fn unary_energies(p: f64) -> EnergyPair {
    assert!(
        p > 0.0 && p < 1.0,
        "genuine probability must lie in (0, 1), got {p}"
    );
    EnergyPair::new(-(1.0 - p).ln(), -p.ln())
}

/// Energies of a pair straight from its similarity.
pub fn similarity_energies(s: f64, params: &TransformParams) -> EnergyPair {
    unary_energies(transform(s, params))
}

/// Table over all pairs with unaries from `sim(i, j)`.
pub fn full_table<F>(n: usize, params: &TransformParams, sim: F) -> PairTable
where
    F: Fn(usize, usize) -> f64,
{
    PairTable::complete(n, |i, j| similarity_energies(sim(i, j), params))
}

/// Table over an explicit edge set with unaries from `sim(i, j)`.
pub fn sparse_table<F>(
    n: usize,
    edges: &[PairKey],
    params: &TransformParams,
    sim: F,
) -> Result<PairTable>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let energies: Vec<(PairKey, EnergyPair)> = edges
        .par_iter()
        .map(|&k| (k, similarity_energies(sim(k.i, k.j), params)))
        .collect();
    PairTable::from_pairs(n, energies)
}

/// Pairwise supervision.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    must: BTreeSet<PairKey>,
    cannot: BTreeSet<PairKey>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_must_link(&mut self, i: usize, j: usize) -> Result<()> {
        let key = canonical(i, j)?;
        if self.cannot.contains(&key) {
            return Err(Error::ConflictingConstraint(key));
        }
        self.must.insert(key);
        Ok(())
    }

    pub fn add_cannot_link(&mut self, i: usize, j: usize) -> Result<()> {
        let key = canonical(i, j)?;
        if self.must.contains(&key) {
            return Err(Error::ConflictingConstraint(key));
        }
        self.cannot.insert(key);
        Ok(())
    }

    /// Builds a set from raw lists, rejecting any pair present in both.
    pub fn from_lists(must: &[PairKey], cannot: &[PairKey]) -> Result<Self> {
        let mut set = Self::new();
        for k in must {
            set.add_must_link(k.i, k.j)?;
        }
        for k in cannot {
            set.add_cannot_link(k.i, k.j)?;
        }
        Ok(set)
    }

    pub fn must_links(&self) -> &BTreeSet<PairKey> {
        &self.must
    }

    pub fn cannot_links(&self) -> &BTreeSet<PairKey> {
        &self.cannot
    }

    pub fn len(&self) -> usize {
        self.must.len() + self.cannot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.must.is_empty() && self.cannot.is_empty()
    }

    /// All constrained pairs in key order.
    pub fn pairs(&self) -> impl Iterator<Item = PairKey> + '_ {
        self.must.iter().chain(&self.cannot).copied()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(k) = self.must.intersection(&self.cannot).next() {
            return Err(Error::ConflictingConstraint(*k));
        }
        match self.pairs().find(|k| k.j >= n) {
            Some(k) => Err(Error::IndexOutOfRange { index: k.j, n }),
            None => Ok(()),
        }
    }
}

/// Overrides the unaries of constrained pairs and re-initializes messages.
///
/// Must-links become `(e_con, 0)`, cannot-links `(0, e_con)`. Constrained
/// pairs are pinned, so inference never moves their messages off the unary.
pub fn apply_constraints(
    table: &mut PairTable,
    constraints: &ConstraintSet,
    e_con: f64,
) -> Result<()> {
    if !(e_con.is_finite() && e_con > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "constraint energy must be positive and finite, got {e_con}"
        )));
    }
    constraints.validate(table.n_points())?;
    let mut updates = Vec::with_capacity(constraints.len());
    for (keys, energy) in [
        (constraints.must_links(), EnergyPair::new(e_con, 0.0)),
        (constraints.cannot_links(), EnergyPair::new(0.0, e_con)),
    ] {
        for key in keys {
            let idx = table
                .index_of(key.i, key.j)
                .ok_or(Error::PairNotInTable(*key))?;
            updates.push((idx, energy));
        }
    }
    for (idx, energy) in updates {
        table.set_unary(idx, energy);
        table.set_pinned(idx, true);
    }
    table.reset_messages();
    Ok(())
}
