//! Pairwise and BCubed precision / recall / F against ground truth.
//!
//! Both measures are computed from the cluster-by-class contingency table,
//! so memory stays linear in the number of points. Points without a truth
//! label are dropped before counting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicted cluster ids alongside truth classes; `None` marks an unlabeled
/// point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPartition {
    pred: Vec<usize>,
    truth: Vec<Option<usize>>,
}

impl LabeledPartition {
    pub fn new(pred: Vec<usize>, truth: Vec<Option<usize>>) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch(pred.len(), truth.len()));
        }
        Ok(Self { pred, truth })
    }

    /// Convenience for fully labeled data.
    pub fn fully_labeled(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Self::new(pred.to_vec(), truth.iter().map(|&t| Some(t)).collect())
    }

    pub fn pred(&self) -> &[usize] {
        &self.pred
    }

    pub fn truth(&self) -> &[Option<usize>] {
        &self.truth
    }

    pub fn num_labeled(&self) -> usize {
        self.truth.iter().filter(|t| t.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_score,
        }
    }
}

/// Pair counts behind the pairwise measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl PairCounts {
    pub fn prf(&self) -> Prf {
        Prf::from_pr(
            ratio(self.true_positive, self.true_positive + self.false_positive),
            ratio(self.true_positive, self.true_positive + self.false_negative),
        )
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn pairs(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

struct Contingency {
    labeled: u64,
    cells: HashMap<(usize, usize), u64>,
    cluster_sizes: HashMap<usize, u64>,
    class_sizes: HashMap<usize, u64>,
}

impl Contingency {
    fn new(lp: &LabeledPartition) -> Result<Self> {
        let mut c = Self {
            labeled: 0,
            cells: HashMap::new(),
            cluster_sizes: HashMap::new(),
            class_sizes: HashMap::new(),
        };
        for (&cluster, class) in lp.pred.iter().zip(&lp.truth) {
            let Some(class) = *class else { continue };
            c.labeled += 1;
            *c.cells.entry((cluster, class)).or_default() += 1;
            *c.cluster_sizes.entry(cluster).or_default() += 1;
            *c.class_sizes.entry(class).or_default() += 1;
        }
        if c.labeled == 0 {
            return Err(Error::NoLabeledPoints);
        }
        Ok(c)
    }
}

pub fn pair_counts(lp: &LabeledPartition) -> Result<PairCounts> {
    let c = Contingency::new(lp)?;
    let tp: u64 = c.cells.values().map(|&m| pairs(m)).sum();
    let same_pred: u64 = c.cluster_sizes.values().map(|&m| pairs(m)).sum();
    let same_truth: u64 = c.class_sizes.values().map(|&m| pairs(m)).sum();
    Ok(PairCounts {
        true_positive: tp,
        false_positive: same_pred - tp,
        false_negative: same_truth - tp,
    })
}

pub fn pairwise_prf(lp: &LabeledPartition) -> Result<Prf> {
    Ok(pair_counts(lp)?.prf())
}

/// BCubed measure. Cluster sizes count labeled members only.
pub fn bcubed_prf(lp: &LabeledPartition) -> Result<Prf> {
    let c = Contingency::new(lp)?;
    let mut precision = 0.0;
    let mut recall = 0.0;
    // sort cells so the float sums are order-stable
    let mut cells: Vec<_> = c.cells.iter().collect();
    cells.sort_unstable_by_key(|(key, _)| **key);
    for (&(cluster, class), &m) in cells {
        let m = m as f64;
        precision += m * m / c.cluster_sizes[&cluster] as f64;
        recall += m * m / c.class_sizes[&class] as f64;
    }
    let n = c.labeled as f64;
    Ok(Prf::from_pr(precision / n, recall / n))
}

/// Both measures at once.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pairwise: Prf,
    pub bcubed: Prf,
}

pub fn evaluate(lp: &LabeledPartition) -> Result<MetricReport> {
    Ok(MetricReport {
        pairwise: pairwise_prf(lp)?,
        bcubed: bcubed_prf(lp)?,
    })
}
