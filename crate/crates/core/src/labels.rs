//! Per-node class distributions and the pseudo-label snapshots exchanged
//! between the text model and the graph model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `[N×C]` row-stochastic matrix; only rows flagged in the mask are
/// meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution {
    probs: Tensor,
    valid: Vec<bool>,
}

impl LabelDistribution {
    /// Builds a distribution over `num_nodes` rows from per-node rows for
    /// `nodes` (in order).
    pub fn from_node_rows(
        num_nodes: usize,
        num_classes: usize,
        nodes: &[usize],
        rows: &Tensor,
    ) -> Result<Self> {
        if rows.shape() != [nodes.len(), num_classes] {
            return Err(Error::Shape {
                op: "label_distribution",
                lhs: vec![nodes.len(), num_classes],
                rhs: rows.shape().to_vec(),
            });
        }
        let mut data = vec![0.0; num_nodes * num_classes];
        let mut valid = vec![false; num_nodes];
        for (k, &n) in nodes.iter().enumerate() {
            let r = rows.row(k);
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-6 || r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Normalization { row: n, sum: s });
            }
            data[n * num_classes..(n + 1) * num_classes].copy_from_slice(r);
            valid[n] = true;
        }
        Ok(LabelDistribution {
            probs: Tensor::from_parts(vec![num_nodes, num_classes], data),
            valid,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.valid.len()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn covers(&self, n: usize) -> bool {
        self.valid.get(n).copied().unwrap_or(false)
    }

    /// Nodes with a meaningful row, ascending.
    pub fn nodes(&self) -> Vec<usize> {
        (0..self.valid.len()).filter(|&n| self.valid[n]).collect()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        self.probs.row(n)
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    /// Arg-max class; ties go to the smallest index.
    pub fn argmax(&self, n: usize) -> usize {
        let mut best = 0;
        for (c, &p) in self.row(n).iter().enumerate() {
            if p > self.row(n)[best] {
                best = c;
            }
        }
        best
    }

    /// Rows for `nodes` stacked into a `[|nodes|×C]` tensor.
    pub fn rows_for(&self, nodes: &[usize]) -> Tensor {
        self.probs.select_rows(nodes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Lm,
    Gnn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlMode {
    /// Full predictive distribution.
    #[default]
    Soft,
    /// One-hot at a categorical sample.
    Hard,
}

/// Snapshot of one module's predictions on `U`, tagged with its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet {
    pub dist: LabelDistribution,
    pub source: Module,
    pub em_iter: usize,
    pub mode: PlMode,
}

impl PseudoLabelSet {
    /// Restricts `pred` to `nodes`, sampling one-hot rows in hard mode.
    pub fn from_predictions(
        pred: &LabelDistribution,
        nodes: &[usize],
        source: Module,
        em_iter: usize,
        mode: PlMode,
        seed: u64,
    ) -> Result<Self> {
        let c = pred.num_classes();
        let mut rows = pred.rows_for(nodes);
        if mode == PlMode::Hard {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for r in rows.data_mut().chunks_mut(c) {
                let pick = sample_categorical(r, &mut rng);
                r.iter_mut().enumerate().for_each(|(k, v)| *v = f64::from(k == pick));
            }
        }
        Ok(PseudoLabelSet {
            dist: LabelDistribution::from_node_rows(pred.num_nodes(), c, nodes, &rows)?,
            source,
            em_iter,
            mode,
        })
    }

    /// Errors with the first node of `nodes` that has no row.
    pub fn ensure_covers(&self, nodes: &[usize]) -> Result<()> {
        match nodes.iter().find(|&&n| !self.dist.covers(n)) {
            Some(&n) => Err(Error::MissingPseudoLabel(n)),
            None => Ok(()),
        }
    }
}

/// Inverse-CDF draw; the last class absorbs rounding slack.
pub fn sample_categorical<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.iter().rposition(|&pk| pk > 0.0).unwrap_or(p.len() - 1)
}
