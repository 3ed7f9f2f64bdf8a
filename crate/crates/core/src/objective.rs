//! The weighted pseudo-label objective shared by both training steps.
//!
//! With log-probabilities `log_p` over a row set that contains pseudo-labeled
//! rows `U` and gold-labeled rows `L`, the loss is
//!
//! ```text
//! loss = w · mean_{n∈U} -Σ_c p̂(c|n) log_p(c|n) + (1-w) · mean_{n∈L} -log_p(y_n|n)
//! ```
//!
//! i.e. the negated objective. A zero-weight term is not recorded at all, so
//! `w = 0` reproduces the purely supervised graph exactly.

use crate::error::{Error, Result};
use crate::labels::LabelDistribution;
use crate::numerics::{ComputeGraph, Tensor, Var};

/// Row-aligned targets for one loss evaluation.
#[derive(Clone, Debug)]
pub struct MixedTargets {
    /// `[rows×C]`: pseudo-label rows followed by one-hot gold rows.
    pub target: Tensor,
    pub pseudo_rows: Vec<usize>,
    pub gold_rows: Vec<usize>,
}

impl MixedTargets {
    /// Rows `0..|pseudo_nodes|` take `pl` rows; the following rows are
    /// one-hot at `gold`. Log-probabilities must be stacked the same way.
    pub fn stack(
        pl: Option<&LabelDistribution>,
        pseudo_nodes: &[usize],
        gold: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        let rows = pseudo_nodes.len() + gold.len();
        let mut data = vec![0.0; rows * num_classes];
        if !pseudo_nodes.is_empty() {
            let pl = pl.ok_or_else(|| Error::MissingPseudoLabel(pseudo_nodes[0]))?;
            for (k, &n) in pseudo_nodes.iter().enumerate() {
                if !pl.covers(n) {
                    return Err(Error::MissingPseudoLabel(n));
                }
                data[k * num_classes..(k + 1) * num_classes].copy_from_slice(pl.row(n));
            }
        }
        let off = pseudo_nodes.len();
        for (k, &y) in gold.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::Invalid(format!("gold label {y} out of range")));
            }
            data[(off + k) * num_classes + y] = 1.0;
        }
        Ok(MixedTargets {
            target: Tensor::from_parts(vec![rows, num_classes], data),
            pseudo_rows: (0..off).collect(),
            gold_rows: (off..rows).collect(),
        })
    }

    /// Targets addressed directly by node id, for full-graph losses where
    /// `log_p` has one row per node.
    pub fn by_node(
        pl: Option<&LabelDistribution>,
        pseudo_nodes: &[usize],
        gold_nodes: &[usize],
        gold: &[usize],
        num_nodes: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let mut data = vec![0.0; num_nodes * num_classes];
        if !pseudo_nodes.is_empty() {
            let pl = pl.ok_or_else(|| Error::MissingPseudoLabel(pseudo_nodes[0]))?;
            for &n in pseudo_nodes {
                if !pl.covers(n) {
                    return Err(Error::MissingPseudoLabel(n));
                }
                data[n * num_classes..(n + 1) * num_classes].copy_from_slice(pl.row(n));
            }
        }
        for (&n, &y) in gold_nodes.iter().zip(gold) {
            if y >= num_classes {
                return Err(Error::Invalid(format!("gold label {y} out of range")));
            }
            data[n * num_classes..(n + 1) * num_classes].fill(0.0);
            data[n * num_classes + y] = 1.0;
        }
        Ok(MixedTargets {
            target: Tensor::from_parts(vec![num_nodes, num_classes], data),
            pseudo_rows: pseudo_nodes.to_vec(),
            gold_rows: gold_nodes.to_vec(),
        })
    }
}

/// Records the weighted loss; `weight` multiplies the pseudo-label term.
pub fn mixed_loss(g: &mut ComputeGraph, log_p: Var, t: &MixedTargets, weight: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::Range {
            key: "weight".into(),
            msg: format!("{weight} not in [0, 1]"),
        });
    }
    let mut terms = Vec::with_capacity(2);
    if weight > 0.0 {
        let ce = g.soft_cross_entropy(log_p, &t.target, &t.pseudo_rows)?;
        terms.push(g.scale(ce, weight)?);
    }
    if weight < 1.0 {
        let ce = g.soft_cross_entropy(log_p, &t.target, &t.gold_rows)?;
        terms.push(g.scale(ce, 1.0 - weight)?);
    }
    match terms.as_slice() {
        [one] => Ok(*one),
        [a, b] => g.add(*a, *b),
        _ => unreachable!("at least one term has positive weight"),
    }
}
