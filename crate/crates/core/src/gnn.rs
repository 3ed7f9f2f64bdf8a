//! Message-passing classifier `p(y_n | Â, H0)`.
//!
//! `H^{(l)} = ReLU(Â · H^{(l-1)} · W^{(l)} + b^{(l)})` with the last layer
//! left linear and row-softmaxed. The input `H0` is a snapshot of text-model
//! embeddings; nothing here differentiates back into the text model.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::accuracy;
use crate::labels::{LabelDistribution, PseudoLabelSet};
use crate::lm::{gold_labels, EpochRecord, TrainOpts, TrainTrace};
use crate::numerics::{adam_update, AdamState, ComputeGraph, CsrMatrix, Tensor, Var};
use crate::objective::{mixed_loss, MixedTargets};
use crate::taggraph::{Aggregation, NormalizedAdjacency, Split, TagGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub aggregation: Aggregation,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            layers: 1,
            hidden: 64,
            aggregation: Aggregation::Gcn,
        }
    }
}

/// Per-layer weight `[d_{l-1}×d_l]` and bias `[1×d_l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl GnnParams {
    pub fn init(in_dim: usize, num_classes: usize, cfg: &GnnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = cfg.layers.max(1);
        let mut widths = vec![in_dim];
        widths.extend(std::iter::repeat(cfg.hidden).take(depth - 1));
        widths.push(num_classes);
        let layers = widths
            .windows(2)
            .map(|w| {
                (
                    Tensor::glorot(w[0], w[1], &mut rng),
                    Tensor::zeros(vec![1, w[1]]).with_requires_grad(true),
                )
            })
            .collect();
        GnnParams { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].0.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |(w, _)| w.cols())
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [
                    (format!("gnn.layer{}.weight", i + 1), w),
                    (format!("gnn.layer{}.bias", i + 1), b),
                ]
            })
            .collect()
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [
                    (format!("gnn.layer{}.weight", i + 1), w),
                    (format!("gnn.layer{}.bias", i + 1), b),
                ]
            })
            .collect()
    }

    pub fn from_named(entries: &BTreeMap<String, Tensor>) -> Result<Self> {
        let mut layers = Vec::new();
        for l in 1.. {
            let (wk, bk) = (format!("gnn.layer{l}.weight"), format!("gnn.layer{l}.bias"));
            match (entries.get(&wk), entries.get(&bk)) {
                (Some(w), Some(b)) => layers.push((
                    w.clone().with_requires_grad(true),
                    b.clone().with_requires_grad(true),
                )),
                (None, None) => break,
                (None, _) => return Err(Error::MissingEntry(wk)),
                (_, None) => return Err(Error::MissingEntry(bk)),
            }
        }
        if layers.is_empty() {
            return Err(Error::MissingEntry("gnn.layer1.weight".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].0.cols() != pair[1].0.rows() {
                return Err(Error::Shape {
                    op: "gnn layers",
                    lhs: pair[0].0.shape().to_vec(),
                    rhs: pair[1].0.shape().to_vec(),
                });
            }
        }
        Ok(GnnParams { layers })
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn bind(&self, g: &mut ComputeGraph) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|(w, b)| (g.param(w), g.param(b)))
            .collect()
    }

    fn bind_frozen(&self, g: &mut ComputeGraph) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|(w, b)| {
                (
                    g.constant(w.clone().with_requires_grad(false)),
                    g.constant(b.clone().with_requires_grad(false)),
                )
            })
            .collect()
    }
}

/// Records the layer stack; returns logits `[N×C]`.
pub fn forward(g: &mut ComputeGraph, vars: &[(Var, Var)], adj: &Arc<CsrMatrix>, h0: Var) -> Result<Var> {
    let mut h = h0;
    let identity = adj.is_identity();
    for (l, &(w, b)) in vars.iter().enumerate() {
        let agg = if identity { h } else { g.spmm(Arc::clone(adj), h)? };
        let z = g.matmul(agg, w)?;
        let z = g.add_row_bias(z, b)?;
        h = if l + 1 < vars.len() { g.relu(z)? } else { z };
    }
    Ok(h)
}

fn check_input(params: &GnnParams, adj: &NormalizedAdjacency, h0: &Tensor) -> Result<()> {
    if h0.rows() != adj.num_nodes() || h0.cols() != params.in_dim() {
        return Err(Error::Shape {
            op: "gnn_forward",
            lhs: h0.shape().to_vec(),
            rhs: vec![adj.num_nodes(), params.in_dim()],
        });
    }
    Ok(())
}

/// Class distribution for every node.
pub fn gnn_forward(params: &GnnParams, adj: &NormalizedAdjacency, h0: &Tensor) -> Result<LabelDistribution> {
    check_input(params, adj, h0)?;
    let mut g = ComputeGraph::new();
    let vars = params.bind_frozen(&mut g);
    let x = g.constant(h0.clone());
    let z = forward(&mut g, &vars, &adj.shared(), x)?;
    let lp = g.log_softmax_rows(z)?;
    let probs = g.softmax_rows_of_log(lp)?;
    let all: Vec<usize> = (0..adj.num_nodes()).collect();
    LabelDistribution::from_node_rows(adj.num_nodes(), params.num_classes(), &all, &probs)
}

/// Forward over the whole graph, then keep only `nodes`.
pub fn gnn_predict(
    params: &GnnParams,
    adj: &NormalizedAdjacency,
    h0: &Tensor,
    nodes: &[usize],
) -> Result<LabelDistribution> {
    let full = gnn_forward(params, adj, h0)?;
    let rows = full.rows_for(nodes);
    LabelDistribution::from_node_rows(full.num_nodes(), full.num_classes(), nodes, &rows)
}

/// Negated M-step objective over the whole graph: pseudo-label term on `U`
/// weighted by `beta`, gold term on `L` by `1 - beta`.
#[allow(clippy::too_many_arguments)]
pub fn m_step_loss(
    g: &mut ComputeGraph,
    vars: &[(Var, Var)],
    adj: &NormalizedAdjacency,
    h0: Var,
    graph: &TagGraph,
    pl: Option<&LabelDistribution>,
    beta: f64,
) -> Result<Var> {
    let unlabeled = if beta > 0.0 { graph.unlabeled_nodes() } else { Vec::new() };
    let labeled = if beta < 1.0 { graph.labeled_nodes() } else { Vec::new() };
    let gold = gold_labels(graph, &labeled)?;
    let t = MixedTargets::by_node(pl, &unlabeled, &labeled, &gold, graph.num_nodes(), graph.num_classes())?;
    let z = forward(g, vars, &adj.shared(), h0)?;
    let lp = g.log_softmax_rows(z)?;
    mixed_loss(g, lp, &t, beta)
}

/// Negative log-likelihood of gold labels on `L`.
pub fn supervised_loss(
    g: &mut ComputeGraph,
    vars: &[(Var, Var)],
    adj: &NormalizedAdjacency,
    h0: Var,
    graph: &TagGraph,
) -> Result<Var> {
    let labeled = graph.labeled_nodes();
    let gold = gold_labels(graph, &labeled)?;
    let c = graph.num_classes();
    let mut onehot = Tensor::zeros(vec![graph.num_nodes(), c]);
    for (&n, &y) in labeled.iter().zip(&gold) {
        onehot.data_mut()[n * c + y] = 1.0;
    }
    let z = forward(g, vars, &adj.shared(), h0)?;
    let lp = g.log_softmax_rows(z)?;
    g.soft_cross_entropy(lp, &onehot, &labeled)
}

fn val_accuracy(params: &GnnParams, adj: &NormalizedAdjacency, h0: &Tensor, graph: &TagGraph) -> Result<f64> {
    let val = graph.nodes_in(Split::Val);
    if val.is_empty() {
        return Ok(0.0);
    }
    Ok(accuracy(&gnn_forward(params, adj, h0)?, graph, &val))
}

fn train_full_batch(
    params: &mut GnnParams,
    adj: &NormalizedAdjacency,
    h0: &Tensor,
    graph: &TagGraph,
    opts: &TrainOpts,
    loss_fn: impl Fn(&mut ComputeGraph, &[(Var, Var)], Var) -> Result<Var>,
) -> Result<TrainTrace> {
    check_input(params, adj, h0)?;
    let mut adam = AdamState::new(opts.lr);
    let mut trace = TrainTrace::default();
    for epoch in 1..=opts.epochs {
        let mut g = ComputeGraph::new();
        let vars = params.bind(&mut g);
        let x = g.constant(h0.clone());
        let loss = loss_fn(&mut g, &vars, x)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        let order = vars.iter().flat_map(|&(w, b)| [w, b]);
        for ((_, p), v) in params.named_mut().into_iter().zip(order) {
            grads.accumulate_into(v, p)?;
        }
        adam_update(&mut params.named_mut(), &mut adam)?;
        trace.updates += 1;
        trace.epochs.push(EpochRecord {
            epoch,
            loss: value,
            val_acc: val_accuracy(params, adj, h0, graph)?,
        });
    }
    Ok(trace)
}

/// Supervised training on gold labels only.
pub fn gnn_train_supervised(
    params: &mut GnnParams,
    adj: &NormalizedAdjacency,
    h0: &Tensor,
    graph: &TagGraph,
    opts: &TrainOpts,
) -> Result<TrainTrace> {
    if graph.labeled_nodes().is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    train_full_batch(params, adj, h0, graph, opts, |g, v, x| {
        supervised_loss(g, v, adj, x, graph)
    })
}

/// M-step: fit the graph model to text-model pseudo-labels on `U` and gold
/// labels on `L`, one full-batch Adam update per epoch.
pub fn gnn_train_m_step(
    params: &mut GnnParams,
    adj: &NormalizedAdjacency,
    h0: &Tensor,
    graph: &TagGraph,
    pl: &PseudoLabelSet,
    beta: f64,
    opts: &TrainOpts,
) -> Result<TrainTrace> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Range {
            key: "beta".into(),
            msg: format!("{beta} not in [0, 1]"),
        });
    }
    pl.ensure_covers(&graph.unlabeled_nodes())?;
    train_full_batch(params, adj, h0, graph, opts, |g, v, x| {
        m_step_loss(g, v, adj, x, graph, Some(&pl.dist), beta)
    })
}
