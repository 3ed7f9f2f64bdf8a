//! Text-only node classifier `q(y_n | s_n)`.
//!
//! Encoder: token embeddings, an optional single-head self-attention block
//! with a residual connection, mean pooling over positions, then a `tanh`
//! projection. The pooled-and-projected vector is the node embedding handed
//! to the graph model; a linear head plus softmax gives the class
//! distribution.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::accuracy;
use crate::labels::{LabelDistribution, PseudoLabelSet};
use crate::numerics::{adam_update, AdamState, ComputeGraph, Gradients, Tensor, Var};
use crate::objective::{mixed_loss, MixedTargets};
use crate::taggraph::{Split, TagGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    /// Embedding and hidden width.
    pub dim: usize,
    pub attention: bool,
    /// Half-width of the uniform embedding initialization.
    pub embed_init: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            dim: 32,
            attention: false,
            embed_init: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
}

/// Encoder and classifier weights. Row-vector convention: `h = x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmParams {
    pub embed: Tensor,
    pub attn: Option<AttentionParams>,
    pub hidden_w: Tensor,
    pub hidden_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// Graph handles for one bound copy of [`LmParams`].
#[derive(Clone, Debug)]
pub struct LmVars {
    embed: Var,
    attn: Option<[Var; 4]>,
    hidden_w: Var,
    hidden_b: Var,
    head_w: Var,
    head_b: Var,
}

impl LmVars {
    /// Handles in [`LmParams::named`] order.
    pub fn from_vars(vars: &[Var]) -> Result<Self> {
        let attn = match vars.len() {
            5 => None,
            9 => Some([vars[1], vars[2], vars[3], vars[4]]),
            n => return Err(Error::Invalid(format!("expected 5 or 9 text-model handles, got {n}"))),
        };
        let tail = &vars[vars.len() - 4..];
        Ok(LmVars {
            embed: vars[0],
            attn,
            hidden_w: tail[0],
            hidden_b: tail[1],
            head_w: tail[2],
            head_b: tail[3],
        })
    }

    fn in_param_order(&self) -> Vec<Var> {
        let mut v = vec![self.embed];
        if let Some(a) = self.attn {
            v.extend(a);
        }
        v.extend([self.hidden_w, self.hidden_b, self.head_w, self.head_b]);
        v
    }
}

impl LmParams {
    pub fn init(vocab_size: usize, num_classes: usize, cfg: &LmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.dim;
        let embed = Tensor::uniform(vocab_size, d, cfg.embed_init, &mut rng);
        let attn = cfg.attention.then(|| AttentionParams {
            query: Tensor::glorot(d, d, &mut rng),
            key: Tensor::glorot(d, d, &mut rng),
            value: Tensor::glorot(d, d, &mut rng),
            output: Tensor::glorot(d, d, &mut rng),
        });
        LmParams {
            embed,
            attn,
            hidden_w: Tensor::glorot(d, d, &mut rng),
            hidden_b: Tensor::zeros(vec![1, d]).with_requires_grad(true),
            head_w: Tensor::glorot(d, num_classes, &mut rng),
            head_b: Tensor::zeros(vec![1, num_classes]).with_requires_grad(true),
        }
    }

    pub fn dim(&self) -> usize {
        self.embed.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.head_w.cols()
    }

    /// Parameters under their checkpoint names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("lm.embed".to_string(), &self.embed)];
        if let Some(a) = &self.attn {
            v.push(("lm.attn.query".into(), &a.query));
            v.push(("lm.attn.key".into(), &a.key));
            v.push(("lm.attn.value".into(), &a.value));
            v.push(("lm.attn.output".into(), &a.output));
        }
        v.push(("lm.hidden.weight".into(), &self.hidden_w));
        v.push(("lm.hidden.bias".into(), &self.hidden_b));
        v.push(("lm.head.weight".into(), &self.head_w));
        v.push(("lm.head.bias".into(), &self.head_b));
        v
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![("lm.embed".to_string(), &mut self.embed)];
        if let Some(a) = &mut self.attn {
            v.push(("lm.attn.query".into(), &mut a.query));
            v.push(("lm.attn.key".into(), &mut a.key));
            v.push(("lm.attn.value".into(), &mut a.value));
            v.push(("lm.attn.output".into(), &mut a.output));
        }
        v.push(("lm.hidden.weight".into(), &mut self.hidden_w));
        v.push(("lm.hidden.bias".into(), &mut self.hidden_b));
        v.push(("lm.head.weight".into(), &mut self.head_w));
        v.push(("lm.head.bias".into(), &mut self.head_b));
        v
    }

    /// Rebuilds parameters from checkpoint entries.
    pub fn from_named(entries: &BTreeMap<String, Tensor>) -> Result<Self> {
        let take = |k: &str| -> Result<Tensor> {
            entries
                .get(k)
                .cloned()
                .map(|t| t.with_requires_grad(true))
                .ok_or_else(|| Error::MissingEntry(k.into()))
        };
        let attn = if entries.contains_key("lm.attn.query") {
            Some(AttentionParams {
                query: take("lm.attn.query")?,
                key: take("lm.attn.key")?,
                value: take("lm.attn.value")?,
                output: take("lm.attn.output")?,
            })
        } else {
            None
        };
        Ok(LmParams {
            embed: take("lm.embed")?,
            attn,
            hidden_w: take("lm.hidden.weight")?,
            hidden_b: take("lm.hidden.bias")?,
            head_w: take("lm.head.weight")?,
            head_b: take("lm.head.bias")?,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn bind(&self, g: &mut ComputeGraph) -> LmVars {
        LmVars {
            embed: g.param(&self.embed),
            attn: self.attn.as_ref().map(|a| {
                [
                    g.param(&a.query),
                    g.param(&a.key),
                    g.param(&a.value),
                    g.param(&a.output),
                ]
            }),
            hidden_w: g.param(&self.hidden_w),
            hidden_b: g.param(&self.hidden_b),
            head_w: g.param(&self.head_w),
            head_b: g.param(&self.head_b),
        }
    }

    /// Adds the gradients of a backward pass into the parameter slots.
    pub fn accumulate(&mut self, vars: &LmVars, grads: &Gradients) -> Result<()> {
        for ((_, p), v) in self.named_mut().into_iter().zip(vars.in_param_order()) {
            grads.accumulate_into(v, p)?;
        }
        Ok(())
    }
}

/// Records the encoder for `nodes`; returns `h` of shape `[|nodes|×d]`.
pub fn encode(g: &mut ComputeGraph, v: &LmVars, graph: &TagGraph, nodes: &[usize]) -> Result<Var> {
    if nodes.is_empty() {
        return Err(Error::Invalid("empty node set".into()));
    }
    let pooled = match v.attn {
        None => {
            let groups = nodes.iter().map(|&n| to_rows(graph.text(n))).collect();
            g.segment_mean(v.embed, groups)?
        }
        Some([wq, wk, wv, wo]) => {
            let scale = 1.0 / (g.value(v.embed).cols() as f64).sqrt();
            let mut rows = Vec::with_capacity(nodes.len());
            for &n in nodes {
                let tokens = to_rows(graph.text(n)).into_iter().map(|t| vec![t]).collect();
                let x = g.segment_mean(v.embed, tokens)?;
                let q = g.matmul(x, wq)?;
                let k = g.matmul(x, wk)?;
                let val = g.matmul(x, wv)?;
                let scores = g.matmul_nt(q, k)?;
                let scores = g.scale(scores, scale)?;
                let att = g.softmax_rows(scores)?;
                let ctx = g.matmul(att, val)?;
                let out = g.matmul(ctx, wo)?;
                let y = g.add(x, out)?;
                rows.push(g.mean_rows(y)?);
            }
            g.concat_rows(rows)?
        }
    };
    let pre = g.matmul(pooled, v.hidden_w)?;
    let pre = g.add_row_bias(pre, v.hidden_b)?;
    g.tanh(pre)
}

fn to_rows(tokens: &[u32]) -> Vec<usize> {
    tokens.iter().map(|&t| t as usize).collect()
}

/// Classifier head on embeddings: unnormalized logits.
pub fn head(g: &mut ComputeGraph, v: &LmVars, h: Var) -> Result<Var> {
    let z = g.matmul(h, v.head_w)?;
    g.add_row_bias(z, v.head_b)
}

/// Log-probabilities `log q(·|s_n)` for `nodes`.
pub fn log_probs(g: &mut ComputeGraph, v: &LmVars, graph: &TagGraph, nodes: &[usize]) -> Result<Var> {
    let h = encode(g, v, graph, nodes)?;
    let z = head(g, v, h)?;
    g.log_softmax_rows(z)
}

/// Node embeddings `h_n` (no gradient tracking).
pub fn lm_encode(params: &LmParams, graph: &TagGraph, nodes: &[usize]) -> Result<Tensor> {
    let mut g = ComputeGraph::new();
    let v = bind_frozen(params, &mut g);
    let h = encode(&mut g, &v, graph, nodes)?;
    Ok(g.value(h).clone())
}

/// `softmax(head(h_n))` for `nodes`, as a distribution covering them.
pub fn lm_predict(params: &LmParams, graph: &TagGraph, nodes: &[usize]) -> Result<LabelDistribution> {
    let mut g = ComputeGraph::new();
    let v = bind_frozen(params, &mut g);
    let lp = log_probs(&mut g, &v, graph, nodes)?;
    let probs = g.softmax_rows_of_log(lp)?;
    LabelDistribution::from_node_rows(graph.num_nodes(), params.num_classes(), nodes, &probs)
}

/// Embeddings and class distribution for every node from a single encoder
/// pass.
pub fn lm_outputs(params: &LmParams, graph: &TagGraph) -> Result<(Tensor, LabelDistribution)> {
    let mut g = ComputeGraph::new();
    let v = bind_frozen(params, &mut g);
    let all = graph.all_nodes();
    let h = encode(&mut g, &v, graph, &all)?;
    let z = head(&mut g, &v, h)?;
    let lp = g.log_softmax_rows(z)?;
    let probs = g.softmax_rows_of_log(lp)?;
    let dist = LabelDistribution::from_node_rows(graph.num_nodes(), params.num_classes(), &all, &probs)?;
    Ok((g.value(h).clone(), dist))
}

pub(crate) fn bind_frozen(params: &LmParams, g: &mut ComputeGraph) -> LmVars {
    let mut frozen = params.clone();
    for (_, t) in frozen.named_mut() {
        *t = t.clone().with_requires_grad(false);
    }
    frozen.bind(g)
}

impl ComputeGraph {
    /// `exp` of a log-probability node, as a detached tensor.
    pub(crate) fn softmax_rows_of_log(&self, lp: Var) -> Result<Tensor> {
        let v = self.value(lp);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x.exp()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOpts {
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size; 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Node texts run through the encoder while training.
    pub texts_encoded: u64,
    pub updates: u64,
}

/// Negative log-likelihood of gold labels on `batch`.
pub fn supervised_loss(g: &mut ComputeGraph, v: &LmVars, graph: &TagGraph, batch: &[usize]) -> Result<Var> {
    let gold = gold_labels(graph, batch)?;
    let c = graph.num_classes();
    let mut onehot = Tensor::zeros(vec![batch.len(), c]);
    for (k, &y) in gold.iter().enumerate() {
        onehot.data_mut()[k * c + y] = 1.0;
    }
    let lp = log_probs(g, v, graph, batch)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    g.soft_cross_entropy(lp, &onehot, &rows)
}

/// Negated E-step objective on one pair of batches: pseudo-label term over
/// `u_batch` weighted by `alpha`, gold term over `l_batch` by `1 - alpha`.
pub fn e_step_loss(
    g: &mut ComputeGraph,
    v: &LmVars,
    graph: &TagGraph,
    u_batch: &[usize],
    l_batch: &[usize],
    pl: Option<&LabelDistribution>,
    alpha: f64,
) -> Result<Var> {
    let u_batch = if alpha > 0.0 { u_batch } else { &[] };
    let l_batch = if alpha < 1.0 { l_batch } else { &[] };
    let gold = gold_labels(graph, l_batch)?;
    let targets = MixedTargets::stack(pl, u_batch, &gold, graph.num_classes())?;
    let rows: Vec<usize> = u_batch.iter().chain(l_batch).copied().collect();
    let lp = log_probs(g, v, graph, &rows)?;
    mixed_loss(g, lp, &targets, alpha)
}

pub(crate) fn gold_labels(graph: &TagGraph, nodes: &[usize]) -> Result<Vec<usize>> {
    nodes
        .iter()
        .map(|&n| graph.label(n).ok_or(Error::MissingLabel(n)))
        .collect()
}

fn batches(nodes: &[usize], size: usize) -> Vec<Vec<usize>> {
    let size = if size == 0 { nodes.len().max(1) } else { size };
    nodes.chunks(size).map(<[usize]>::to_vec).collect()
}

fn val_accuracy(params: &LmParams, graph: &TagGraph) -> Result<f64> {
    let val = graph.nodes_in(Split::Val);
    if val.is_empty() {
        return Ok(0.0);
    }
    let pred = lm_predict(params, graph, &val)?;
    Ok(accuracy(&pred, graph, &val))
}

fn step(params: &mut LmParams, adam: &mut AdamState, build: impl FnOnce(&mut ComputeGraph, &LmVars) -> Result<Var>) -> Result<f64> {
    let mut g = ComputeGraph::new();
    let vars = params.bind(&mut g);
    let loss = build(&mut g, &vars)?;
    let value = g.value(loss).item();
    let grads = g.backward(loss)?;
    params.accumulate(&vars, &grads)?;
    adam_update(&mut params.named_mut(), adam)?;
    Ok(value)
}

/// Supervised fine-tuning on the train split with shuffled minibatches.
pub fn lm_train_supervised(params: &mut LmParams, graph: &TagGraph, opts: &TrainOpts) -> Result<TrainTrace> {
    let train = graph.labeled_nodes();
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(opts.lr);
    let mut trace = TrainTrace::default();
    for epoch in 1..=opts.epochs {
        let mut order = train.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in batches(&order, opts.batch_size) {
            let loss = step(params, &mut adam, |g, v| supervised_loss(g, v, graph, &batch))?;
            total += loss * batch.len() as f64;
            trace.texts_encoded += batch.len() as u64;
            trace.updates += 1;
        }
        trace.epochs.push(EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            val_acc: val_accuracy(params, graph)?,
        });
    }
    Ok(trace)
}

/// E-step: fit the text model to graph-model pseudo-labels on `U` and gold
/// labels on `L`, mixed by `alpha`.
///
/// Each update pairs one `U` batch with one `L` batch; an epoch is one pass
/// over the larger of the two sets with the smaller one cycled.
pub fn lm_train_e_step(
    params: &mut LmParams,
    graph: &TagGraph,
    pl: &PseudoLabelSet,
    alpha: f64,
    opts: &TrainOpts,
) -> Result<TrainTrace> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Range {
            key: "alpha".into(),
            msg: format!("{alpha} not in [0, 1]"),
        });
    }
    let unlabeled = graph.unlabeled_nodes();
    let labeled = graph.labeled_nodes();
    pl.ensure_covers(&unlabeled)?;
    if labeled.is_empty() && alpha < 1.0 {
        return Err(Error::EmptySplit("train"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(opts.lr);
    let mut trace = TrainTrace::default();
    for epoch in 1..=opts.epochs {
        let mut u_order = unlabeled.clone();
        u_order.shuffle(&mut rng);
        let mut l_order = labeled.clone();
        l_order.shuffle(&mut rng);
        let size = if opts.batch_size == 0 {
            u_order.len().max(l_order.len()).max(1)
        } else {
            opts.batch_size
        };
        let u_batches = batches(&u_order, size);
        let l_batches = batches(&l_order, size);
        let steps = u_batches.len().max(l_batches.len()).max(1);
        let mut total = 0.0;
        for s in 0..steps {
            let ub = u_batches.get(s % u_batches.len().max(1)).cloned().unwrap_or_default();
            let lb = l_batches.get(s % l_batches.len().max(1)).cloned().unwrap_or_default();
            total += step(params, &mut adam, |g, v| {
                e_step_loss(g, v, graph, &ub, &lb, Some(&pl.dist), alpha)
            })?;
            let encoded = if alpha > 0.0 { ub.len() } else { 0 } + if alpha < 1.0 { lb.len() } else { 0 };
            trace.texts_encoded += encoded as u64;
            trace.updates += 1;
        }
        trace.epochs.push(EpochRecord {
            epoch,
            loss: total / steps as f64,
            val_acc: val_accuracy(params, graph)?,
        });
    }
    Ok(trace)
}
