//! End-to-end co-training over sampled neighbour texts.
//!
//! Each center node forms a star with up to `K` uniformly sampled
//! neighbours. Every member is encoded by the text model inside the training
//! graph, the star is mean-pooled, passed through one linear aggregation
//! layer, and classified by the text model's head.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{streams, EmConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::evalsuite::accuracy;
use crate::labels::LabelDistribution;
use crate::lm::{encode, gold_labels, head, EpochRecord, LmParams, LmVars, TrainTrace};
use crate::numerics::{adam_update, AdamState, ComputeGraph, Tensor, Var};
use crate::taggraph::{Split, TagGraph};

#[derive(Clone, Debug, PartialEq)]
pub struct JointParams {
    pub lm: LmParams,
    pub agg_w: Tensor,
    pub agg_b: Tensor,
}

impl JointParams {
    pub fn init(vocab_size: usize, num_classes: usize, model: &ModelConfig, seed: u64) -> Self {
        let lm = LmParams::init(vocab_size, num_classes, &model.lm, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
        let d = lm.dim();
        JointParams {
            agg_w: Tensor::glorot(d, d, &mut rng),
            agg_b: Tensor::zeros(vec![1, d]).with_requires_grad(true),
            lm,
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.lm.named();
        v.push(("joint.agg.weight".into(), &self.agg_w));
        v.push(("joint.agg.bias".into(), &self.agg_b));
        v
    }

    pub fn from_named(entries: &BTreeMap<String, Tensor>) -> Result<Self> {
        let take = |k: &str| {
            entries
                .get(k)
                .map(|t| t.clone().with_requires_grad(true))
                .ok_or_else(|| Error::MissingEntry(k.into()))
        };
        Ok(JointParams {
            lm: LmParams::from_named(entries)?,
            agg_w: take("joint.agg.weight")?,
            agg_b: take("joint.agg.bias")?,
        })
    }

    /// Parameters outside the text model.
    pub fn num_aggregator_parameters(&self) -> usize {
        self.agg_w.len() + self.agg_b.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.lm.num_parameters() + self.num_aggregator_parameters()
    }
}

/// Center first, then `min(k, degree)` neighbours drawn without
/// replacement.
pub fn sample_star(g: &TagGraph, center: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let nb = g.neighbors(center);
    let mut star = vec![center];
    star.extend(nb.choose_multiple(rng, k.min(nb.len())).copied());
    star
}

/// Records log-probabilities for one row per star.
pub fn joint_log_probs(
    g: &mut ComputeGraph,
    lm: &LmVars,
    agg: (Var, Var),
    graph: &TagGraph,
    stars: &[Vec<usize>],
) -> Result<Var> {
    let flat: Vec<usize> = stars.iter().flatten().copied().collect();
    let h = encode(g, lm, graph, &flat)?;
    let mut groups = Vec::with_capacity(stars.len());
    let mut off = 0;
    for s in stars {
        groups.push((off..off + s.len()).collect());
        off += s.len();
    }
    let pooled = g.segment_mean(h, groups)?;
    let a = g.matmul(pooled, agg.0)?;
    let a = g.add_row_bias(a, agg.1)?;
    let z = head(g, lm, a)?;
    g.log_softmax_rows(z)
}

/// Gold-label cross-entropy on the star centers.
pub fn joint_loss(
    g: &mut ComputeGraph,
    lm: &LmVars,
    agg: (Var, Var),
    graph: &TagGraph,
    stars: &[Vec<usize>],
) -> Result<Var> {
    let centers: Vec<usize> = stars.iter().map(|s| s[0]).collect();
    let gold = gold_labels(graph, &centers)?;
    let c = graph.num_classes();
    let mut onehot = Tensor::zeros(vec![stars.len(), c]);
    for (k, &y) in gold.iter().enumerate() {
        onehot.data_mut()[k * c + y] = 1.0;
    }
    let lp = joint_log_probs(g, lm, agg, graph, stars)?;
    let rows: Vec<usize> = (0..stars.len()).collect();
    g.soft_cross_entropy(lp, &onehot, &rows)
}

/// Predictions for `nodes` with neighbours drawn from `seed`.
pub fn joint_predict(
    params: &JointParams,
    graph: &TagGraph,
    nodes: &[usize],
    k: usize,
    seed: u64,
) -> Result<LabelDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stars: Vec<Vec<usize>> = nodes.iter().map(|&n| sample_star(graph, n, k, &mut rng)).collect();
    let mut g = ComputeGraph::new();
    let lm = crate::lm::bind_frozen(&params.lm, &mut g);
    let agg = (
        g.constant(params.agg_w.clone().with_requires_grad(false)),
        g.constant(params.agg_b.clone().with_requires_grad(false)),
    );
    let lp = joint_log_probs(&mut g, &lm, agg, graph, &stars)?;
    let probs = g.softmax_rows_of_log(lp)?;
    LabelDistribution::from_node_rows(graph.num_nodes(), params.lm.num_classes(), nodes, &probs)
}

#[derive(Clone, Debug)]
pub struct JointRun {
    pub params: JointParams,
    pub k: usize,
    pub trace: TrainTrace,
    pub wallclock_ms: u64,
    /// Seed for neighbour sampling at inference.
    pub eval_seed: u64,
}

impl JointRun {
    pub fn predict(&self, graph: &TagGraph, nodes: &[usize]) -> Result<LabelDistribution> {
        joint_predict(&self.params, graph, nodes, self.k, self.eval_seed)
    }
}

/// Supervised co-training with minibatches of centers from the train split;
/// uses the text-model pretraining schedule.
pub fn train_joint(g: &TagGraph, model: &ModelConfig, cfg: &EmConfig, k: usize) -> Result<JointRun> {
    cfg.validate()?;
    let train = g.labeled_nodes();
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let started = Instant::now();
    let mut params = JointParams::init(g.vocab_size(), g.num_classes(), model, cfg.sub_seed(streams::LM_INIT));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sub_seed(streams::JOINT));
    let eval_seed = cfg.sub_seed(streams::JOINT + 1);
    let mut adam = AdamState::new(cfg.lm_lr);
    let mut trace = TrainTrace::default();
    let size = if cfg.lm_batch == 0 { train.len() } else { cfg.lm_batch };
    let val = g.nodes_in(Split::Val);

    for epoch in 1..=cfg.lm_pretrain_epochs {
        let mut order = train.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(size) {
            let stars: Vec<Vec<usize>> = batch.iter().map(|&n| sample_star(g, n, k, &mut rng)).collect();
            let mut cg = ComputeGraph::new();
            let lm = params.lm.bind(&mut cg);
            let agg = (cg.param(&params.agg_w), cg.param(&params.agg_b));
            let loss = joint_loss(&mut cg, &lm, agg, g, &stars)?;
            total += cg.value(loss).item() * batch.len() as f64;
            let grads = cg.backward(loss)?;
            params.lm.accumulate(&lm, &grads)?;
            grads.accumulate_into(agg.0, &mut params.agg_w)?;
            grads.accumulate_into(agg.1, &mut params.agg_b)?;
            let mut named = params.lm.named_mut();
            named.push(("joint.agg.weight".into(), &mut params.agg_w));
            named.push(("joint.agg.bias".into(), &mut params.agg_b));
            adam_update(&mut named, &mut adam)?;
            trace.texts_encoded += stars.iter().map(|s| s.len() as u64).sum::<u64>();
            trace.updates += 1;
        }
        let val_acc = if val.is_empty() {
            0.0
        } else {
            accuracy(&joint_predict(&params, g, &val, k, eval_seed)?, g, &val)
        };
        trace.epochs.push(EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            val_acc,
        });
    }
    Ok(JointRun {
        params,
        k,
        trace,
        wallclock_ms: started.elapsed().as_millis() as u64,
        eval_seed,
    })
}
