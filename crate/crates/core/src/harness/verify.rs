//! Finite-difference verification of every training loss on randomized
//! small instances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gnn::{m_step_loss, GnnConfig, GnnParams};
use crate::labels::LabelDistribution;
use crate::lm::{e_step_loss, supervised_loss, LmConfig, LmParams, LmVars};
use crate::numerics::{grad_check_many, Tensor, Var};
use crate::orchestrator::{joint_loss, sample_star, JointParams, ModelConfig};
use crate::taggraph::{Aggregation, NormalizedAdjacency, Split, TagGraph, Vocabulary};

pub const EPS: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckResult {
    pub loss: &'static str,
    pub trials: usize,
    pub max_rel_err: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

/// Random graph with at least one train and one non-train node.
pub fn random_instance(rng: &mut ChaCha8Rng) -> TagGraph {
    let n = rng.gen_range(4..8);
    let c = rng.gen_range(2..4);
    let vocab = Vocabulary::synthetic(5);
    let texts = (0..n)
        .map(|_| (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..6)).collect())
        .collect();
    let mut splits: Vec<Split> = (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => Split::Train,
            1 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    splits[0] = Split::Train;
    splits[1] = Split::Test;
    let labels = (0..n).map(|_| Some(rng.gen_range(0..c))).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.4) {
                edges.push((u, v));
            }
        }
    }
    TagGraph::new(c, vocab, texts, labels, splits, &edges).expect("valid random instance")
}

fn random_pl(g: &TagGraph, rng: &mut ChaCha8Rng) -> LabelDistribution {
    let c = g.num_classes();
    let nodes = g.unlabeled_nodes();
    let mut rows = Vec::with_capacity(nodes.len());
    for _ in &nodes {
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        rows.push(raw.into_iter().map(|x| x / s).collect());
    }
    let rows = Tensor::from_rows(&rows).expect("rectangular rows");
    LabelDistribution::from_node_rows(g.num_nodes(), c, &nodes, &rows).expect("normalized rows")
}

fn lm_config(rng: &mut ChaCha8Rng) -> LmConfig {
    LmConfig {
        dim: 3,
        attention: rng.gen_bool(0.5),
        embed_init: 0.5,
    }
}

fn detached(params: Vec<(String, &Tensor)>) -> Vec<Tensor> {
    params.into_iter().map(|(_, t)| t.clone()).collect()
}

fn check_lm_supervised(rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = random_instance(rng);
    let p = LmParams::init(g.vocab_size(), g.num_classes(), &lm_config(rng), rng.gen());
    let batch = g.labeled_nodes();
    grad_check_many(
        |cg, vs| supervised_loss(cg, &LmVars::from_vars(vs)?, &g, &batch),
        &detached(p.named()),
        EPS,
    )
}

fn check_e_step(rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = random_instance(rng);
    let p = LmParams::init(g.vocab_size(), g.num_classes(), &lm_config(rng), rng.gen());
    let pl = random_pl(&g, rng);
    let alpha = rng.gen_range(0.05..0.95);
    let (u, l) = (g.unlabeled_nodes(), g.labeled_nodes());
    grad_check_many(
        |cg, vs| e_step_loss(cg, &LmVars::from_vars(vs)?, &g, &u, &l, Some(&pl), alpha),
        &detached(p.named()),
        EPS,
    )
}

fn check_m_step(rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = random_instance(rng);
    let cfg = GnnConfig {
        layers: rng.gen_range(1..3),
        hidden: 3,
        aggregation: if rng.gen_bool(0.5) { Aggregation::Gcn } else { Aggregation::Mean },
    };
    let p = GnnParams::init(3, g.num_classes(), &cfg, rng.gen());
    let adj = NormalizedAdjacency::build(&g, cfg.aggregation);
    let h0 = Tensor::uniform(g.num_nodes(), 3, 1.0, rng);
    let pl = random_pl(&g, rng);
    let beta = rng.gen_range(0.05..0.95);
    let mut inputs = detached(p.named());
    inputs.push(h0);
    grad_check_many(
        |cg, vs| {
            let (h0, params) = vs.split_last().expect("at least one input");
            let pairs: Vec<(Var, Var)> = params.chunks(2).map(|w| (w[0], w[1])).collect();
            m_step_loss(cg, &pairs, &adj, *h0, &g, Some(&pl), beta)
        },
        &inputs,
        EPS,
    )
}

fn check_joint(rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = random_instance(rng);
    let model = ModelConfig {
        lm: lm_config(rng),
        ..Default::default()
    };
    let p = JointParams::init(g.vocab_size(), g.num_classes(), &model, rng.gen());
    let k = rng.gen_range(0..4);
    let stars: Vec<Vec<usize>> = g.labeled_nodes().iter().map(|&n| sample_star(&g, n, k, rng)).collect();
    grad_check_many(
        |cg, vs| {
            let (lm, agg) = vs.split_at(vs.len() - 2);
            joint_loss(cg, &LmVars::from_vars(lm)?, (agg[0], agg[1]), &g, &stars)
        },
        &detached(p.named()),
        EPS,
    )
}

/// Runs `trials` random instances of each loss; returns the worst relative
/// error per loss.
pub fn gradcheck_suite(trials: usize, seed: u64) -> Result<Vec<GradCheckResult>> {
    type Check = fn(&mut ChaCha8Rng) -> Result<f64>;
    let checks: [(&'static str, Check); 4] = [
        ("lm_supervised", check_lm_supervised),
        ("e_step", check_e_step),
        ("m_step", check_m_step),
        ("joint", check_joint),
    ];
    let mut out = Vec::new();
    for (i, (loss, check)) in checks.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 * 7919));
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            worst = worst.max(check(&mut rng)?);
        }
        out.push(GradCheckResult {
            loss,
            trials,
            max_rel_err: worst,
        });
    }
    Ok(out)
}

