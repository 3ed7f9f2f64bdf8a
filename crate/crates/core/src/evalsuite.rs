//! Accuracy, the transductive and structure-free protocols, and baselines
//! on frozen features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{gnn_forward, gnn_train_supervised, GnnConfig, GnnParams};
use crate::labels::LabelDistribution;
use crate::lm::{lm_predict, LmParams, TrainOpts};
use crate::numerics::Tensor;
use crate::taggraph::{Aggregation, NormalizedAdjacency, Split, TagGraph};

/// Fraction of `nodes` whose arg-max prediction equals the gold label.
/// Nodes without a gold label are skipped.
pub fn accuracy(pred: &LabelDistribution, graph: &TagGraph, nodes: &[usize]) -> f64 {
    accuracy_with(pred, graph.labels(), nodes)
}

pub fn accuracy_with(pred: &LabelDistribution, gold: &[Option<usize>], nodes: &[usize]) -> f64 {
    let mut seen = 0usize;
    let mut hit = 0usize;
    for &n in nodes {
        if let Some(y) = gold[n] {
            seen += 1;
            hit += usize::from(pred.argmax(n) == y);
        }
    }
    if seen == 0 {
        0.0
    } else {
        hit as f64 / seen as f64
    }
}

/// FNV-1a over names, shapes and value bits.
pub fn params_hash<'a>(named: impl IntoIterator<Item = (String, &'a Tensor)>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (name, t) in named {
        eat(name.as_bytes());
        for &d in t.shape() {
            eat(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            eat(&x.to_bits().to_le_bytes());
        }
    }
    h
}

/// One model under both protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// `gnn`, `mlp` or `lm`.
    pub model: String,
    /// Where the input features came from, e.g. `glem`, `lm_ft`, `bow`.
    pub features: String,
    pub with_struct: f64,
    pub without_struct: f64,
    /// `without_struct - with_struct`.
    pub diff: f64,
    /// Hash of the parameters that served both arms.
    pub checkpoint: u64,
}

impl EvalRow {
    fn new(model: &str, features: &str, with_struct: f64, without_struct: f64, checkpoint: u64) -> Self {
        EvalRow {
            model: model.into(),
            features: features.into(),
            with_struct,
            without_struct,
            diff: without_struct - with_struct,
            checkpoint,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn find(&self, model: &str, features: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.model == model && r.features == features)
    }
}

/// Evaluates a graph model (on embeddings `h0`) and the text model on
/// `test_nodes`, first on `g` and then with every edge touching a test node
/// removed. Both arms use the same parameters.
pub fn eval_structure_free(
    lm: &LmParams,
    gnn: &GnnParams,
    h0: &Tensor,
    g: &TagGraph,
    test_nodes: &[usize],
    aggregation: Aggregation,
    features: &str,
) -> Result<Vec<EvalRow>> {
    let stripped = g.strip_edges(test_nodes);
    let gnn_hash = params_hash(gnn.named());
    let lm_hash = params_hash(lm.named());

    let with = gnn_forward(gnn, &NormalizedAdjacency::build(g, aggregation), h0)?;
    let without = gnn_forward(gnn, &NormalizedAdjacency::build(&stripped, aggregation), h0)?;
    let gnn_row = EvalRow::new(
        "gnn",
        features,
        accuracy(&with, g, test_nodes),
        accuracy(&without, g, test_nodes),
        gnn_hash,
    );

    let with = lm_predict(lm, g, test_nodes)?;
    let without = lm_predict(lm, &stripped, test_nodes)?;
    let lm_row = EvalRow::new(
        "lm",
        features,
        accuracy(&with, g, test_nodes),
        accuracy(&without, g, test_nodes),
        lm_hash,
    );

    if params_hash(gnn.named()) != gnn_hash || params_hash(lm.named()) != lm_hash {
        return Err(Error::Invalid("parameters changed between protocol arms".into()));
    }
    Ok(vec![gnn_row, lm_row])
}

/// Row-normalized term frequencies over the vocabulary.
pub fn bow_features(g: &TagGraph) -> Tensor {
    let v = g.vocab_size();
    let mut data = vec![0.0; g.num_nodes() * v];
    for n in 0..g.num_nodes() {
        let text = g.text(n);
        let w = 1.0 / text.len().max(1) as f64;
        for &t in text {
            data[n * v + t as usize] += w;
        }
    }
    Tensor::matrix(g.num_nodes(), v, data).expect("shape matches construction")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 64,
            epochs: 200,
            lr: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpRun {
    pub params: GnnParams,
    pub row: EvalRow,
}

/// Two-layer perceptron on frozen features, trained on gold labels of the
/// train split. It never reads the adjacency, so both protocol arms see the
/// same predictions.
pub fn train_mlp_on_embeddings(
    features: &Tensor,
    g: &TagGraph,
    cfg: &MlpConfig,
    source: &str,
) -> Result<MlpRun> {
    let gcfg = GnnConfig {
        layers: 2,
        hidden: cfg.hidden,
        aggregation: Aggregation::Mean,
    };
    let mut params = GnnParams::init(features.cols(), g.num_classes(), &gcfg, cfg.seed);
    let eye = NormalizedAdjacency::identity(g.num_nodes());
    let opts = TrainOpts {
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch_size: 0,
        seed: cfg.seed,
    };
    gnn_train_supervised(&mut params, &eye, features, g, &opts)?;
    let test = g.nodes_in(Split::Test);
    let hash = params_hash(params.named());
    let with = accuracy(&mlp_predict(&params, features)?, g, &test);
    let without = accuracy(&mlp_predict(&params, features)?, g, &test);
    Ok(MlpRun {
        row: EvalRow::new("mlp", source, with, without, hash),
        params,
    })
}

pub fn mlp_predict(params: &GnnParams, features: &Tensor) -> Result<LabelDistribution> {
    gnn_forward(params, &NormalizedAdjacency::identity(features.rows()), features)
}

/// Sample mean and, with at least two values, sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (f64::NAN, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, std)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub features: String,
    /// `with_struct`, `without_struct` or `diff`.
    pub metric: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub seeds: usize,
}

/// Mean and standard deviation over per-seed reports, keyed by model and
/// feature source.
pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&EvalRow>> = BTreeMap::new();
    for r in reports.iter().flat_map(|r| &r.rows) {
        groups.entry((r.model.clone(), r.features.clone())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((model, features), rows) in groups {
        let metrics: [(&str, fn(&EvalRow) -> f64); 3] = [
            ("with_struct", |r| r.with_struct),
            ("without_struct", |r| r.without_struct),
            ("diff", |r| r.diff),
        ];
        for (metric, get) in metrics {
            let values: Vec<f64> = rows.iter().map(|r| get(r)).collect();
            let (mean, std) = mean_std(&values);
            out.push(SummaryRow {
                model: model.clone(),
                features: features.clone(),
                metric: metric.into(),
                mean,
                std,
                seeds: values.len(),
            });
        }
    }
    out
}
