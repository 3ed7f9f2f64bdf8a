use std::time::Instant;

use log::info;

use super::config::{streams, EmConfig, ModelConfig, StartModule};
use super::trace::{EmTrace, Phase, PhaseRecord, SplitAccuracy};
use crate::error::{Error, Result};
use crate::evalsuite::accuracy;
use crate::gnn::{gnn_forward, gnn_train_m_step, gnn_train_supervised, GnnParams};
use crate::labels::{LabelDistribution, Module, PseudoLabelSet};
use crate::lm::{lm_outputs, lm_train_e_step, lm_train_supervised, LmParams, TrainTrace};
use crate::numerics::Tensor;
use crate::taggraph::{NormalizedAdjacency, Split, TagGraph};

pub fn split_accuracy(pred: &LabelDistribution, g: &TagGraph) -> SplitAccuracy {
    SplitAccuracy {
        train: accuracy(pred, g, &g.nodes_in(Split::Train)),
        val: accuracy(pred, g, &g.nodes_in(Split::Val)),
        test: accuracy(pred, g, &g.nodes_in(Split::Test)),
    }
}

/// Both modules plus the cached predictions used for bookkeeping.
#[derive(Clone, Debug)]
pub struct ModuleState {
    pub lm: LmParams,
    pub gnn: GnnParams,
    /// Embeddings of the current text model.
    pub lm_h0: Tensor,
    /// Embeddings the graph model was last trained on.
    pub gnn_h0: Tensor,
    pub lm_pred: LabelDistribution,
    pub gnn_pred: LabelDistribution,
}

impl ModuleState {
    fn record(&self, g: &TagGraph, em_iter: usize, phase: Phase, t: &TrainTrace, started: Instant) -> PhaseRecord {
        PhaseRecord {
            em_iter,
            phase,
            lm: split_accuracy(&self.lm_pred, g),
            gnn: split_accuracy(&self.gnn_pred, g),
            epochs: t.epochs.clone(),
            wallclock_ms: started.elapsed().as_millis() as u64,
            texts_encoded: t.texts_encoded,
            updates: t.updates,
            consumed_pl_iter: None,
        }
    }
}

/// Supervised text model, its embeddings, and a graph model trained on
/// them with gold labels only.
#[derive(Clone, Debug)]
pub struct StaticRun {
    pub state: ModuleState,
    pub adj: NormalizedAdjacency,
    pub trace: EmTrace,
}

/// Supervised text-model fine-tuning on its own.
pub fn train_lm_ft(g: &TagGraph, model: &ModelConfig, cfg: &EmConfig) -> Result<(LmParams, TrainTrace)> {
    cfg.validate()?;
    let mut lm = LmParams::init(g.vocab_size(), g.num_classes(), &model.lm, cfg.sub_seed(streams::LM_INIT));
    let t = lm_train_supervised(&mut lm, g, &cfg.lm_opts(cfg.lm_pretrain_epochs, streams::LM_PRETRAIN))?;
    Ok((lm, t))
}

/// Static paradigm: fine-tune the text model, freeze it, then train the
/// graph model on its embeddings with gold labels.
pub fn train_static(g: &TagGraph, model: &ModelConfig, cfg: &EmConfig) -> Result<StaticRun> {
    if g.labeled_nodes().is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let mut trace = EmTrace::new();

    let started = Instant::now();
    let (lm, mut lm_trace) = train_lm_ft(g, model, cfg)?;
    let (h0, lm_pred) = lm_outputs(&lm, g)?;
    lm_trace.texts_encoded += g.num_nodes() as u64;
    let adj = NormalizedAdjacency::build(g, model.gnn.aggregation);
    let mut gnn = GnnParams::init(lm.dim(), g.num_classes(), &model.gnn, cfg.sub_seed(streams::GNN_INIT));
    let mut state = ModuleState {
        gnn_pred: gnn_forward(&gnn, &adj, &h0)?,
        lm,
        gnn: gnn.clone(),
        lm_h0: h0.clone(),
        gnn_h0: h0.clone(),
        lm_pred,
    };
    trace.push(state.record(g, 0, Phase::PretrainLm, &lm_trace, started));
    info!("pretrain_lm val_acc={:.4}", trace.records()[0].lm.val);

    let started = Instant::now();
    let gnn_trace = gnn_train_supervised(&mut gnn, &adj, &h0, g, &cfg.gnn_opts(cfg.gnn_pretrain_epochs, streams::GNN_PRETRAIN))?;
    state.gnn_pred = gnn_forward(&gnn, &adj, &h0)?;
    state.gnn = gnn;
    trace.push(state.record(g, 0, Phase::PretrainGnn, &gnn_trace, started));
    info!("pretrain_gnn val_acc={:.4}", trace.records()[1].gnn.val);

    Ok(StaticRun { state, adj, trace })
}

/// Pretrained modules and the initial pseudo-label snapshots on `U`.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub run: StaticRun,
    pub lm_pl: PseudoLabelSet,
    pub gnn_pl: PseudoLabelSet,
}

impl Pretrained {
    pub fn lm_val(&self) -> f64 {
        self.run.trace.records()[1].lm.val
    }

    pub fn gnn_val(&self) -> f64 {
        self.run.trace.records()[1].gnn.val
    }
}

pub fn pretrain(g: &TagGraph, model: &ModelConfig, cfg: &EmConfig) -> Result<Pretrained> {
    cfg.validate()?;
    let run = train_static(g, model, cfg)?;
    let lm_pl = refresh_pseudo_labels(&run.state.lm_pred, g, Module::Lm, 0, cfg)?;
    let gnn_pl = refresh_pseudo_labels(&run.state.gnn_pred, g, Module::Gnn, 0, cfg)?;
    Ok(Pretrained { run, lm_pl, gnn_pl })
}

/// Restricts a module's predictions to `U`; hard mode draws one sample per
/// node from a stream keyed by module and iteration.
pub fn refresh_pseudo_labels(
    pred: &LabelDistribution,
    g: &TagGraph,
    source: Module,
    em_iter: usize,
    cfg: &EmConfig,
) -> Result<PseudoLabelSet> {
    let tag = 2 * em_iter as u64 + u64::from(source == Module::Gnn);
    let seed = cfg.sub_seed(streams::PSEUDO + tag * 1000);
    PseudoLabelSet::from_predictions(pred, &g.unlabeled_nodes(), source, em_iter, cfg.pl_mode, seed)
}

/// First phase of iteration 1. With `auto`, the module with higher
/// validation accuracy supplies pseudo-labels first; ties favour the graph
/// model, i.e. the E-step runs first.
pub fn choose_start(start: StartModule, lm_val: f64, gnn_val: f64) -> Phase {
    match start {
        StartModule::Gnn => Phase::EStep,
        StartModule::Lm => Phase::MStep,
        StartModule::Auto if lm_val > gnn_val => Phase::MStep,
        StartModule::Auto => Phase::EStep,
    }
}

/// Parameters of both modules at the selected iteration.
#[derive(Clone, Debug)]
pub struct GlemRun {
    pub lm: LmParams,
    pub gnn: GnnParams,
    /// Embeddings the selected graph model consumes.
    pub h0: Tensor,
    pub adj: NormalizedAdjacency,
    pub best_iter: usize,
    pub first_phase: Phase,
    pub trace: EmTrace,
}

/// Alternates E- and M-steps for `cfg.em_iters` iterations, snapshotting
/// both modules at the end of every iteration.
pub fn em_loop(g: &TagGraph, cfg: &EmConfig, pre: Pretrained) -> Result<GlemRun> {
    cfg.validate()?;
    let Pretrained { run, mut lm_pl, mut gnn_pl } = pre;
    let StaticRun { mut state, adj, mut trace } = run;
    let first = choose_start(cfg.start_module, trace.records()[1].lm.val, trace.records()[1].gnn.val);
    let order = match first {
        Phase::MStep => [Phase::MStep, Phase::EStep],
        _ => [Phase::EStep, Phase::MStep],
    };
    info!("em start: {first}");
    let mut snapshots = Vec::with_capacity(cfg.em_iters);

    for it in 1..=cfg.em_iters {
        for phase in order {
            let started = Instant::now();
            let record = match phase {
                Phase::EStep => {
                    let consumed = gnn_pl.em_iter;
                    let opts = cfg.lm_opts(cfg.lm_epochs_per_e, streams::E_STEP + it as u64);
                    let mut t = lm_train_e_step(&mut state.lm, g, &gnn_pl, cfg.alpha, &opts)?;
                    let (h0, pred) = lm_outputs(&state.lm, g)?;
                    t.texts_encoded += g.num_nodes() as u64;
                    state.lm_h0 = h0;
                    state.lm_pred = pred;
                    lm_pl = refresh_pseudo_labels(&state.lm_pred, g, Module::Lm, it, cfg)?;
                    let mut r = state.record(g, it, phase, &t, started);
                    r.consumed_pl_iter = Some(consumed);
                    r
                }
                _ => {
                    let consumed = lm_pl.em_iter;
                    let opts = cfg.gnn_opts(cfg.gnn_epochs_per_m, streams::M_STEP + it as u64);
                    state.gnn_h0 = state.lm_h0.clone();
                    let t = gnn_train_m_step(&mut state.gnn, &adj, &state.gnn_h0, g, &lm_pl, cfg.beta, &opts)?;
                    state.gnn_pred = gnn_forward(&state.gnn, &adj, &state.gnn_h0)?;
                    gnn_pl = refresh_pseudo_labels(&state.gnn_pred, g, Module::Gnn, it, cfg)?;
                    let mut r = state.record(g, it, phase, &t, started);
                    r.consumed_pl_iter = Some(consumed);
                    r
                }
            };
            info!(
                "iter {it} {phase}: lm val={:.4} test={:.4} | gnn val={:.4} test={:.4}",
                record.lm.val, record.lm.test, record.gnn.val, record.gnn.test
            );
            trace.push(record);
        }
        snapshots.push((state.lm.clone(), state.gnn.clone(), state.gnn_h0.clone()));
    }

    let best_iter = trace
        .best_iteration(cfg.selection)
        .ok_or_else(|| Error::Invalid("no EM iteration recorded".into()))?;
    let (lm, gnn, h0) = snapshots.swap_remove(best_iter - 1);
    Ok(GlemRun {
        lm,
        gnn,
        h0,
        adj,
        best_iter,
        first_phase: first,
        trace,
    })
}

/// Pretraining followed by the EM alternation.
pub fn run_glem(g: &TagGraph, model: &ModelConfig, cfg: &EmConfig) -> Result<GlemRun> {
    let pre = pretrain(g, model, cfg)?;
    em_loop(g, cfg, pre)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::PlMode;
    use crate::orchestrator::Selection;
    use crate::taggraph::{gen_synthetic, SynthConfig};

    fn small() -> (TagGraph, ModelConfig, EmConfig) {
        let g = gen_synthetic(&SynthConfig {
            nodes: 120,
            vocab: 200,
            p_in: 0.08,
            p_out: 0.01,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let mut model = ModelConfig::default();
        model.lm.dim = 8;
        model.gnn.hidden = 8;
        let cfg = EmConfig {
            em_iters: 2,
            lm_pretrain_epochs: 2,
            lm_epochs_per_e: 1,
            gnn_pretrain_epochs: 10,
            gnn_epochs_per_m: 10,
            ..Default::default()
        };
        (g, model, cfg)
    }

    #[test]
    fn start_rule() {
        assert_eq!(choose_start(StartModule::Auto, 0.75, 0.74), Phase::MStep);
        assert_eq!(choose_start(StartModule::Auto, 0.74, 0.75), Phase::EStep);
        assert_eq!(choose_start(StartModule::Auto, 0.80, 0.70), Phase::MStep);
        assert_eq!(choose_start(StartModule::Auto, 0.7, 0.7), Phase::EStep);
        assert_eq!(choose_start(StartModule::Gnn, 0.9, 0.1), Phase::EStep);
        assert_eq!(choose_start(StartModule::Lm, 0.1, 0.9), Phase::MStep);
    }

    #[test]
    fn pseudo_labels_cover_exactly_unlabeled() {
        let (g, _, mut cfg) = small();
        let n = g.num_nodes();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.1 + 0.8 * (i % 2) as f64, 0.9 - 0.8 * (i % 2) as f64, 0.0, 0.0]).collect();
        let all: Vec<usize> = (0..n).collect();
        let pred = LabelDistribution::from_node_rows(n, 4, &all, &Tensor::from_rows(&rows).unwrap()).unwrap();
        let soft = refresh_pseudo_labels(&pred, &g, Module::Lm, 1, &cfg).unwrap();
        assert_eq!(soft.dist.nodes(), g.unlabeled_nodes());
        assert_eq!(soft.em_iter, 1);
        let u = g.unlabeled_nodes()[0];
        assert_eq!(soft.dist.row(u), pred.row(u));
        for &l in &g.labeled_nodes() {
            assert!(!soft.dist.covers(l));
        }

        cfg.pl_mode = PlMode::Hard;
        let a = refresh_pseudo_labels(&pred, &g, Module::Gnn, 1, &cfg).unwrap();
        let b = refresh_pseudo_labels(&pred, &g, Module::Gnn, 1, &cfg).unwrap();
        assert_eq!(a, b);
        for &n in &g.unlabeled_nodes() {
            let r = a.dist.row(n);
            assert_eq!(r.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(r.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn em_phases_alternate_and_consume_fresh_labels() {
        let (g, model, cfg) = small();
        let run = run_glem(&g, &model, &cfg).unwrap();
        let recs = run.trace.records();
        assert_eq!(recs.len(), 2 + 2 * cfg.em_iters);
        assert_eq!(recs[0].phase, Phase::PretrainLm);
        assert_eq!(recs[1].phase, Phase::PretrainGnn);
        let em = &recs[2..];
        for pair in em.chunks(2) {
            assert_ne!(pair[0].phase, pair[1].phase);
            assert_eq!(pair[0].phase, run.first_phase);
            // The second phase of an iteration sees labels refreshed by the first.
            assert_eq!(pair[1].consumed_pl_iter, Some(pair[1].em_iter));
            assert_eq!(pair[0].consumed_pl_iter, Some(pair[0].em_iter - 1));
        }
        for r in em.iter().filter(|r| r.phase == Phase::MStep) {
            assert_eq!(r.texts_encoded, 0);
        }
        assert!((1..=cfg.em_iters).contains(&run.best_iter));
    }

    #[test]
    fn selected_snapshot_reproduces_recorded_accuracy() {
        let (g, model, cfg) = small();
        let run = run_glem(&g, &model, &cfg).unwrap();
        let pred = gnn_forward(&run.gnn, &run.adj, &run.h0).unwrap();
        let rec = run.trace.end_of_iteration(run.best_iter).unwrap();
        assert_eq!(split_accuracy(&pred, &g), rec.gnn);
        let (_, lm_pred) = lm_outputs(&run.lm, &g).unwrap();
        assert_eq!(split_accuracy(&lm_pred, &g), rec.lm);
    }

    #[test]
    fn runs_are_deterministic() {
        let (g, model, cfg) = small();
        let a = run_glem(&g, &model, &cfg).unwrap();
        let b = run_glem(&g, &model, &cfg).unwrap();
        assert_eq!(a.lm, b.lm);
        assert_eq!(a.gnn, b.gnn);
        assert_eq!(a.best_iter, b.best_iter);
        let _ = Selection::default();
    }
}
