//! End-to-end runs that read a [`RunConfig`] and write only below an
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{report_rows, trace_rows, write_metrics, MetricsRow};
use crate::error::{Error, Result};
use crate::evalsuite::{
    accuracy, eval_structure_free, train_mlp_on_embeddings, EvalReport,
};
use crate::gnn::GnnParams;
use crate::lm::{lm_encode, lm_predict, EpochRecord, LmParams};
use crate::orchestrator::{
    run_glem, split_accuracy, train_joint, train_lm_ft, train_static, EmTrace, GlemRun, JointRun, Phase,
    SplitAccuracy,
};
use crate::taggraph::{Split, TagGraph};

pub const METRICS_FILE: &str = "metrics.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const CONFIG_ECHO: &str = "config.toml";
pub const H0_KEY: &str = "glem.h0";

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_ECHO), cfg.to_toml())?;
    Ok(())
}

fn module_rows(
    phase: &str,
    epochs: &[EpochRecord],
    acc: SplitAccuracy,
    wallclock_ms: u64,
    texts_encoded: u64,
    seed: u64,
) -> Vec<MetricsRow> {
    let row = |epoch, split: &str, metric: &str, value, totals: bool| MetricsRow {
        phase: phase.into(),
        em_iter: None,
        epoch,
        split: split.into(),
        metric: metric.into(),
        value,
        wallclock_ms: totals.then_some(wallclock_ms),
        texts_encoded: totals.then_some(texts_encoded),
        seed,
    };
    let mut out = Vec::new();
    for e in epochs {
        out.push(row(Some(e.epoch), "train", "loss", e.loss, false));
        out.push(row(Some(e.epoch), "val", "val_acc", e.val_acc, false));
    }
    for (split, v) in [("train", acc.train), ("val", acc.val), ("test", acc.test)] {
        out.push(row(None, split, &format!("{split}_acc"), v, true));
    }
    out
}

fn glem_checkpoint(cfg: &RunConfig, lm: &LmParams, gnn: &GnnParams, h0: &crate::numerics::Tensor, em_iter: usize) -> Checkpoint {
    let mut ck = Checkpoint::new();
    ck.insert_all(lm.named());
    ck.insert_all(gnn.named());
    ck.tensors.insert(H0_KEY.into(), h0.clone().with_requires_grad(false));
    ck.config = Some(cfg.to_toml());
    ck.em_iter = Some(em_iter);
    ck
}

pub fn checkpoint_path(out: &Path, name: &str, seed: u64) -> PathBuf {
    out.join(format!("{name}_seed{seed}.ckpt"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub best_iter: usize,
    pub first_phase: String,
    pub lm: [f64; 3],
    pub gnn: [f64; 3],
    pub checkpoint: PathBuf,
}

/// Pretraining plus EM for every configured seed.
pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<Vec<TrainSummary>> {
    cfg.validate()?;
    prepare_out(out, cfg)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let sc = cfg.for_seed(seed);
        let g = sc.load_graph()?;
        let run = run_glem(&g, &sc.model, &sc.em)?;
        write_metrics(&trace_rows(&run.trace, seed), &out.join(METRICS_FILE))?;
        let path = checkpoint_path(out, "glem", seed);
        glem_checkpoint(&sc, &run.lm, &run.gnn, &run.h0, run.best_iter).save(&path)?;
        let best = run.trace.end_of_iteration(run.best_iter).expect("selected iteration is recorded");
        summaries.push(TrainSummary {
            seed,
            best_iter: run.best_iter,
            first_phase: run.first_phase.to_string(),
            lm: [best.lm.train, best.lm.val, best.lm.test],
            gnn: [best.gnn.train, best.gnn.val, best.gnn.test],
            checkpoint: path,
        });
    }
    Ok(summaries)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Paradigm {
    LmFt,
    Static,
    Joint,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::LmFt => "lm_ft",
            Paradigm::Static => "static",
            Paradigm::Joint => "joint",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineSummary {
    pub seed: u64,
    pub test_acc: f64,
    pub checkpoint: PathBuf,
}

pub fn run_baseline(cfg: &RunConfig, paradigm: Paradigm, out: &Path) -> Result<Vec<BaselineSummary>> {
    cfg.validate()?;
    prepare_out(out, cfg)?;
    let mut res = Vec::new();
    for &seed in &cfg.seeds {
        let sc = cfg.for_seed(seed);
        let g = sc.load_graph()?;
        let path = checkpoint_path(out, paradigm.as_str(), seed);
        let mut ck = Checkpoint::new();
        ck.config = Some(sc.to_toml());
        let (rows, test_acc) = match paradigm {
            Paradigm::LmFt => {
                let started = Instant::now();
                let (lm, t) = train_lm_ft(&g, &sc.model, &sc.em)?;
                let acc = split_accuracy(&lm_predict(&lm, &g, &g.all_nodes())?, &g);
                ck.insert_all(lm.named());
                let ms = started.elapsed().as_millis() as u64;
                (module_rows("lm_ft", &t.epochs, acc, ms, t.texts_encoded, seed), acc.test)
            }
            Paradigm::Static => {
                let run = train_static(&g, &sc.model, &sc.em)?;
                let s = &run.state;
                let ck2 = glem_checkpoint(&sc, &s.lm, &s.gnn, &s.gnn_h0, 0);
                ck.tensors = ck2.tensors;
                ck.em_iter = Some(0);
                (trace_rows(&run.trace, seed), run.trace.records()[1].gnn.test)
            }
            Paradigm::Joint => {
                let run = train_joint(&g, &sc.model, &sc.em, sc.eval.joint_k)?;
                let acc = joint_accuracy(&run, &g)?;
                ck.insert_all(run.params.named());
                (
                    module_rows("joint", &run.trace.epochs, acc, run.wallclock_ms, run.trace.texts_encoded, seed),
                    acc.test,
                )
            }
        };
        write_metrics(&rows, &out.join(METRICS_FILE))?;
        ck.save(&path)?;
        info!("{} seed {seed}: test_acc={test_acc:.4}", paradigm.as_str());
        res.push(BaselineSummary {
            seed,
            test_acc,
            checkpoint: path,
        });
    }
    Ok(res)
}

fn joint_accuracy(run: &JointRun, g: &TagGraph) -> Result<SplitAccuracy> {
    Ok(split_accuracy(&run.predict(g, &g.all_nodes())?, g))
}

/// Structure-free evaluation of a checkpoint holding both modules and the
/// graph model's input embeddings. Also trains an MLP on those embeddings.
pub fn run_eval(checkpoint: &Path, cfg: Option<&RunConfig>, structure_free: bool, out: &Path) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg = match (cfg, &ck.config) {
        (Some(c), _) => c.clone(),
        (None, Some(text)) => RunConfig::from_toml(text)?,
        (None, None) => return Err(Error::Config("checkpoint has no config echo; pass --config".into())),
    };
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let g = cfg.load_graph()?;
    let lm = LmParams::from_named(&ck.tensors)?;
    let gnn = GnnParams::from_named(&ck.tensors)?;
    let h0 = ck.get(H0_KEY)?.clone();
    let label = if ck.em_iter.unwrap_or(0) > 0 { "glem" } else { "lm_ft" };
    let test = g.nodes_in(Split::Test);
    let mut report = EvalReport {
        seed: cfg.em.seed,
        rows: Vec::new(),
    };
    if structure_free {
        report.rows = eval_structure_free(&lm, &gnn, &h0, &g, &test, cfg.model.gnn.aggregation, label)?;
        let feats = lm_encode(&lm, &g, &g.all_nodes())?;
        report.rows.push(train_mlp_on_embeddings(&feats, &g, &cfg.eval.mlp, label)?.row);
    } else {
        let adj = crate::taggraph::NormalizedAdjacency::build(&g, cfg.model.gnn.aggregation);
        let gnn_acc = accuracy(&crate::gnn::gnn_forward(&gnn, &adj, &h0)?, &g, &test);
        let lm_acc = accuracy(&lm_predict(&lm, &g, &test)?, &g, &test);
        for (model, acc) in [("gnn", gnn_acc), ("lm", lm_acc)] {
            report.rows.push(crate::evalsuite::EvalRow {
                model: model.into(),
                features: label.into(),
                with_struct: acc,
                without_struct: acc,
                diff: 0.0,
                checkpoint: 0,
            });
        }
    }
    write_metrics(&report_rows(&report), &out.join(METRICS_FILE))?;
    Ok(report)
}

/// One line of the paradigm comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub paradigm: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Default)]
struct Acc {
    per_metric: Vec<(String, String, Vec<f64>)>,
}

impl Acc {
    fn add(&mut self, paradigm: &str, metric: &str, v: f64) {
        match self.per_metric.iter_mut().find(|(p, m, _)| p == paradigm && m == metric) {
            Some((_, _, vals)) => vals.push(v),
            None => self.per_metric.push((paradigm.into(), metric.into(), vec![v])),
        }
    }
}

fn phase_totals(trace: &EmTrace, pred: impl Fn(Phase) -> bool) -> (u64, u64, u64) {
    trace
        .records()
        .iter()
        .filter(|r| pred(r.phase))
        .fold((0, 0, 0), |(t, u, w), r| (t + r.texts_encoded, u + r.updates, w + r.wallclock_ms))
}

/// Runs LM fine-tuning, the static and joint paradigms, and GLEM for every
/// seed; writes per-run traces and a comparison table averaged over seeds.
pub fn run_compare(cfg: &RunConfig, out: &Path) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    prepare_out(out, cfg)?;
    let mut acc = Acc::default();
    for &seed in &cfg.seeds {
        let sc = cfg.for_seed(seed);
        let g = sc.load_graph()?;
        let glem: GlemRun = run_glem(&g, &sc.model, &sc.em)?;
        write_metrics(&trace_rows(&glem.trace, seed), &out.join(METRICS_FILE))?;
        let recs = glem.trace.records();
        let lm_params = glem.lm.num_parameters() as f64;
        let gnn_params = glem.gnn.num_parameters() as f64;

        // Pretraining is exactly the LM fine-tuning and static paradigms.
        let lm_ft = &recs[0];
        acc.add("lm_ft", "test_acc", lm_ft.lm.test);
        acc.add("lm_ft", "val_acc", lm_ft.lm.val);
        acc.add("lm_ft", "parameters", lm_params);
        acc.add("lm_ft", "texts_encoded", lm_ft.texts_encoded as f64);
        acc.add("lm_ft", "wallclock_ms", lm_ft.wallclock_ms as f64);

        let st = &recs[1];
        acc.add("static", "test_acc", st.gnn.test);
        acc.add("static", "val_acc", st.gnn.val);
        acc.add("static", "parameters", lm_params + gnn_params);
        acc.add("static", "texts_encoded", (lm_ft.texts_encoded + st.texts_encoded) as f64);
        acc.add("static", "gnn_updates", st.updates as f64);
        acc.add("static", "texts_per_gnn_update", st.texts_encoded as f64 / st.updates.max(1) as f64);
        acc.add("static", "wallclock_ms", (lm_ft.wallclock_ms + st.wallclock_ms) as f64);

        let best = glem.trace.end_of_iteration(glem.best_iter).expect("selected iteration is recorded");
        let (all_texts, _, all_ms) = phase_totals(&glem.trace, |_| true);
        let (gnn_texts, gnn_updates, _) = phase_totals(&glem.trace, |p| !p.trains_lm());
        for (name, a, params) in [("glem_lm", best.lm, lm_params), ("glem_gnn", best.gnn, gnn_params)] {
            acc.add(name, "test_acc", a.test);
            acc.add(name, "val_acc", a.val);
            acc.add(name, "parameters", params);
        }
        acc.add("glem_gnn", "texts_encoded", all_texts as f64);
        acc.add("glem_gnn", "gnn_updates", gnn_updates as f64);
        acc.add("glem_gnn", "texts_per_gnn_update", gnn_texts as f64 / gnn_updates.max(1) as f64);
        acc.add("glem_gnn", "wallclock_ms", all_ms as f64);
        acc.add("glem_gnn", "best_iter", glem.best_iter as f64);

        let joint = train_joint(&g, &sc.model, &sc.em, sc.eval.joint_k)?;
        let ja = joint_accuracy(&joint, &g)?;
        write_metrics(
            &module_rows("joint", &joint.trace.epochs, ja, joint.wallclock_ms, joint.trace.texts_encoded, seed),
            &out.join(METRICS_FILE),
        )?;
        acc.add("joint", "test_acc", ja.test);
        acc.add("joint", "val_acc", ja.val);
        acc.add("joint", "parameters", joint.params.num_parameters() as f64);
        acc.add("joint", "texts_encoded", joint.trace.texts_encoded as f64);
        acc.add("joint", "gnn_updates", joint.trace.updates as f64);
        acc.add(
            "joint",
            "texts_per_gnn_update",
            joint.trace.texts_encoded as f64 / joint.trace.updates.max(1) as f64,
        );
        acc.add("joint", "wallclock_ms", joint.wallclock_ms as f64);
        info!("compare seed {seed} done");
    }
    let rows: Vec<CompareRow> = acc
        .per_metric
        .into_iter()
        .map(|(paradigm, metric, vals)| CompareRow {
            paradigm,
            metric,
            value: vals.iter().sum::<f64>() / vals.len() as f64,
        })
        .collect();
    let mut text = String::from("paradigm,metric,value\n");
    for r in &rows {
        text.push_str(&format!("{},{},{}\n", r.paradigm, r.metric, super::metrics::sig6(r.value)));
    }
    fs::write(out.join(COMPARE_FILE), text)?;
    Ok(rows)
}
