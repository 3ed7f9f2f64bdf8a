//! Long-format metrics CSV.
//!
//! One row per recorded scalar. Per-epoch rows carry `loss` (split `train`)
//! and `val_acc` (split `val`). Each phase then closes with
//! `train_acc`/`val_acc`/`test_acc` of the module that phase trained
//! (`e_step` and `pretrain_lm` rows describe the text model, `m_step` and
//! `pretrain_gnn` rows the graph model), followed by `lm_acc` and `gnn_acc`
//! rows for both modules on every split. Evaluation reports use phase
//! `eval`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::evalsuite::EvalReport;
use crate::orchestrator::{EmTrace, SplitAccuracy};

pub const HEADER: &str = "phase,em_iter,epoch,split,metric,value,wallclock_ms,texts_encoded,seed";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub phase: String,
    pub em_iter: Option<usize>,
    pub epoch: Option<usize>,
    pub split: String,
    pub metric: String,
    pub value: f64,
    pub wallclock_ms: Option<u64>,
    pub texts_encoded: Option<u64>,
    pub seed: u64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.phase,
            opt(self.em_iter.map(|v| v.to_string())),
            opt(self.epoch.map(|v| v.to_string())),
            self.split,
            self.metric,
            sig6(self.value),
            opt(self.wallclock_ms.map(|v| v.to_string())),
            opt(self.texts_encoded.map(|v| v.to_string())),
            self.seed
        )
    }
}

/// Six significant digits, trailing zeros trimmed; scientific notation
/// outside `[1e-4, 1e6)`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.5e}");
        let (mantissa, exp) = s.split_once('e').expect("scientific format");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    }
}

pub fn trace_rows(trace: &EmTrace, seed: u64) -> Vec<MetricsRow> {
    let mut out = Vec::new();
    for r in trace.records() {
        let row = |epoch: Option<usize>, split: &str, metric: &str, value: f64, totals: bool| MetricsRow {
            phase: r.phase.to_string(),
            em_iter: Some(r.em_iter),
            epoch,
            split: split.into(),
            metric: metric.into(),
            value,
            wallclock_ms: totals.then_some(r.wallclock_ms),
            texts_encoded: totals.then_some(r.texts_encoded),
            seed,
        };
        for e in &r.epochs {
            out.push(row(Some(e.epoch), "train", "loss", e.loss, false));
            out.push(row(Some(e.epoch), "val", "val_acc", e.val_acc, false));
        }
        let own = if r.phase.trains_lm() { r.lm } else { r.gnn };
        let splits = |a: SplitAccuracy| [("train", a.train), ("val", a.val), ("test", a.test)];
        for (split, v) in splits(own) {
            out.push(row(None, split, &format!("{split}_acc"), v, true));
        }
        for (module, acc) in [("lm_acc", r.lm), ("gnn_acc", r.gnn)] {
            for (split, v) in splits(acc) {
                out.push(row(None, split, module, v, true));
            }
        }
    }
    out
}

pub fn report_rows(report: &EvalReport) -> Vec<MetricsRow> {
    let mut out = Vec::new();
    for r in &report.rows {
        for (name, v) in [
            ("with_struct", r.with_struct),
            ("without_struct", r.without_struct),
            ("diff", r.diff),
        ] {
            out.push(MetricsRow {
                phase: "eval".into(),
                em_iter: None,
                epoch: None,
                split: "test".into(),
                metric: format!("{}_{}_{}", r.model, r.features, name),
                value: v,
                wallclock_ms: None,
                texts_encoded: None,
                seed: report.seed,
            });
        }
    }
    out
}

/// Appends `rows`, writing the header first when the file is new or empty.
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    if fresh {
        buf.push_str(HEADER);
        buf.push('\n');
    }
    for r in rows {
        buf.push_str(&r.to_csv());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::EpochRecord;
    use crate::orchestrator::{Phase, PhaseRecord};

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(12345.67), "12345.7");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1.5e-7), "1.5e-7");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&trace_rows(&EmTrace::new(), 0), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("{HEADER}\n"));
    }

    #[test]
    fn one_epoch_rows_and_append() {
        let mut t = EmTrace::new();
        t.push(PhaseRecord {
            em_iter: 0,
            phase: Phase::PretrainLm,
            lm: SplitAccuracy {
                train: 1.0,
                val: 0.5,
                test: 0.25,
            },
            gnn: SplitAccuracy::default(),
            epochs: vec![EpochRecord {
                epoch: 1,
                loss: 0.7,
                val_acc: 0.5,
            }],
            wallclock_ms: 3,
            texts_encoded: 10,
            updates: 1,
            consumed_pl_iter: None,
        });
        let rows = trace_rows(&t, 4);
        let epoch_rows: Vec<_> = rows.iter().filter(|r| r.epoch == Some(1)).collect();
        assert_eq!(epoch_rows.len(), 2);
        assert_eq!(epoch_rows[0].metric, "loss");
        assert_eq!(epoch_rows[1].metric, "val_acc");
        let test_acc: Vec<_> = rows.iter().filter(|r| r.metric == "test_acc").collect();
        assert_eq!(test_acc.len(), 1);
        assert_eq!(test_acc[0].value, 0.25);
        assert_eq!(test_acc[0].to_csv(), "pretrain_lm,0,,test,test_acc,0.25,3,10,4");

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&rows, &p).unwrap();
        write_metrics(&rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().filter(|l| *l == HEADER).count(), 1);
        assert_eq!(text.lines().count(), 1 + 2 * rows.len());
    }
}
