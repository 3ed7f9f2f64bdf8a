use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::Selection;
use crate::lm::EpochRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PretrainLm,
    PretrainGnn,
    EStep,
    MStep,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PretrainLm => "pretrain_lm",
            Phase::PretrainGnn => "pretrain_gnn",
            Phase::EStep => "e_step",
            Phase::MStep => "m_step",
        }
    }

    /// True for phases that update the text model.
    pub fn trains_lm(self) -> bool {
        matches!(self, Phase::PretrainLm | Phase::EStep)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplitAccuracy {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

/// State of both modules at the end of one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRecord {
    /// 0 for pretraining, then 1-based EM iteration.
    pub em_iter: usize,
    pub phase: Phase,
    pub lm: SplitAccuracy,
    pub gnn: SplitAccuracy,
    pub epochs: Vec<EpochRecord>,
    pub wallclock_ms: u64,
    /// Texts run through the encoder during this phase's training and
    /// pseudo-label refresh.
    pub texts_encoded: u64,
    pub updates: u64,
    /// `em_iter` tag of the pseudo-label snapshot this phase trained on.
    pub consumed_pl_iter: Option<usize>,
}

impl PhaseRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Append-only log of every phase of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmTrace {
    records: Vec<PhaseRecord>,
}

impl EmTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: PhaseRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(r.em_iter == last.em_iter || r.em_iter == last.em_iter + 1);
        }
        self.records.push(r);
    }

    pub fn records(&self) -> &[PhaseRecord] {
        &self.records
    }

    /// Number of EM iterations recorded (pretraining excluded).
    pub fn iterations(&self) -> usize {
        self.records.iter().map(|r| r.em_iter).max().unwrap_or(0)
    }

    /// Record closing iteration `it`.
    pub fn end_of_iteration(&self, it: usize) -> Option<&PhaseRecord> {
        self.records.iter().rev().find(|r| r.em_iter == it)
    }

    /// Arg-max over EM iterations of the selected validation accuracy at
    /// the end of each iteration; ties go to the earliest iteration.
    pub fn best_iteration(&self, sel: Selection) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for it in 1..=self.iterations() {
            let Some(r) = self.end_of_iteration(it) else { continue };
            let acc = match sel {
                Selection::GnnVal => r.gnn.val,
                Selection::LmVal => r.lm.val,
            };
            if best.map_or(true, |(_, b)| acc > b) {
                best = Some((it, acc));
            }
        }
        best.map(|(it, _)| it)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(em_iter: usize, phase: Phase, gnn_val: f64, lm_val: f64) -> PhaseRecord {
        PhaseRecord {
            em_iter,
            phase,
            lm: SplitAccuracy { val: lm_val, ..Default::default() },
            gnn: SplitAccuracy { val: gnn_val, ..Default::default() },
            epochs: Vec::new(),
            wallclock_ms: 0,
            texts_encoded: 0,
            updates: 0,
            consumed_pl_iter: None,
        }
    }

    #[test]
    fn best_iteration_uses_end_of_iteration_and_earliest_tie() {
        let mut t = EmTrace::new();
        t.push(rec(0, Phase::PretrainLm, 0.0, 0.9));
        t.push(rec(0, Phase::PretrainGnn, 0.99, 0.9));
        t.push(rec(1, Phase::EStep, 0.95, 0.1));
        t.push(rec(1, Phase::MStep, 0.80, 0.5));
        t.push(rec(2, Phase::EStep, 0.10, 0.6));
        t.push(rec(2, Phase::MStep, 0.85, 0.7));
        t.push(rec(3, Phase::EStep, 0.10, 0.7));
        t.push(rec(3, Phase::MStep, 0.85, 0.7));
        assert_eq!(t.iterations(), 3);
        // Pretraining and mid-iteration values never win.
        assert_eq!(t.best_iteration(Selection::GnnVal), Some(2));
        assert_eq!(t.best_iteration(Selection::LmVal), Some(2));
    }

    #[test]
    fn no_iterations_no_selection() {
        let mut t = EmTrace::new();
        t.push(rec(0, Phase::PretrainLm, 0.5, 0.5));
        assert_eq!(t.best_iteration(Selection::GnnVal), None);
    }

    #[test]
    fn phase_names() {
        assert_eq!(Phase::EStep.to_string(), "e_step");
        assert!(Phase::PretrainLm.trains_lm());
        assert!(!Phase::MStep.trains_lm());
    }
}
