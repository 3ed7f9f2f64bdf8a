use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::GnnConfig;
use crate::labels::PlMode;
use crate::lm::{LmConfig, TrainOpts};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartModule {
    Lm,
    Gnn,
    /// Whichever pretrained module has the higher validation accuracy
    /// supplies pseudo-labels first.
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    GnnVal,
    LmVal,
}

/// Hyperparameters of pretraining and the EM alternation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    /// Weight of the pseudo-label term in the E-step.
    pub alpha: f64,
    /// Weight of the pseudo-label term in the M-step.
    pub beta: f64,
    pub em_iters: usize,
    pub lm_pretrain_epochs: usize,
    pub lm_epochs_per_e: usize,
    pub lm_lr: f64,
    pub lm_batch: usize,
    pub gnn_pretrain_epochs: usize,
    pub gnn_epochs_per_m: usize,
    pub gnn_lr: f64,
    pub pl_mode: PlMode,
    pub start_module: StartModule,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            alpha: 0.5,
            beta: 0.5,
            em_iters: 3,
            lm_pretrain_epochs: 10,
            lm_epochs_per_e: 2,
            lm_lr: 0.01,
            lm_batch: 32,
            gnn_pretrain_epochs: 100,
            gnn_epochs_per_m: 100,
            gnn_lr: 0.01,
            pl_mode: PlMode::Soft,
            start_module: StartModule::Auto,
            selection: Selection::GnnVal,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range {
                    key: k.into(),
                    msg: format!("{v} not in [0, 1]"),
                });
            }
        }
        if self.em_iters == 0 {
            return Err(Error::Range {
                key: "em_iters".into(),
                msg: "must be at least 1".into(),
            });
        }
        for (k, v) in [("lm_lr", self.lm_lr), ("gnn_lr", self.gnn_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Range {
                    key: k.into(),
                    msg: format!("{v} must be a finite non-negative number"),
                });
            }
        }
        Ok(())
    }

    /// Seed for a named sub-stream, so that unrelated components never share
    /// random draws.
    pub fn sub_seed(&self, stream: u64) -> u64 {
        let mut z = self
            .seed
            .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub(crate) fn lm_opts(&self, epochs: usize, stream: u64) -> TrainOpts {
        TrainOpts {
            epochs,
            lr: self.lm_lr,
            batch_size: self.lm_batch,
            seed: self.sub_seed(stream),
        }
    }

    pub(crate) fn gnn_opts(&self, epochs: usize, stream: u64) -> TrainOpts {
        TrainOpts {
            epochs,
            lr: self.gnn_lr,
            batch_size: 0,
            seed: self.sub_seed(stream),
        }
    }
}

/// Architecture of both modules.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub lm: LmConfig,
    pub gnn: GnnConfig,
}

pub(crate) mod streams {
    pub const LM_INIT: u64 = 1;
    pub const GNN_INIT: u64 = 2;
    pub const LM_PRETRAIN: u64 = 3;
    pub const GNN_PRETRAIN: u64 = 4;
    pub const E_STEP: u64 = 100;
    pub const M_STEP: u64 = 200;
    pub const PSEUDO: u64 = 300;
    pub const JOINT: u64 = 400;
}
