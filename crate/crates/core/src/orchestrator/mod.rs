//! Pretraining, the EM alternation between the two modules, and the
//! comparison paradigms.

mod config;
mod em;
mod joint;
mod trace;

pub use config::{EmConfig, ModelConfig, Selection, StartModule};
pub use em::{
    choose_start, em_loop, split_accuracy, pretrain, refresh_pseudo_labels, run_glem, train_lm_ft, train_static, GlemRun,
    ModuleState, Pretrained, StaticRun,
};
pub use joint::{joint_log_probs, joint_loss, joint_predict, sample_star, train_joint, JointParams, JointRun};
pub use trace::{EmTrace, Phase, PhaseRecord, SplitAccuracy};
