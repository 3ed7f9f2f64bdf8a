pub mod error;
pub mod evalsuite;
pub mod gnn;
pub mod harness;
pub mod labels;
pub mod lm;
pub mod numerics;
pub mod objective;
pub mod orchestrator;
pub mod taggraph;

pub use error::{Error, Result};
