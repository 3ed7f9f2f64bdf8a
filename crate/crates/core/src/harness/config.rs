//! Run configuration, read from a single TOML file.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! out_dir = "runs/demo"
//!
//! [data]
//! dir = "data/demo"          # or an inline [data.synthetic] table
//!
//! [em]
//! alpha = 0.5
//!
//! [model.gnn]
//! layers = 2
//! ```
//!
//! Every table rejects unknown keys. Omitted keys take the defaults of the
//! corresponding config struct.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::MlpConfig;
use crate::orchestrator::{EmConfig, ModelConfig};
use crate::taggraph::{load_dataset, gen_synthetic, SynthConfig, TagGraph};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory with `nodes.jsonl` and `edges.tsv`.
    pub dir: Option<PathBuf>,
    /// Generate in memory instead of loading.
    pub synthetic: Option<SynthConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mlp: MlpConfig,
    /// Neighbours sampled per center by the joint paradigm.
    pub joint_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mlp: MlpConfig::default(),
            joint_k: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub em: EmConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig {
                dir: None,
                synthetic: Some(SynthConfig::default()),
            },
            em: EmConfig::default(),
            model: ModelConfig::default(),
            eval: EvalConfig::default(),
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Range and existence checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        match (&self.data.dir, &self.data.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Range {
                    key: "data".into(),
                    msg: "set either `dir` or `synthetic`, not both".into(),
                })
            }
            (None, None) => {
                return Err(Error::Range {
                    key: "data".into(),
                    msg: "one of `dir` or `synthetic` is required".into(),
                })
            }
            (Some(dir), None) if !dir.is_dir() => {
                return Err(Error::Range {
                    key: "data.dir".into(),
                    msg: format!("{} does not exist", dir.display()),
                })
            }
            (None, Some(s)) => s.validate().map_err(|e| prefix("data.synthetic", e))?,
            _ => {}
        }
        self.em.validate().map_err(|e| prefix("em", e))?;
        if self.seeds.is_empty() {
            return Err(Error::Range {
                key: "seeds".into(),
                msg: "at least one seed is required".into(),
            });
        }
        let positive = [
            ("model.lm.dim", self.model.lm.dim),
            ("model.gnn.layers", self.model.gnn.layers),
            ("model.gnn.hidden", self.model.gnn.hidden),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Range {
                    key: key.into(),
                    msg: "must be positive".into(),
                });
            }
        }
        Ok(())
    }

    /// Loads or generates the dataset.
    pub fn load_graph(&self) -> Result<TagGraph> {
        match (&self.data.dir, &self.data.synthetic) {
            (Some(dir), _) => load_dataset(dir),
            (None, Some(s)) => gen_synthetic(s),
            (None, None) => Err(Error::Config("no data source".into())),
        }
    }

    /// Copy with every seed-dependent component keyed to `seed`, including
    /// the generator of an inline synthetic dataset.
    pub fn for_seed(&self, seed: u64) -> RunConfig {
        let mut c = self.clone();
        c.em.seed = seed;
        c.eval.mlp.seed = seed;
        if let Some(s) = &mut c.data.synthetic {
            s.seed = seed;
        }
        c
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Range { key, msg } => Error::Range {
            key: format!("{section}.{key}"),
            msg,
        },
        other => other,
    }
}

/// Strict parse followed by validation.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("[data]\ndir = {:?}\n", dir.path());
        let cfg = RunConfig::from_toml(&text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.em.alpha, 0.5);
        assert_eq!(cfg.em.beta, 0.5);
        assert_eq!(cfg.em.em_iters, 3);
        assert_eq!(cfg.seeds, vec![0]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("[em]\nalhpa = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("alhpa"), "{err}");
    }

    #[test]
    fn alpha_out_of_range() {
        let cfg = RunConfig::from_toml("[em]\nalpha = 1.5\n").unwrap();
        match cfg.validate().unwrap_err() {
            Error::Range { key, .. } => assert_eq!(key, "em.alpha"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn type_mismatch() {
        let err = RunConfig::from_toml("[em]\nem_iters = \"three\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_data_dir() {
        let cfg = RunConfig::from_toml("[data]\ndir = \"/definitely/not/here\"\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Range { key, .. }) if key == "data.dir"));
    }

    #[test]
    fn empty_seeds() {
        let cfg = RunConfig::from_toml("seeds = []\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Range { key, .. }) if key == "seeds"));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
