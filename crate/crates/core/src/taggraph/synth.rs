//! Stochastic-block-model text-attributed graphs.
//!
//! Token ids `1..=V` are cut into `C+1` contiguous blocks of `V/(C+1)` ids:
//! block `c` is the signal block of class `c`, the last block (plus any
//! remainder) is shared background. Id 0 stays reserved for `<unk>`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Split, TagGraph};
use super::io::save_graph;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub nodes: usize,
    pub classes: usize,
    /// Number of real tokens `V`, excluding `<unk>`.
    pub vocab: usize,
    pub text_len: usize,
    pub signal_ratio: f64,
    pub p_in: f64,
    pub p_out: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
    /// Permit `p_in < p_out` (heterophilous structure).
    pub allow_heterophily: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 2000,
            classes: 4,
            vocab: 2000,
            text_len: 4,
            signal_ratio: 0.3,
            p_in: 0.02,
            p_out: 0.002,
            train_frac: 0.5,
            val_frac: 0.25,
            test_frac: 0.25,
            seed: 0,
            allow_heterophily: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, msg: String| Error::Range {
            key: key.into(),
            msg,
        };
        if self.nodes == 0 {
            return Err(range("nodes", "must be positive".into()));
        }
        if self.classes == 0 {
            return Err(range("classes", "must be positive".into()));
        }
        if self.text_len == 0 {
            return Err(range("text_len", "must be positive".into()));
        }
        for (k, v) in [
            ("signal_ratio", self.signal_ratio),
            ("p_in", self.p_in),
            ("p_out", self.p_out),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(range(k, format!("{v} not in [0, 1]")));
            }
        }
        if self.p_in < self.p_out && !self.allow_heterophily {
            return Err(range(
                "p_in",
                format!("{} < p_out {} (set allow_heterophily)", self.p_in, self.p_out),
            ));
        }
        let s = self.train_frac + self.val_frac + self.test_frac;
        if (s - 1.0).abs() > 1e-9 {
            return Err(range("train_frac", format!("split fractions sum to {s}")));
        }
        if self.vocab < self.classes + 1 {
            return Err(Error::VocabTooSmall);
        }
        Ok(())
    }

    pub fn block_size(&self) -> usize {
        self.vocab / (self.classes + 1)
    }

    /// Token ids belonging to the signal block of class `c`.
    pub fn class_block(&self, c: usize) -> std::ops::Range<u32> {
        let b = self.block_size();
        (1 + c * b) as u32..(1 + (c + 1) * b) as u32
    }

    pub fn background_block(&self) -> std::ops::Range<u32> {
        (1 + self.classes * self.block_size()) as u32..(self.vocab + 1) as u32
    }
}

/// Echo of the generator configuration written next to a synthetic dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: SynthConfig,
    pub seed: u64,
    pub num_edges: usize,
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<TagGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.nodes;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..cfg.classes)).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let background = cfg.background_block();
    let texts: Vec<Vec<u32>> = labels
        .iter()
        .map(|&c| {
            let signal = cfg.class_block(c);
            (0..cfg.text_len)
                .map(|_| {
                    if rng.gen::<f64>() < cfg.signal_ratio {
                        rng.gen_range(signal.clone())
                    } else {
                        rng.gen_range(background.clone())
                    }
                })
                .collect()
        })
        .collect();

    let g = TagGraph::new(
        cfg.classes,
        Vocabulary::synthetic(cfg.vocab),
        texts,
        labels.into_iter().map(Some).collect(),
        vec![Split::Test; n],
        &edges,
    )?;
    g.make_splits((cfg.train_frac, cfg.val_frac, cfg.test_frac), cfg.seed)
}

/// Generates a dataset and writes it, with `meta.json`, into `dir`.
pub fn write_synthetic(cfg: &SynthConfig, dir: &Path) -> Result<TagGraph> {
    let g = gen_synthetic(cfg)?;
    save_graph(&g, dir)?;
    let meta = SynthMeta {
        config: cfg.clone(),
        seed: cfg.seed,
        num_edges: g.num_edges(),
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_edges_when_probabilities_zero() {
        let cfg = SynthConfig {
            nodes: 50,
            p_in: 0.0,
            p_out: 0.0,
            ..Default::default()
        };
        assert_eq!(gen_synthetic(&cfg).unwrap().num_edges(), 0);
    }

    #[test]
    fn pure_signal_texts_stay_in_class_block() {
        let cfg = SynthConfig {
            nodes: 40,
            classes: 2,
            vocab: 30,
            text_len: 8,
            signal_ratio: 1.0,
            ..Default::default()
        };
        let g = gen_synthetic(&cfg).unwrap();
        for n in 0..g.num_nodes() {
            let block = cfg.class_block(g.label(n).unwrap());
            assert!(g.text(n).iter().all(|t| block.contains(t)));
        }
    }

    #[test]
    fn vocab_too_small() {
        let cfg = SynthConfig {
            classes: 4,
            vocab: 4,
            ..Default::default()
        };
        let err = gen_synthetic(&cfg).unwrap_err();
        assert_eq!(err.to_string(), "vocabulary too small for class blocks");
    }

    #[test]
    fn blocks_are_disjoint() {
        let cfg = SynthConfig::default();
        let mut all: Vec<u32> = (0..cfg.classes).flat_map(|c| cfg.class_block(c)).collect();
        all.extend(cfg.background_block());
        let len = all.len();
        all.dedup();
        assert_eq!(all.len(), len);
        assert_eq!(len, cfg.vocab);
    }

    #[test]
    fn reproducible() {
        let cfg = SynthConfig {
            nodes: 120,
            ..Default::default()
        };
        assert_eq!(gen_synthetic(&cfg).unwrap(), gen_synthetic(&cfg).unwrap());
    }
}
