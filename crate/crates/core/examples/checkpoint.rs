//! Save trained parameters and restore them bit for bit.

use std::collections::BTreeMap;

use glem::harness::Checkpoint;
use glem::lm::{lm_predict, LmConfig, LmParams};
use glem::taggraph::{gen_synthetic, SynthConfig};

fn main() -> glem::Result<()> {
    let g = gen_synthetic(&SynthConfig {
        nodes: 200,
        ..Default::default()
    })?;
    let lm = LmParams::init(g.vocab_size(), g.num_classes(), &LmConfig::default(), 9);

    let mut ckpt = Checkpoint::new();
    ckpt.insert_all(lm.named());
    ckpt.config = Some("example = true\n".into());
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("lm.ckpt");
    ckpt.save(&path)?;

    let loaded = Checkpoint::load(&path)?;
    let entries: BTreeMap<_, _> = loaded.tensors.clone();
    let back = LmParams::from_named(&entries)?;
    assert_eq!(back, lm);

    let nodes = g.all_nodes();
    let a = lm_predict(&lm, &g, &nodes)?;
    let b = lm_predict(&back, &g, &nodes)?;
    assert_eq!(a, b);
    println!(
        "{} tensors, {} bytes, predictions identical after reload",
        loaded.tensors.len(),
        std::fs::metadata(&path)?.len()
    );
    Ok(())
}
