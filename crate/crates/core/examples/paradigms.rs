//! Text-only fine-tuning, frozen embeddings, joint co-training and EM side
//! by side. Writes `metrics.csv` and `compare.csv` to a temp directory.

use glem::harness::{run_compare, RunConfig};
use glem::taggraph::SynthConfig;

fn main() -> glem::Result<()> {
    let out = tempfile::tempdir()?;
    let mut cfg = RunConfig::default();
    cfg.data.synthetic = Some(SynthConfig {
        nodes: 600,
        ..Default::default()
    });
    cfg.seeds = vec![0, 1];

    let rows = run_compare(&cfg, out.path())?;
    for metric in ["test_acc", "texts_per_gnn_update", "parameters"] {
        println!("{metric}");
        for r in rows.iter().filter(|r| r.metric == metric) {
            println!("  {:<9} {:>10.4}", r.paradigm, r.value);
        }
    }
    print!("{}", std::fs::read_to_string(out.path().join("compare.csv"))?.lines().take(3).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
