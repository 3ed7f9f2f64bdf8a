//! Pretrain both modules, then alternate E- and M-steps and print the trace.

use glem::orchestrator::{run_glem, EmConfig, ModelConfig};
use glem::taggraph::{gen_synthetic, SynthConfig};

fn main() -> glem::Result<()> {
    let g = gen_synthetic(&SynthConfig {
        nodes: 800,
        seed: 1,
        ..Default::default()
    })?;
    let cfg = EmConfig {
        seed: 1,
        em_iters: 3,
        ..Default::default()
    };
    let run = run_glem(&g, &ModelConfig::default(), &cfg)?;

    println!("iter  phase         lm val/test      gnn val/test    texts");
    for r in run.trace.records() {
        println!(
            "{:>4}  {:<12}  {:.3} / {:.3}    {:.3} / {:.3}   {:>6}",
            r.em_iter,
            r.phase.as_str(),
            r.lm.val,
            r.lm.test,
            r.gnn.val,
            r.gnn.test,
            r.texts_encoded
        );
    }
    println!("started with {}, selected iteration {}", run.first_phase, run.best_iter);
    Ok(())
}
