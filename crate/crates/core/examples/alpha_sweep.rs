//! Effect of the pseudo-label weight in the E-step on text-model accuracy.

use glem::orchestrator::{run_glem, EmConfig, ModelConfig};
use glem::taggraph::{gen_synthetic, SynthConfig};

fn main() -> glem::Result<()> {
    let model = ModelConfig::default();
    for alpha in [0.0, 0.25, 0.5, 0.75] {
        let mut accs = Vec::new();
        for seed in 0..2 {
            let g = gen_synthetic(&SynthConfig {
                nodes: 800,
                seed,
                ..Default::default()
            })?;
            let cfg = EmConfig {
                alpha,
                seed,
                ..Default::default()
            };
            let run = run_glem(&g, &model, &cfg)?;
            accs.push(run.trace.end_of_iteration(run.best_iter).expect("recorded").lm.test);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("alpha {alpha:.2}: text model test accuracy {mean:.3}");
    }
    Ok(())
}
