//! Compare accuracy with and without test-node edges for the graph model,
//! the text model and a perceptron on frozen features.

use glem::evalsuite::{bow_features, eval_structure_free, train_mlp_on_embeddings, MlpConfig};
use glem::lm::lm_encode;
use glem::orchestrator::{run_glem, EmConfig, ModelConfig};
use glem::taggraph::{gen_synthetic, Split, SynthConfig};

fn main() -> glem::Result<()> {
    let g = gen_synthetic(&SynthConfig {
        nodes: 800,
        seed: 2,
        ..Default::default()
    })?;
    let model = ModelConfig::default();
    let run = run_glem(&g, &model, &EmConfig { seed: 2, ..Default::default() })?;
    let test = g.nodes_in(Split::Test);

    let mut rows = eval_structure_free(&run.lm, &run.gnn, &run.h0, &g, &test, model.gnn.aggregation, "glem")?;
    let mlp = MlpConfig::default();
    let emb = lm_encode(&run.lm, &g, &g.all_nodes())?;
    rows.push(train_mlp_on_embeddings(&emb, &g, &mlp, "glem")?.row);
    rows.push(train_mlp_on_embeddings(&bow_features(&g), &g, &mlp, "bow")?.row);

    println!("model  features  with    without  diff");
    for r in rows {
        println!(
            "{:<6} {:<8}  {:.3}   {:.3}    {:+.3}",
            r.model, r.features, r.with_struct, r.without_struct, r.diff
        );
    }
    Ok(())
}
