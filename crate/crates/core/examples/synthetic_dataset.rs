//! Generate a stochastic-block text graph, write it to disk and load it back.

use glem::taggraph::{load_dataset, write_synthetic, Split, SynthConfig};

fn main() -> glem::Result<()> {
    let cfg = SynthConfig {
        nodes: 500,
        seed: 3,
        ..Default::default()
    };
    let dir = tempfile::tempdir()?;
    let g = write_synthetic(&cfg, dir.path())?;

    let intra = g
        .edges()
        .iter()
        .filter(|&&(u, v)| g.label(u) == g.label(v))
        .count();
    println!(
        "{} nodes, {} edges ({:.1}% within a class), {} classes, vocabulary {}",
        g.num_nodes(),
        g.num_edges(),
        100.0 * intra as f64 / g.num_edges().max(1) as f64,
        g.num_classes(),
        g.vocab_size()
    );
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("  {s:?}: {}", g.nodes_in(s).len());
    }
    println!("node 0 text: {}", g.vocab().decode(g.text(0)));

    let back = load_dataset(dir.path())?;
    assert_eq!(back, g);
    println!("reloaded from {} identically", dir.path().display());
    Ok(())
}
