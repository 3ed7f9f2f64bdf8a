//! Text-attributed graphs: data model, dataset files, synthetic generation
//! and adjacency normalization.

mod adjacency;
mod graph;
pub mod io;
pub mod synth;
mod vocab;

pub use adjacency::{normalized_adjacency, Aggregation, NormalizedAdjacency};
pub use graph::{Split, TagGraph};
pub use io::{load_dataset, load_graph, load_graph_with, save_graph, LoadOptions, LoadReport};
pub use synth::{gen_synthetic, write_synthetic, SynthConfig};
pub use vocab::{Vocabulary, UNK, UNK_TOKEN};

/// Free-function form of [`TagGraph::strip_edges`].
pub fn strip_edges(g: &TagGraph, nodes: &[usize]) -> TagGraph {
    g.strip_edges(nodes)
}

/// Free-function form of [`TagGraph::make_splits`].
pub fn make_splits(
    g: &TagGraph,
    fractions: (f64, f64, f64),
    seed: u64,
) -> crate::Result<TagGraph> {
    g.make_splits(fractions, seed)
}
