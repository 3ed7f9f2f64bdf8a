use glem::taggraph::{
    gen_synthetic, load_dataset, normalized_adjacency, save_graph, write_synthetic, Aggregation, NormalizedAdjacency,
    Split, SynthConfig, TagGraph, Vocabulary,
};
use proptest::prelude::*;

fn small_graph() -> impl Strategy<Value = TagGraph> {
    (2usize..12, 2usize..4).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec(prop::collection::vec(0u32..8, 1..5), n),
            prop::collection::vec(0..c, n),
            prop::collection::vec(0u8..3, n),
            prop::collection::vec((0..n, 0..n), 0..3 * n),
            Just(c),
        )
            .prop_map(|(texts, labels, splits, edges, c)| {
                let splits = splits
                    .into_iter()
                    .map(|s| match s {
                        0 => Split::Train,
                        1 => Split::Val,
                        _ => Split::Test,
                    })
                    .collect();
                let labels = labels.into_iter().map(Some).collect();
                TagGraph::new(c, Vocabulary::synthetic(7), texts, labels, splits, &edges).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_then_load_is_identical(g in small_graph()) {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(back.texts(), g.texts());
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.splits(), g.splits());
        prop_assert_eq!(back.labels(), g.labels());
    }

    #[test]
    fn normalization_is_symmetric(g in small_graph()) {
        let adj = normalized_adjacency(&g);
        prop_assert!(adj.matrix().asymmetry() <= 1e-12);
    }

    #[test]
    fn stripped_rows_are_pure_self_loops(g in small_graph(), pick in prop::collection::vec(any::<bool>(), 12)) {
        let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&i| pick[i]).collect();
        let stripped = g.strip_edges(&nodes);
        for agg in [Aggregation::Gcn, Aggregation::Mean] {
            let adj = NormalizedAdjacency::build(&stripped, agg);
            for &n in &nodes {
                let row: Vec<(usize, f64)> = adj.matrix().row(n).collect();
                prop_assert_eq!(row, vec![(n, 1.0)]);
            }
        }
        // Edges not touching a stripped node survive.
        for (u, v) in g.edges() {
            let kept = stripped.neighbors(u).contains(&v);
            prop_assert_eq!(kept, !pick[u] && !pick[v]);
        }
    }
}

#[test]
fn block_model_edges_mostly_within_class() {
    for seed in 0..10 {
        let g = gen_synthetic(&SynthConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let edges = g.edges();
        let intra = edges.iter().filter(|&&(u, v)| g.label(u) == g.label(v)).count();
        let frac = intra as f64 / edges.len() as f64;
        assert!(frac > 0.6, "seed {seed}: intra-class fraction {frac}");
    }
}

#[test]
fn synthetic_generation_is_reproducible_on_disk() {
    let cfg = SynthConfig {
        nodes: 300,
        seed: 4,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_synthetic(&cfg, a.path()).unwrap();
    write_synthetic(&cfg, b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
    assert_eq!(load_dataset(a.path()).unwrap(), gen_synthetic(&cfg).unwrap());
}
