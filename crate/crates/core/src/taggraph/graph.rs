use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Text-attributed graph: undirected adjacency, per-node token ids,
/// optional labels and a train/val/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct TagGraph {
    num_classes: usize,
    vocab: Vocabulary,
    indptr: Vec<usize>,
    neighbors: Vec<usize>,
    texts: Vec<Vec<u32>>,
    labels: Vec<Option<usize>>,
    splits: Vec<Split>,
}

impl TagGraph {
    /// Validates and assembles a graph. Edges are symmetrized and
    /// deduplicated; self-loops are dropped.
    pub fn new(
        num_classes: usize,
        vocab: Vocabulary,
        texts: Vec<Vec<u32>>,
        labels: Vec<Option<usize>>,
        splits: Vec<Split>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let n = texts.len();
        if labels.len() != n || splits.len() != n {
            return Err(Error::Invalid(format!(
                "{} texts, {} labels, {} split tags",
                n,
                labels.len(),
                splits.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Invalid("num_classes must be positive".into()));
        }
        let vsize = vocab.len() as u32;
        for (i, t) in texts.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Invalid(format!("node {i} has an empty token list")));
            }
            if let Some(&bad) = t.iter().find(|&&id| id >= vsize) {
                return Err(Error::Invalid(format!(
                    "node {i}: token id {bad} outside vocabulary of size {vsize}"
                )));
            }
        }
        for (i, l) in labels.iter().enumerate() {
            match l {
                Some(c) if *c >= num_classes => {
                    return Err(Error::Invalid(format!(
                        "node {i}: label {c} outside [0, {num_classes})"
                    )))
                }
                None if splits[i] == Split::Train => return Err(Error::MissingLabel(i)),
                _ => {}
            }
        }

        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::UnknownNode {
                    id: u.max(v),
                    line: 0,
                });
            }
            if u != v {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let mut neighbors = Vec::new();
        for set in &adj {
            neighbors.extend(set.iter().copied());
            indptr.push(neighbors.len());
        }
        Ok(TagGraph {
            num_classes,
            vocab,
            indptr,
            neighbors,
            texts,
            labels,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.texts.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Sorted neighbor list of `n`.
    pub fn neighbors(&self, n: usize) -> &[usize] {
        &self.neighbors[self.indptr[n]..self.indptr[n + 1]]
    }

    pub fn degree(&self, n: usize) -> usize {
        self.indptr[n + 1] - self.indptr[n]
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Undirected edges as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .flat_map(|u| {
                self.neighbors(u)
                    .iter()
                    .filter(move |&&v| v > u)
                    .map(move |&v| (u, v))
            })
            .collect()
    }

    pub fn text(&self, n: usize) -> &[u32] {
        &self.texts[n]
    }

    pub fn texts(&self) -> &[Vec<u32>] {
        &self.texts
    }

    pub fn label(&self, n: usize) -> Option<usize> {
        self.labels[n]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn split(&self, n: usize) -> Split {
        self.splits[n]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&n| self.splits[n] == split)
            .collect()
    }

    /// Labeled nodes `L`: the train split.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Train)
    }

    /// Unlabeled nodes `U = V \ L`.
    pub fn unlabeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&n| self.splits[n] != Split::Train)
            .collect()
    }

    pub fn all_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).collect()
    }

    /// Copy with every edge incident to any node in `nodes` removed.
    pub fn strip_edges(&self, nodes: &[usize]) -> TagGraph {
        let mut drop = vec![false; self.num_nodes()];
        for &n in nodes {
            if n < drop.len() {
                drop[n] = true;
            }
        }
        let mut indptr = Vec::with_capacity(self.num_nodes() + 1);
        indptr.push(0);
        let mut neighbors = Vec::with_capacity(self.neighbors.len());
        for u in 0..self.num_nodes() {
            if !drop[u] {
                neighbors.extend(self.neighbors(u).iter().copied().filter(|&v| !drop[v]));
            }
            indptr.push(neighbors.len());
        }
        TagGraph {
            indptr,
            neighbors,
            ..self.clone()
        }
    }

    /// Reassigns splits by a seeded uniform permutation cut into contiguous
    /// slices of sizes `floor(N·f_train)`, `floor(N·f_val)` and the rest.
    pub fn make_splits(&self, fractions: (f64, f64, f64), seed: u64) -> Result<TagGraph> {
        let (ft, fv, fs) = fractions;
        if [ft, fv, fs].iter().any(|f| !(*f > 0.0)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
            return Err(Error::Range {
                key: "split fractions".into(),
                msg: format!("({ft}, {fv}, {fs}) must be positive and sum to 1"),
            });
        }
        let n = self.num_nodes();
        let n_train = (n as f64 * ft + 1e-9).floor() as usize;
        let n_val = (n as f64 * fv + 1e-9).floor() as usize;
        if n_train == 0 {
            return Err(Error::EmptySplit("train"));
        }
        if n_val == 0 {
            return Err(Error::EmptySplit("val"));
        }
        if n_train + n_val >= n {
            return Err(Error::EmptySplit("test"));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut splits = vec![Split::Test; n];
        for (k, &node) in perm.iter().enumerate() {
            splits[node] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        if let Some(&n) = perm[..n_train].iter().find(|&&i| self.labels[i].is_none()) {
            return Err(Error::MissingLabel(n));
        }
        Ok(TagGraph {
            splits,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> TagGraph {
        TagGraph::new(
            2,
            Vocabulary::from_tokens(["a", "b"]),
            vec![vec![1], vec![2], vec![1, 2]],
            vec![Some(0), Some(1), None],
            vec![Split::Train, Split::Val, Split::Test],
            &[(0, 1), (1, 2)],
        )
        .unwrap()
    }

    #[test]
    fn symmetrizes_and_dedups() {
        let g = TagGraph::new(
            1,
            Vocabulary::default(),
            vec![vec![0], vec![0]],
            vec![Some(0), Some(0)],
            vec![Split::Train, Split::Test],
            &[(0, 1), (1, 0), (0, 1), (1, 1)],
        )
        .unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn train_node_needs_label() {
        let err = TagGraph::new(
            1,
            Vocabulary::default(),
            vec![vec![0]],
            vec![None],
            vec![Split::Train],
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingLabel(0)));
    }

    #[test]
    fn strip_examples() {
        let g = path3();
        assert_eq!(g.strip_edges(&[1]).num_edges(), 0);
        assert_eq!(g.strip_edges(&[0, 1, 2]).num_edges(), 0);
        assert_eq!(g.strip_edges(&[]), g);
        assert_eq!(g.strip_edges(&[0]).edges(), vec![(1, 2)]);
    }

    fn line(n: usize) -> TagGraph {
        TagGraph::new(
            1,
            Vocabulary::default(),
            vec![vec![0]; n],
            vec![Some(0); n],
            vec![Split::Test; n],
            &[],
        )
        .unwrap()
    }

    fn sizes(g: &TagGraph) -> (usize, usize, usize) {
        (
            g.nodes_in(Split::Train).len(),
            g.nodes_in(Split::Val).len(),
            g.nodes_in(Split::Test).len(),
        )
    }

    #[test]
    fn split_sizes() {
        assert_eq!(sizes(&line(10).make_splits((0.6, 0.2, 0.2), 3).unwrap()), (6, 2, 2));
        assert_eq!(sizes(&line(7).make_splits((0.5, 0.25, 0.25), 3).unwrap()), (3, 1, 3));
        let a = line(50).make_splits((0.5, 0.25, 0.25), 9).unwrap();
        let b = line(50).make_splits((0.5, 0.25, 0.25), 9).unwrap();
        assert_eq!(a.splits(), b.splits());
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            line(2).make_splits((0.5, 0.25, 0.25), 0),
            Err(Error::EmptySplit("val"))
        ));
        assert!(line(10).make_splits((0.5, 0.5, 0.5), 0).is_err());
    }
}
