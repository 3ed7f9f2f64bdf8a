//! Dataset files.
//!
//! * `nodes.jsonl`: one JSON object per line with `id`, `text`, `label`
//!   (integer, `null`, `""` or absent) and `split` (`train|val|test`).
//! * `edges.tsv`: `src<TAB>dst` per line, `#` starts a comment.
//! * `vocab.txt` (optional): one token per line, line index = token id.
//!   When present, tokens are mapped through it verbatim with no cutoff.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::{Split, TagGraph};
use super::vocab::{Vocabulary, UNK_TOKEN};
use crate::error::{Error, Result};

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Tokens seen fewer times than this map to `<unk>`.
    pub min_count: usize,
    /// Fixed vocabulary; overrides `min_count`.
    pub vocab: Option<Vocabulary>,
    /// Class count; defaults to `max label + 1`.
    pub num_classes: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_count: 2,
            vocab: None,
            num_classes: None,
        }
    }
}

/// Counters for input lines that were normalized away during loading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicate_edges: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelField {
    Int(usize),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    text: String,
    #[serde(default)]
    label: Option<LabelField>,
    split: Split,
}

#[derive(Serialize)]
struct NodeRecordOut<'a> {
    id: usize,
    text: &'a str,
    label: Option<usize>,
    split: Split,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<TagGraph> {
    load_graph_with(nodes_path, edges_path, &LoadOptions::default()).map(|(g, _)| g)
}

pub fn load_graph_with(
    nodes_path: &Path,
    edges_path: &Path,
    opts: &LoadOptions,
) -> Result<(TagGraph, LoadReport)> {
    let raw = fs::read_to_string(nodes_path)?;
    let mut records: Vec<Option<(String, Option<usize>, Split)>> = Vec::new();
    for (k, line) in raw.lines().enumerate() {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord =
            serde_json::from_str(line).map_err(|e| parse_err(nodes_path, lineno, e.to_string()))?;
        let label = match rec.label {
            None => None,
            Some(LabelField::Int(c)) => Some(c),
            Some(LabelField::Text(s)) if s.trim().is_empty() => None,
            Some(LabelField::Text(s)) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| parse_err(nodes_path, lineno, format!("bad label `{s}`")))?,
            ),
        };
        if records.len() <= rec.id {
            records.resize(rec.id + 1, None);
        }
        if records[rec.id].is_some() {
            return Err(Error::DuplicateNode(rec.id));
        }
        records[rec.id] = Some((rec.text, label, rec.split));
    }
    if let Some(missing) = records.iter().position(Option::is_none) {
        return Err(parse_err(nodes_path, 0, format!("node ids not dense: {missing} missing")));
    }
    let records: Vec<(String, Option<usize>, Split)> = records.into_iter().flatten().collect();
    let n = records.len();

    let vocab = match &opts.vocab {
        Some(v) => v.clone(),
        None => {
            let mut counts = BTreeMap::new();
            for (text, _, _) in &records {
                for t in text.split_whitespace() {
                    *counts.entry(t.to_string()).or_insert(0usize) += 1;
                }
            }
            Vocabulary::from_counts(&counts, opts.min_count)
        }
    };

    let num_classes = match opts.num_classes {
        Some(c) => c,
        None => records.iter().filter_map(|r| r.1).max().map_or(1, |m| m + 1),
    };

    let mut texts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for (id, (text, label, split)) in records.into_iter().enumerate() {
        if split == Split::Train && label.is_none() {
            return Err(Error::MissingLabel(id));
        }
        texts.push(vocab.encode(&text));
        labels.push(label);
        splits.push(split);
    }

    let (edges, report) = read_edges(edges_path, n)?;
    if report.self_loops > 0 {
        log::warn!("dropped {} self-loop lines from {}", report.self_loops, edges_path.display());
    }
    let g = TagGraph::new(num_classes, vocab, texts, labels, splits, &edges)?;
    Ok((g, report))
}

fn read_edges(path: &Path, n: usize) -> Result<(Vec<(usize, usize)>, LoadReport)> {
    let raw = fs::read_to_string(path)?;
    let mut report = LoadReport::default();
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for (k, line) in raw.lines().enumerate() {
        let lineno = k + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let [a, b] = fields.as_slice() else {
            return Err(parse_err(path, lineno, format!("expected `src<TAB>dst`, got `{body}`")));
        };
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(path, lineno, format!("bad node id `{s}`")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        for id in [u, v] {
            if id >= n {
                return Err(Error::UnknownNode { id, line: lineno });
            }
        }
        if u == v {
            report.self_loops += 1;
            continue;
        }
        if !seen.insert((u.min(v), u.max(v))) {
            report.duplicate_edges += 1;
            continue;
        }
        edges.push((u, v));
    }
    Ok((edges, report))
}

/// Writes `nodes.jsonl`, `edges.tsv` and `vocab.txt` into `dir`.
pub fn save_graph(g: &TagGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(NODES_FILE))?);
    for n in 0..g.num_nodes() {
        let text = g.vocab().decode(g.text(n));
        let rec = NodeRecordOut {
            id: n,
            text: &text,
            label: g.label(n),
            split: g.split(n),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join(EDGES_FILE))?);
    writeln!(w, "# src\tdst")?;
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join(VOCAB_FILE))?);
    for t in g.vocab().tokens() {
        writeln!(w, "{t}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let raw = fs::read_to_string(path)?;
    let mut lines = raw.lines();
    match lines.next() {
        Some(UNK_TOKEN) => {}
        other => {
            return Err(parse_err(
                path,
                1,
                format!("first vocabulary entry must be {UNK_TOKEN}, got {other:?}"),
            ))
        }
    }
    Ok(Vocabulary::from_tokens(lines.map(str::to_string)))
}

/// Paths of a dataset directory.
pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(NODES_FILE), dir.join(EDGES_FILE), dir.join(VOCAB_FILE))
}

/// Loads a dataset directory, honoring `vocab.txt` and a `meta.json`
/// class count when present.
pub fn load_dataset(dir: &Path) -> Result<TagGraph> {
    let (nodes, edges, vocab) = dataset_paths(dir);
    let mut opts = LoadOptions::default();
    if vocab.exists() {
        opts.vocab = Some(read_vocab(&vocab)?);
    }
    let meta = dir.join(super::synth::META_FILE);
    if meta.exists() {
        let m: super::synth::SynthMeta = serde_json::from_str(&fs::read_to_string(meta)?)?;
        opts.num_classes = Some(m.config.classes);
    }
    load_graph_with(&nodes, &edges, &opts).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, nodes: &str, edges: &str) -> (PathBuf, PathBuf) {
        let (n, e, _) = dataset_paths(dir);
        fs::write(&n, nodes).unwrap();
        fs::write(&e, edges).unwrap();
        (n, e)
    }

    #[test]
    fn single_directed_edge_is_symmetrized() {
        let d = tempfile::tempdir().unwrap();
        let (n, e) = write(
            d.path(),
            "{\"id\":0,\"text\":\"a b\",\"label\":0,\"split\":\"train\"}\n\
             {\"id\":1,\"text\":\"a\",\"label\":\"\",\"split\":\"test\"}\n",
            "# comment\n0\t1\n",
        );
        let g = load_graph(&n, &e).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.label(1), None);
    }

    #[test]
    fn duplicate_node_id() {
        let d = tempfile::tempdir().unwrap();
        let (n, e) = write(
            d.path(),
            "{\"id\":0,\"text\":\"a\",\"label\":0,\"split\":\"train\"}\n\
             {\"id\":0,\"text\":\"b\",\"label\":0,\"split\":\"test\"}\n",
            "",
        );
        let err = load_graph(&n, &e).unwrap_err();
        assert!(matches!(err, Error::DuplicateNode(0)), "{err}");
        assert!(err.to_string().contains('0'));
    }

    #[test]
    fn edge_errors_and_cleanup() {
        let d = tempfile::tempdir().unwrap();
        let nodes = "{\"id\":0,\"text\":\"x\",\"label\":0,\"split\":\"train\"}\n\
                     {\"id\":1,\"text\":\"x\",\"label\":null,\"split\":\"val\"}\n";
        let (n, e) = write(d.path(), nodes, "0\t5\n");
        assert!(matches!(load_graph(&n, &e), Err(Error::UnknownNode { id: 5, line: 1 })));

        let (n, e) = write(d.path(), nodes, "0\t1\n1\t0\n1\t1\n");
        let (g, rep) = load_graph_with(&n, &e, &LoadOptions::default()).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(rep, LoadReport { self_loops: 1, duplicate_edges: 1 });

        let (n, e) = write(d.path(), nodes, "0 1 2\n");
        let err = load_graph(&n, &e).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn malformed_node_line_reports_line_number() {
        let d = tempfile::tempdir().unwrap();
        let (n, e) = write(
            d.path(),
            "{\"id\":0,\"text\":\"x\",\"label\":0,\"split\":\"train\"}\n{oops\n",
            "",
        );
        let err = load_graph(&n, &e).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_train_label() {
        let d = tempfile::tempdir().unwrap();
        let (n, e) = write(d.path(), "{\"id\":0,\"text\":\"x\",\"split\":\"train\"}\n", "");
        assert!(matches!(load_graph(&n, &e), Err(Error::MissingLabel(0))));
    }

    #[test]
    fn frequency_cutoff() {
        let d = tempfile::tempdir().unwrap();
        let mut nodes = String::new();
        for i in 0..50 {
            let text = if i == 0 { "the zzyx" } else { "the" };
            nodes.push_str(&format!(
                "{{\"id\":{i},\"text\":\"{text}\",\"label\":0,\"split\":\"train\"}}\n"
            ));
        }
        let (n, e) = write(d.path(), &nodes, "");
        let g = load_graph(&n, &e).unwrap();
        assert_eq!(g.text(0)[1], 0);
        assert_ne!(g.text(0)[0], 0);
    }
}
