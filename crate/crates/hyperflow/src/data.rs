//! Dataset files, synthetic generators, and the bundled example graph.
//!
//! Three plain-text formats: tab-separated edge lists ("src\tdst[\tweight]",
//! `#` comments), CSV feature matrices (one node per row, optional header),
//! and hyperedge lists (space-separated node ids, one group per line).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::Hypergraph;
use crate::rng;

const KARATE_EDGES: &str = include_str!("../data/karate_club.tsv");

fn data_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_id(field: &str, path: &str, line: usize) -> Result<usize> {
    field
        .parse()
        .map_err(|_| data_err(path, line, format!("bad node id {field:?}")))
}

/// Parse an edge list: one `src\tdst[\tweight]` per line, duplicates (in
/// either orientation) kept once with the first weight seen.
pub fn parse_edges(text: &str, path: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(data_err(path, line, "expected src<TAB>dst[<TAB>weight]"));
        }
        let src = parse_id(fields[0], path, line)?;
        let dst = parse_id(fields[1], path, line)?;
        let weight = match fields.get(2) {
            Some(w) => w
                .parse()
                .map_err(|_| data_err(path, line, format!("bad weight {w:?}")))?,
            None => 1.0,
        };
        if seen.insert((src.min(dst), src.max(dst))) {
            edges.push((src, dst, weight));
        }
    }
    Ok(edges)
}

/// Read and parse an edge-list file.
pub fn load_edges(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_edges(&text, &path.display().to_string())
}

/// Read a CSV feature matrix; every row must have the same width.
pub fn load_features(path: impl AsRef<Path>, has_header: bool) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || (has_header && i == 0) {
            continue;
        }
        let row = raw
            .split(',')
            .map(|f| {
                f.trim()
                    .parse()
                    .map_err(|_| data_err(&label, line, format!("bad number {:?}", f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(data_err(
                    &label,
                    line,
                    format!("row has {} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err(&label, 1, "no feature rows"));
    }
    let d = rows[0].len();
    Ok(Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("rectangular rows"))
}

/// Read a hyperedge file: space-separated node ids, one group per line.
pub fn load_hyperedges(path: impl AsRef<Path>) -> Result<Vec<BTreeSet<usize>>> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut hyperedges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let members = trimmed
            .split_whitespace()
            .map(|f| parse_id(f, &label, line))
            .collect::<Result<BTreeSet<usize>>>()?;
        hyperedges.push(members);
    }
    Ok(hyperedges)
}

/// One-hot features over logarithmic degree buckets (bucket = ⌊log2(deg+1)⌋),
/// the fallback when no feature file is given.
pub fn degree_bucket_features(node_count: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut degree = vec![0usize; node_count];
    for &(u, v) in edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let bucket = |d: usize| (usize::BITS - (d + 1).leading_zeros() - 1) as usize;
    let width = degree.iter().map(|&d| bucket(d) + 1).max().unwrap_or(1);
    let mut x = Array2::zeros((node_count, width));
    for (u, &d) in degree.iter().enumerate() {
        x[[u, bucket(d)]] = 1.0;
    }
    x
}

/// Assemble a hypergraph from an edge file plus optional feature and
/// hyperedge files. Without features, nodes get degree-bucket one-hots.
pub fn load_dataset(
    edges_path: impl AsRef<Path>,
    features_path: Option<&Path>,
    has_header: bool,
    hyperedges_path: Option<&Path>,
) -> Result<Hypergraph> {
    let edges_path = edges_path.as_ref();
    let weighted = load_edges(edges_path)?;
    let edges: Vec<(usize, usize)> = weighted.iter().map(|&(u, v, _)| (u, v)).collect();
    let hyperedges = match hyperedges_path {
        Some(p) => load_hyperedges(p)?,
        None => Vec::new(),
    };

    let max_id = edges
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .chain(hyperedges.iter().flatten().copied())
        .max();
    let features = match features_path {
        Some(p) => {
            let x = load_features(p, has_header)?;
            if let Some(m) = max_id {
                if m >= x.nrows() {
                    return Err(data_err(
                        &edges_path.display().to_string(),
                        0,
                        format!("node id {m} out of range for {} feature rows", x.nrows()),
                    ));
                }
            }
            x
        }
        None => {
            let n = max_id.map_or(0, |m| m + 1);
            degree_bucket_features(n, &edges)
        }
    };
    Hypergraph::new(features, hyperedges, edges)
}

/// Write an edge list in the same format `load_edges` reads.
pub fn save_edges(path: impl AsRef<Path>, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = String::new();
    for &(u, v) in edges {
        out.push_str(&format!("{u}\t{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a feature matrix as CSV (no header).
pub fn save_features(path: impl AsRef<Path>, features: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in features.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a hyperedge list in the same format `load_hyperedges` reads.
pub fn save_hyperedges(path: impl AsRef<Path>, hyperedges: &[BTreeSet<usize>]) -> Result<()> {
    let mut out = String::new();
    for e in hyperedges {
        let fields: Vec<String> = e.iter().map(|u| u.to_string()).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Shape of a planted-partition instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub cliques: usize,
    pub clique_size: usize,
    pub inter_p: f64,
    pub noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            cliques: 2,
            clique_size: 8,
            inter_p: 0.05,
            noise: 0.1,
        }
    }
}

/// Generate `cliques` fully connected blocks, cross edges with probability
/// `inter_p`, block one-hot features plus Gaussian noise, and one hyperedge
/// per block. Node weights are uniform (every member counts the same), which
/// keeps the influence operator row-stochastic on the block hyperedges.
pub fn generate_planted(cfg: &PlantedConfig, seed: u64) -> Result<Hypergraph> {
    if cfg.cliques == 0 || cfg.clique_size < 2 {
        return Err(Error::Config(
            "planted instance needs at least one clique of size >= 2".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.inter_p) {
        return Err(Error::Config(format!(
            "inter_p {} outside [0, 1]",
            cfg.inter_p
        )));
    }
    if cfg.noise < 0.0 {
        return Err(Error::Config("feature noise must be nonnegative".into()));
    }

    let n = cfg.cliques * cfg.clique_size;
    let block = |u: usize| u / cfg.clique_size;
    let mut edges = Vec::new();
    let mut r = rng::stream(seed, "planted.edges");
    for u in 0..n {
        for v in (u + 1)..n {
            if block(u) == block(v) || r.gen::<f64>() < cfg.inter_p {
                edges.push((u, v));
            }
        }
    }

    let mut features = Array2::zeros((n, cfg.cliques));
    for u in 0..n {
        features[[u, block(u)]] = 1.0;
    }
    if cfg.noise > 0.0 {
        let normal = Normal::new(0.0, cfg.noise).expect("positive std dev");
        let mut r = rng::stream(seed, "planted.noise");
        for v in features.iter_mut() {
            *v += normal.sample(&mut r);
        }
    }

    let hyperedges: Vec<BTreeSet<usize>> = (0..cfg.cliques)
        .map(|b| (b * cfg.clique_size..(b + 1) * cfg.clique_size).collect())
        .collect();
    let weights: Vec<f64> = hyperedges.iter().map(|e| e.len() as f64).collect();
    Hypergraph::new(features, hyperedges, edges)?.with_weights(weights, vec![1.0; n])
}

/// The bundled Zachary karate club graph (34 nodes, 78 edges) with
/// degree-bucket features and no hyperedges.
pub fn karate_club() -> Hypergraph {
    let weighted = parse_edges(KARATE_EDGES, "karate_club.tsv").expect("bundled data parses");
    let edges: Vec<(usize, usize)> = weighted.iter().map(|&(u, v, _)| (u, v)).collect();
    let features = degree_bucket_features(34, &edges);
    Hypergraph::new(features, Vec::new(), edges).expect("bundled data is valid")
}
