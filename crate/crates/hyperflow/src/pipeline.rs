//! End-to-end runs: data → environments → incidence → line graph → training
//! → embedding export → metrics, with every artifact written under one
//! output directory and a manifest recording what happened.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{
    config_hash, DataSource, EnvMethod, EnvSelection, FlatConfig, LineConfig, LineMode, RunConfig,
};
use crate::data;
use crate::env;
use crate::error::{Error, Result};
use crate::graph::{build_incidence, Hypergraph, LineGraph};
use crate::linegraph::{
    bernoulli_line_graph, exact_similarity, random_walk_multiset, sample_line_edges,
};
use crate::metrics::{metric_report, MetricReport};
use crate::model::{forward, Activation, ModelParams, Operators};
use crate::train::{train, train_with_task, LossRecord, TaskData, TaskKind, TrainMode, TrainOutcome};

/// A dataset plus the raw edge weights (surfaced only to task heads).
pub struct LoadedData {
    pub graph: Hypergraph,
    pub weighted_edges: Vec<(usize, usize, f64)>,
}

/// Materialize the configured data source.
pub fn load_graph(source: &DataSource, seed: u64) -> Result<LoadedData> {
    match source {
        DataSource::Files {
            edges,
            features,
            header,
            hyperedges,
        } => {
            let weighted_edges = data::load_edges(edges)?;
            let graph = data::load_dataset(edges, features.as_deref(), *header, hyperedges.as_deref())?;
            Ok(LoadedData {
                graph,
                weighted_edges,
            })
        }
        DataSource::Planted(cfg) => {
            let graph = data::generate_planted(cfg, seed)?;
            let weighted_edges = graph
                .pairwise_edges()
                .iter()
                .map(|&(u, v)| (u, v, 1.0))
                .collect();
            Ok(LoadedData {
                graph,
                weighted_edges,
            })
        }
        DataSource::Karate => {
            let graph = data::karate_club();
            let weighted_edges = graph
                .pairwise_edges()
                .iter()
                .map(|&(u, v)| (u, v, 1.0))
                .collect();
            Ok(LoadedData {
                graph,
                weighted_edges,
            })
        }
    }
}

/// Attach hyperedges using the configured constructor. `Given` keeps the
/// dataset's own hyperedges and fails when there are none.
pub fn resolve_environments(g: Hypergraph, sel: &EnvSelection, seed: u64) -> Result<Hypergraph> {
    let hyperedges = match sel.method {
        EnvMethod::Given => {
            if g.hyperedge_count() == 0 {
                return Err(Error::InvalidGraph(
                    "dataset has no hyperedges; pick an env method".into(),
                ));
            }
            return Ok(g);
        }
        EnvMethod::Membership => {
            let fit = env::fit_membership(
                g.features(),
                g.pairwise_edges(),
                sel.count,
                &sel.fit,
                seed,
            )?;
            env::extract_hyperedges(&fit.membership, sel.tau)?
        }
        EnvMethod::KMeans => env::hyperedges_from_clusters(g.features(), sel.count, seed)?,
        EnvMethod::Louvain => env::hyperedges_from_communities(g.node_count(), g.pairwise_edges())?,
        EnvMethod::KHop => env::hyperedges_from_khop(g.node_count(), g.pairwise_edges(), sel.k)?,
    };
    g.with_hyperedges(hyperedges)
}

/// Build the hyperedge co-occurrence graph in the configured mode.
pub fn build_line_graph(g: &Hypergraph, cfg: &LineConfig, seed: u64) -> Result<LineGraph> {
    match cfg.mode {
        LineMode::Exact => {
            let s = exact_similarity(g);
            let m = s.hyperedge_count();
            let mut edges = Vec::new();
            for i in 0..m {
                for j in (i + 1)..m {
                    if s.get(i, j) > 0.0 {
                        edges.push((i, j));
                    }
                }
            }
            LineGraph::new(m, edges)
        }
        LineMode::Sampled => {
            let multiset = random_walk_multiset(g, cfg.length, cfg.repeats, seed);
            Ok(sample_line_edges(&multiset, cfg.samples, seed))
        }
        LineMode::Bernoulli => Ok(bernoulli_line_graph(&exact_similarity(g), seed)),
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    activation: String,
    k_hops: usize,
    gamma: f64,
    matrices: Vec<MatrixMeta>,
}

fn checkpoint_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.display().to_string(),
        line: 0,
        message: message.into(),
    }
}

/// Write model parameters: a length-prefixed JSON header describing every
/// matrix, then their row-major values as little-endian 64-bit floats.
pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let named = params.named_matrices();
    let header = CheckpointHeader {
        activation: params.activation.name().to_string(),
        k_hops: params.k_hops,
        gamma: params.gamma,
        matrices: named
            .iter()
            .map(|(name, m)| MatrixMeta {
                name: name.clone(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + header_bytes.len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, m) in &named {
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a checkpoint back into model parameters, bit-exact.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(checkpoint_err(path, "truncated header length"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body_start = 8 + header_len;
    if bytes.len() < body_start {
        return Err(checkpoint_err(path, "truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[8..body_start])?;

    let total: usize = header.matrices.iter().map(|m| m.rows * m.cols).sum();
    if bytes.len() != body_start + total * 8 {
        return Err(checkpoint_err(
            path,
            format!(
                "expected {} value bytes, found {}",
                total * 8,
                bytes.len() - body_start
            ),
        ));
    }

    let mut offset = body_start;
    let mut hyper_layers = Vec::new();
    let mut pair_layers = Vec::new();
    let mut line_layers = Vec::new();
    let mut decoder = std::collections::BTreeMap::new();
    for meta in &header.matrices {
        let count = meta.rows * meta.cols;
        let values: Vec<f64> = bytes[offset..offset + count * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        offset += count * 8;
        let matrix = Array2::from_shape_vec((meta.rows, meta.cols), values).expect("shape matches");

        if let Some(idx) = meta.name.strip_prefix("hyper.") {
            let i: usize = idx
                .parse()
                .map_err(|_| checkpoint_err(path, format!("bad matrix name {:?}", meta.name)))?;
            hyper_layers.push((i, matrix));
        } else if let Some(idx) = meta.name.strip_prefix("pair.") {
            let i: usize = idx
                .parse()
                .map_err(|_| checkpoint_err(path, format!("bad matrix name {:?}", meta.name)))?;
            pair_layers.push((i, matrix));
        } else if let Some(idx) = meta.name.strip_prefix("line.") {
            let i: usize = idx
                .parse()
                .map_err(|_| checkpoint_err(path, format!("bad matrix name {:?}", meta.name)))?;
            line_layers.push((i, matrix));
        } else if meta.name.starts_with("decoder.") {
            decoder.insert(meta.name.clone(), matrix);
        } else {
            return Err(checkpoint_err(
                path,
                format!("unknown matrix name {:?}", meta.name),
            ));
        }
    }

    let ordered = |mut v: Vec<(usize, Array2<f64>)>, what: &str| -> Result<Vec<Array2<f64>>> {
        v.sort_by_key(|(i, _)| *i);
        for (want, (got, _)) in v.iter().enumerate() {
            if *got != want {
                return Err(checkpoint_err(path, format!("missing {what} layer {want}")));
            }
        }
        Ok(v.into_iter().map(|(_, m)| m).collect())
    };
    let mut take = |name: &str| -> Result<Array2<f64>> {
        decoder
            .remove(name)
            .ok_or_else(|| checkpoint_err(path, format!("missing matrix {name:?}")))
    };

    Ok(ModelParams {
        hyper_layers: ordered(hyper_layers, "hyper")?,
        pair_layers: ordered(pair_layers, "pair")?,
        line_layers: ordered(line_layers, "line")?,
        decoder_hidden: take("decoder.hidden.w")?,
        decoder_hidden_bias: take("decoder.hidden.b")?,
        decoder_out: take("decoder.out.w")?,
        decoder_out_bias: take("decoder.out.b")?,
        activation: Activation::parse(&header.activation)?,
        k_hops: header.k_hops,
        gamma: header.gamma,
    })
}

/// Write the per-epoch loss table as CSV.
pub fn save_loss_history(path: impl AsRef<Path>, history: &[LossRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss,pos_term,neg_term\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.pos_term, r.neg_term));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write embeddings as CSV: node id, then one column per dimension.
pub fn save_embeddings(path: impl AsRef<Path>, embeddings: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for (i, row) in embeddings.rows().into_iter().enumerate() {
        out.push_str(&i.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read embeddings written by [`save_embeddings`]; ids must run 0..N.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut fields = raw.split(',');
        let id: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Data {
                path: label.clone(),
                line,
                message: "bad node id".into(),
            })?;
        if id != rows.len() {
            return Err(Error::Data {
                path: label.clone(),
                line,
                message: format!("expected id {}, found {id}", rows.len()),
            });
        }
        let row = fields
            .map(|f| {
                f.parse().map_err(|_| Error::Data {
                    path: label.clone(),
                    line,
                    message: format!("bad number {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Data {
                    path: label.clone(),
                    line,
                    message: "ragged embedding rows".into(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data {
            path: label,
            line: 1,
            message: "no embedding rows".into(),
        });
    }
    let d = rows[0].len();
    Ok(Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("rectangular rows"))
}

/// Wall-clock seconds spent in one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

/// What a run did: identity, outcome, stage timings, and files produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<String>,
}

fn stage<T>(
    manifest: &mut Manifest,
    name: &str,
    f: impl FnOnce(&mut Manifest) -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    match f(manifest) {
        Ok(v) => {
            manifest.stages.push(StageTiming {
                name: name.to_string(),
                seconds: start.elapsed().as_secs_f64(),
            });
            Ok(v)
        }
        Err(e) => {
            manifest.error = Some(format!("{name}: {e}"));
            Err(e)
        }
    }
}

/// Assemble the supervision an unpluggable run trains against; `None` in
/// pluggable mode.
pub fn task_data_for(cfg: &RunConfig, loaded: &LoadedData) -> Result<Option<TaskData>> {
    if cfg.train.mode != TrainMode::Unpluggable {
        return Ok(None);
    }
    match cfg.train.task {
        Some(TaskKind::LinkPrediction) => Ok(Some(TaskData::LinkPrediction {
            edges: loaded.graph.pairwise_edges().iter().copied().collect(),
        })),
        Some(TaskKind::RatingRegression) => {
            if loaded
                .weighted_edges
                .iter()
                .any(|&(_, _, w)| !(0.0..=1.0).contains(&w))
            {
                return Err(Error::Config(
                    "rating targets are edge weights and must lie in [0, 1]".into(),
                ));
            }
            Ok(Some(TaskData::RatingRegression {
                ratings: loaded.weighted_edges.clone(),
            }))
        }
        None => Err(Error::Config("unpluggable mode needs a task".into())),
    }
}

fn run_stages(cfg: &RunConfig, manifest: &mut Manifest) -> Result<MetricReport> {
    let loaded = stage(manifest, "data", |_| load_graph(&cfg.data, cfg.seed))?;
    let task_data = task_data_for(cfg, &loaded)?;
    let g = stage(manifest, "env", |_| {
        resolve_environments(loaded.graph, &cfg.env, cfg.seed)
    })?;
    let inc = stage(manifest, "incidence", |_| build_incidence(&g))?;
    let lg = stage(manifest, "line", |_| build_line_graph(&g, &cfg.line, cfg.seed))?;

    let outcome: TrainOutcome = stage(manifest, "train", |m| {
        let outcome = match &task_data {
            Some(data) => train_with_task(&g, &inc, &lg, &cfg.train, &cfg.model, data)?,
            None => train(&g, &inc, &lg, &cfg.train, &cfg.model)?,
        };
        save_loss_history(cfg.output.join("loss.csv"), &outcome.history)?;
        save_checkpoint(cfg.output.join("checkpoint.bin"), &outcome.params)?;
        m.artifacts.push("loss.csv".into());
        m.artifacts.push("checkpoint.bin".into());
        Ok(outcome)
    })?;

    let embeddings = stage(manifest, "embed", |m| {
        let ops = Operators::build(&g, &inc, &lg, cfg.model.k_hops, cfg.model.gamma)?;
        let set = forward(&g, &ops, &outcome.params)?;
        save_embeddings(cfg.output.join("embeddings.csv"), &set.r_encode)?;
        m.artifacts.push("embeddings.csv".into());
        Ok(set.r_encode)
    })?;

    stage(manifest, "metrics", |m| {
        let report = metric_report(&g, &embeddings, &outcome.snapshots, &cfg.metrics, cfg.seed)?;
        fs::write(
            cfg.output.join("metrics.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        m.artifacts.push("metrics.json".into());
        Ok(report)
    })
}

/// Execute every stage, writing artifacts and a manifest under the output
/// directory. The manifest is persisted even when a stage fails, with the
/// failing stage named in `error`.
pub fn run_pipeline(cfg: &RunConfig, flat: &FlatConfig) -> Result<Manifest> {
    fs::create_dir_all(&cfg.output)?;
    let mut manifest = Manifest {
        config_hash: config_hash(flat),
        seed: cfg.seed,
        status: "ok".into(),
        error: None,
        stages: Vec::new(),
        artifacts: Vec::new(),
    };
    let result = run_stages(cfg, &mut manifest);
    if result.is_err() {
        manifest.status = "failed".into();
    }
    fs::write(
        cfg.output.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    result.map(|_| manifest)
}

/// Convenience for callers that only need hyperedges attached: data + env
/// stages without artifacts.
pub fn prepare_graph(cfg: &RunConfig) -> Result<Hypergraph> {
    let loaded = load_graph(&cfg.data, cfg.seed)?;
    resolve_environments(loaded.graph, &cfg.env, cfg.seed)
}
