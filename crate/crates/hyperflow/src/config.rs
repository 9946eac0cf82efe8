//! Run configuration: one flat JSON object of dotted keys.
//!
//! Unknown keys are rejected rather than ignored, command-line overrides
//! (`key=value`) patch the file before validation, and a hash of the
//! semantic entries (everything but the output directory) identifies a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::PlantedConfig;
use crate::env::EnvFitConfig;
use crate::error::{Error, Result};
use crate::metrics::{EntropyMode, MetricConfig};
use crate::model::{Activation, ModelConfig};
use crate::train::{OptimizerKind, TaskKind, TrainConfig, TrainMode};

/// The raw key → value view of a config file, before typing.
pub type FlatConfig = BTreeMap<String, Value>;

/// Where the input graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        edges: PathBuf,
        features: Option<PathBuf>,
        header: bool,
        hyperedges: Option<PathBuf>,
    },
    Planted(PlantedConfig),
    Karate,
}

/// How hyperedges are produced when the dataset does not supply them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvMethod {
    Given,
    Membership,
    KMeans,
    Louvain,
    KHop,
}

impl EnvMethod {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "given" => Ok(EnvMethod::Given),
            "membership" => Ok(EnvMethod::Membership),
            "kmeans" => Ok(EnvMethod::KMeans),
            "louvain" => Ok(EnvMethod::Louvain),
            "khop" => Ok(EnvMethod::KHop),
            _ => Err(Error::Config(format!("unknown env method {name:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvMethod::Given => "given",
            EnvMethod::Membership => "membership",
            EnvMethod::KMeans => "kmeans",
            EnvMethod::Louvain => "louvain",
            EnvMethod::KHop => "khop",
        }
    }
}

/// Environment stage settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSelection {
    pub method: EnvMethod,
    pub count: usize,
    pub tau: f64,
    pub k: usize,
    pub fit: EnvFitConfig,
}

impl Default for EnvSelection {
    fn default() -> Self {
        EnvSelection {
            method: EnvMethod::Given,
            count: 4,
            tau: 0.5,
            k: 1,
            fit: EnvFitConfig::default(),
        }
    }
}

/// How the line graph over hyperedges is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineMode {
    Exact,
    Sampled,
    Bernoulli,
}

impl LineMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "exact" => Ok(LineMode::Exact),
            "sampled" => Ok(LineMode::Sampled),
            "bernoulli" => Ok(LineMode::Bernoulli),
            _ => Err(Error::Config(format!("unknown line mode {name:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LineMode::Exact => "exact",
            LineMode::Sampled => "sampled",
            LineMode::Bernoulli => "bernoulli",
        }
    }
}

/// Line-graph stage settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LineConfig {
    pub mode: LineMode,
    pub length: usize,
    pub repeats: usize,
    pub samples: usize,
}

impl Default for LineConfig {
    fn default() -> Self {
        LineConfig {
            mode: LineMode::Exact,
            length: 1,
            repeats: 500,
            samples: 1000,
        }
    }
}

/// Everything one reproducible run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataSource,
    pub env: EnvSelection,
    pub line: LineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
}

/// Typed, consuming view over a flat map; leftovers are reported as typos.
struct Keys {
    map: FlatConfig,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| Error::Config(format!("{key} must be a nonnegative integer"))),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64(key)?.map(|v| v as usize).unwrap_or(default))
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::Config(format!("{key} must be a number"))),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .as_bool()
                .ok_or_else(|| Error::Config(format!("{key} must be true or false"))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(Error::Config(format!("{key} must be a string"))),
        }
    }

    fn dims(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::Config(format!("{key} must list layer widths")))
                })
                .collect(),
            Some(_) => Err(Error::Config(format!("{key} must be an array"))),
        }
    }

    fn existing_path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        match self.string(key)? {
            None => Ok(None),
            Some(s) => {
                let p = PathBuf::from(s);
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{key} refers to missing file {}",
                        p.display()
                    )));
                }
                Ok(Some(p))
            }
        }
    }
}

impl RunConfig {
    /// Validate and type a flat key map. Every key must be recognized.
    pub fn from_flat(flat: &FlatConfig) -> Result<RunConfig> {
        let mut keys = Keys { map: flat.clone() };

        let seed = keys
            .u64("seed")?
            .ok_or_else(|| Error::Config("seed is required".into()))?;
        let output = PathBuf::from(keys.string("output")?.unwrap_or_else(|| "out".into()));

        let data = match keys
            .string("data.source")?
            .ok_or_else(|| Error::Config("data.source is required".into()))?
            .as_str()
        {
            "files" => {
                let edges = keys
                    .existing_path("data.edges")?
                    .ok_or_else(|| Error::Config("data.edges is required for files".into()))?;
                DataSource::Files {
                    edges,
                    features: keys.existing_path("data.features")?,
                    header: keys.bool("data.header", false)?,
                    hyperedges: keys.existing_path("data.hyperedges")?,
                }
            }
            "planted" => {
                let d = PlantedConfig::default();
                DataSource::Planted(PlantedConfig {
                    cliques: keys.usize("data.cliques", d.cliques)?,
                    clique_size: keys.usize("data.clique_size", d.clique_size)?,
                    inter_p: keys.f64("data.inter_p", d.inter_p)?,
                    noise: keys.f64("data.noise", d.noise)?,
                })
            }
            "karate" => DataSource::Karate,
            other => {
                return Err(Error::Config(format!(
                    "data.source must be files, planted, or karate, got {other:?}"
                )))
            }
        };

        let env_default = EnvSelection::default();
        let env = EnvSelection {
            method: match keys.string("env.method")? {
                Some(s) => EnvMethod::parse(&s)?,
                None => env_default.method,
            },
            count: keys.usize("env.count", env_default.count)?,
            tau: keys.f64("env.tau", env_default.tau)?,
            k: keys.usize("env.k", env_default.k)?,
            fit: EnvFitConfig {
                hidden: keys.usize("env.hidden", env_default.fit.hidden)?,
                neg_ratio: keys.usize("env.neg_ratio", env_default.fit.neg_ratio)?,
                epochs: keys.usize("env.epochs", env_default.fit.epochs)?,
                learning_rate: keys.f64("env.lr", env_default.fit.learning_rate)?,
            },
        };

        let line_default = LineConfig::default();
        let line = LineConfig {
            mode: match keys.string("line.mode")? {
                Some(s) => LineMode::parse(&s)?,
                None => line_default.mode,
            },
            length: keys.usize("line.length", line_default.length)?,
            repeats: keys.usize("line.repeats", line_default.repeats)?,
            samples: keys.usize("line.samples", line_default.samples)?,
        };

        let model_default = ModelConfig::default();
        let model = ModelConfig {
            hyper_dims: keys.dims("model.hyper_dims", &model_default.hyper_dims)?,
            pair_dims: keys.dims("model.pair_dims", &model_default.pair_dims)?,
            k_hops: keys.usize("model.k_hops", model_default.k_hops)?,
            gamma: keys.f64("model.gamma", model_default.gamma)?,
            activation: match keys.string("model.activation")? {
                Some(s) => Activation::parse(&s)?,
                None => model_default.activation,
            },
        };

        let train_default = TrainConfig::default();
        let train = TrainConfig {
            m_p: keys.f64("train.m_p", train_default.m_p)?,
            m_n: keys.f64("train.m_n", train_default.m_n)?,
            neg_ratio: keys.usize("train.neg_ratio", train_default.neg_ratio)?,
            epochs: keys.usize("train.epochs", train_default.epochs)?,
            learning_rate: keys.f64("train.lr", train_default.learning_rate)?,
            optimizer: match keys.string("train.optimizer")?.as_deref() {
                None => train_default.optimizer,
                Some("adam") => OptimizerKind::Adam,
                Some("sgd") => OptimizerKind::Sgd,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "train.optimizer must be adam or sgd, got {other:?}"
                    )))
                }
            },
            seed,
            mode: match keys.string("train.mode")?.as_deref() {
                None => train_default.mode,
                Some("pluggable") => TrainMode::Pluggable,
                Some("unpluggable") => TrainMode::Unpluggable,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "train.mode must be pluggable or unpluggable, got {other:?}"
                    )))
                }
            },
            task: match keys.string("train.task")?.as_deref() {
                None => None,
                Some("link_prediction") => Some(TaskKind::LinkPrediction),
                Some("rating_regression") => Some(TaskKind::RatingRegression),
                Some(other) => {
                    return Err(Error::Config(format!(
                        "train.task must be link_prediction or rating_regression, got {other:?}"
                    )))
                }
            },
            lambda: keys.f64("train.lambda", train_default.lambda)?,
            snapshot_every: keys.usize("train.snapshot_every", train_default.snapshot_every)?,
        };
        train.validate()?;

        let metrics_default = MetricConfig::default();
        let metrics = MetricConfig {
            rho: keys.f64("metrics.rho", metrics_default.rho)?,
            samples: keys.usize("metrics.samples", metrics_default.samples)?,
            entropy_mode: match keys.string("metrics.entropy_mode")?.as_deref() {
                None => metrics_default.entropy_mode,
                Some("sum") => EntropyMode::Sum,
                Some("mean") => EntropyMode::Mean,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "metrics.entropy_mode must be sum or mean, got {other:?}"
                    )))
                }
            },
        };

        if !keys.map.is_empty() {
            let unknown: Vec<&str> = keys.map.keys().map(String::as_str).collect();
            return Err(Error::Config(format!(
                "unknown config keys: {}",
                unknown.join(", ")
            )));
        }

        Ok(RunConfig {
            seed,
            output,
            data,
            env,
            line,
            model,
            train,
            metrics,
        })
    }

    /// Read a config file, apply overrides, and validate.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, Value)]) -> Result<(RunConfig, FlatConfig)> {
        let mut flat = load_flat(path)?;
        for (key, value) in overrides {
            flat.insert(key.clone(), value.clone());
        }
        let cfg = RunConfig::from_flat(&flat)?;
        Ok((cfg, flat))
    }
}

/// Parse a config file into its flat key map; nested objects are rejected.
pub fn load_flat(path: impl AsRef<Path>) -> Result<FlatConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Error::Config("config file must be a JSON object".into()));
    };
    let mut flat = FlatConfig::new();
    for (k, v) in map {
        if v.is_object() {
            return Err(Error::Config(format!(
                "key {k:?} holds an object; use dotted keys like \"{k}.field\""
            )));
        }
        flat.insert(k, v);
    }
    Ok(flat)
}

/// Parse a `key=value` override; the value is JSON when it parses, otherwise
/// a bare string (so `data.source=karate` works without quoting).
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Hex SHA-256 over the semantic config entries. The output directory does
/// not affect results, so it is excluded; everything else participates.
pub fn config_hash(flat: &FlatConfig) -> String {
    let mut semantic = flat.clone();
    semantic.remove("output");
    let canonical = serde_json::to_string(&semantic).expect("flat map serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flat(pairs: &[(&str, Value)]) -> FlatConfig {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let map = flat(&[("seed", json!(7)), ("data.source", json!("karate"))]);
        let cfg = RunConfig::from_flat(&map).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.output, PathBuf::from("out"));
        assert_eq!(cfg.data, DataSource::Karate);
        assert_eq!(cfg.env.method, EnvMethod::Given);
        assert_eq!(cfg.line.mode, LineMode::Exact);
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.metrics, MetricConfig::default());
    }

    #[test]
    fn missing_seed_is_rejected() {
        let map = flat(&[("data.source", json!("karate"))]);
        let err = RunConfig::from_flat(&map).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let map = flat(&[
            ("seed", json!(1)),
            ("data.source", json!("karate")),
            ("train.lerning_rate", json!(0.1)),
        ]);
        let err = RunConfig::from_flat(&map).unwrap_err();
        assert!(err.to_string().contains("train.lerning_rate"));
    }

    #[test]
    fn typed_keys_reject_wrong_shapes() {
        let map = flat(&[("seed", json!("one")), ("data.source", json!("karate"))]);
        assert!(RunConfig::from_flat(&map).unwrap_err().to_string().contains("seed"));

        let map = flat(&[
            ("seed", json!(1)),
            ("data.source", json!("karate")),
            ("model.hyper_dims", json!([16, "x"])),
        ]);
        assert!(RunConfig::from_flat(&map).is_err());

        let map = flat(&[
            ("seed", json!(1)),
            ("data.source", json!("karate")),
            ("env.method", json!("voronoi")),
        ]);
        assert!(RunConfig::from_flat(&map).is_err());
    }

    #[test]
    fn planted_and_train_keys_land_in_place() {
        let map = flat(&[
            ("seed", json!(3)),
            ("data.source", json!("planted")),
            ("data.cliques", json!(3)),
            ("data.inter_p", json!(0.2)),
            ("train.mode", json!("unpluggable")),
            ("train.task", json!("link_prediction")),
            ("train.lambda", json!(0.5)),
            ("model.hyper_dims", json!([8, 4])),
            ("metrics.entropy_mode", json!("mean")),
        ]);
        let cfg = RunConfig::from_flat(&map).unwrap();
        match cfg.data {
            DataSource::Planted(p) => {
                assert_eq!(p.cliques, 3);
                assert_eq!(p.inter_p, 0.2);
                assert_eq!(p.clique_size, 8);
            }
            other => panic!("wrong source {other:?}"),
        }
        assert_eq!(cfg.train.mode, TrainMode::Unpluggable);
        assert_eq!(cfg.train.task, Some(TaskKind::LinkPrediction));
        assert_eq!(cfg.train.lambda, 0.5);
        assert_eq!(cfg.model.hyper_dims, vec![8, 4]);
        assert_eq!(cfg.metrics.entropy_mode, EntropyMode::Mean);
    }

    #[test]
    fn missing_paths_fail_at_load() {
        let map = flat(&[
            ("seed", json!(1)),
            ("data.source", json!("files")),
            ("data.edges", json!("/nonexistent/edges.tsv")),
        ]);
        let err = RunConfig::from_flat(&map).unwrap_err();
        assert!(err.to_string().contains("missing file"));
    }

    #[test]
    fn overrides_parse_json_then_fall_back_to_strings() {
        assert_eq!(parse_override("train.lr=0.05").unwrap().1, json!(0.05));
        assert_eq!(
            parse_override("data.source=karate").unwrap().1,
            json!("karate")
        );
        assert_eq!(
            parse_override("model.hyper_dims=[8,4]").unwrap().1,
            json!([8, 4])
        );
        assert!(parse_override("no-equals-sign").is_err());
    }

    #[test]
    fn file_load_applies_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(
            &p,
            r#"{"seed": 1, "data.source": "karate", "train.epochs": 50}"#,
        )
        .unwrap();
        let (cfg, flat) =
            RunConfig::load(&p, &[("train.epochs".into(), json!(10))]).unwrap();
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(flat["train.epochs"], json!(10));

        std::fs::write(&p, r#"{"seed": 1, "train": {"epochs": 5}}"#).unwrap();
        assert!(RunConfig::load(&p, &[]).is_err());
    }

    #[test]
    fn hash_tracks_semantics_not_output() {
        let base = flat(&[
            ("seed", json!(1)),
            ("data.source", json!("karate")),
            ("output", json!("a")),
        ]);
        let mut other_output = base.clone();
        other_output.insert("output".into(), json!("b"));
        assert_eq!(config_hash(&base), config_hash(&other_output));

        let mut other_seed = base.clone();
        other_seed.insert("seed".into(), json!(2));
        assert_ne!(config_hash(&base), config_hash(&other_seed));

        let mut extra = base.clone();
        extra.insert("train.lr".into(), json!(0.02));
        assert_ne!(config_hash(&base), config_hash(&extra));
        assert_eq!(config_hash(&base).len(), 64);
    }
}
