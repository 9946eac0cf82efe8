//! Hypergraph representation learning for social influence analysis.
//!
//! `hyperflow` builds social-environment hypergraphs from attributed pairwise
//! graphs, derives their line graphs with a fast random-walk estimator, trains
//! user embeddings with a dual-contrastive reconstruction objective, and
//! quantifies sociological criteria (conformity, equivalence, evolving,
//! polarization) on the learned representations.
//!
//! The `examples/` directory contains one runnable example per capability:
//!
//! ```bash
//! cargo run --example environment_awareness
//! cargo run --example line_graph
//! cargo run --example train_karate
//! cargo run --example social_metrics
//! cargo run --example link_prediction
//! cargo run --example grad_check
//! cargo run --example full_pipeline
//! ```
//!
//! A thin CLI (`cargo run --bin hyperflow -- <subcommand>`) drives the same
//! stages from a JSON config for reproducible runs.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod graph;
pub mod linegraph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sparse;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Hypergraph, IncidenceMatrix, LineGraph};
