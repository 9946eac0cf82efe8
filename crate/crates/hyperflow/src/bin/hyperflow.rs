//! Command-line front end: each pipeline stage as a subcommand, driven by a
//! flat JSON config. Exit codes: 0 ok, 2 config error, 3 data error,
//! 4 numeric failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use hyperflow::config::{parse_override, FlatConfig, RunConfig};
use hyperflow::data::{save_edges, save_hyperedges};
use hyperflow::graph::{build_incidence, Hypergraph};
use hyperflow::metrics::metric_report;
use hyperflow::model::{
    forward, Activation, ModelConfig, ModelParams, Operators,
};
use hyperflow::pipeline::{
    build_line_graph, load_checkpoint, load_embeddings, load_graph, resolve_environments,
    run_pipeline, save_checkpoint, save_embeddings, save_loss_history, task_data_for,
};
use hyperflow::train::{
    dual_contrastive_loss, gradients, hinge_activity, kink_margin, link_auc,
    sample_eval_negatives, sample_pairs, split_edges, train, train_with_task, TrainConfig,
};
use hyperflow::{Error, Result};

#[derive(Parser)]
#[command(name = "hyperflow", version, about = "Hypergraph representation learning runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON config file
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. --set train.lr=0.05 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(RunConfig, FlatConfig)> {
        let overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        RunConfig::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Construct social environments and write them as a hyperedge file
    Envs(ConfigArgs),
    /// Build the hyperedge co-occurrence graph and write its edge list
    Linegraph(ConfigArgs),
    /// Train the encoder; writes loss.csv and checkpoint.bin
    Train(ConfigArgs),
    /// Export embeddings from a trained checkpoint
    Embed {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write the branch and line-graph embeddings
        #[arg(long)]
        all: bool,
    },
    /// Score exported embeddings on the sociological criteria
    Metrics(ConfigArgs),
    /// Hold out edges and report link-prediction AUC for exported embeddings
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Fraction of edges to hold out
        #[arg(long, default_value_t = 0.2)]
        held_out: f64,
        /// Negatives sampled per held-out edge
        #[arg(long, default_value_t = 10)]
        negatives: usize,
    },
    /// Run every stage end to end and write a manifest
    Run(ConfigArgs),
    /// Compare analytic gradients against central finite differences
    GradCheck {
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        hyperedges: usize,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::InvalidGraph(_) | Error::Data { .. } | Error::Io(_) | Error::Json(_) => 3,
        Error::Numeric(_) | Error::Diverged { .. } => 4,
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("HYPERFLOW_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Envs(args) => cmd_envs(&args.load()?.0),
        Command::Linegraph(args) => cmd_linegraph(&args.load()?.0),
        Command::Train(args) => cmd_train(&args.load()?.0),
        Command::Embed { config, all } => cmd_embed(&config.load()?.0, all),
        Command::Metrics(args) => cmd_metrics(&args.load()?.0),
        Command::Eval {
            config,
            held_out,
            negatives,
        } => cmd_eval(&config.load()?.0, held_out, negatives),
        Command::Run(args) => {
            let (cfg, flat) = args.load()?;
            let manifest = run_pipeline(&cfg, &flat)?;
            for timing in &manifest.stages {
                println!("{:<10} {:.3}s", timing.name, timing.seconds);
            }
            println!(
                "wrote {} artifacts to {} (config {})",
                manifest.artifacts.len(),
                cfg.output.display(),
                &manifest.config_hash[..12]
            );
            Ok(())
        }
        Command::GradCheck {
            nodes,
            dim,
            hyperedges,
            points,
            seed,
            tolerance,
        } => cmd_grad_check(nodes, dim, hyperedges, points, seed, tolerance),
    }
}

/// Data + env stages, shared by the stage subcommands.
fn prepared(cfg: &RunConfig) -> Result<Hypergraph> {
    let loaded = load_graph(&cfg.data, cfg.seed)?;
    resolve_environments(loaded.graph, &cfg.env, cfg.seed)
}

fn cmd_envs(cfg: &RunConfig) -> Result<()> {
    let g = prepared(cfg)?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("hyperedges.txt");
    save_hyperedges(&path, g.hyperedges())?;
    println!(
        "{} environments over {} nodes -> {}",
        g.hyperedge_count(),
        g.node_count(),
        path.display()
    );
    Ok(())
}

fn cmd_linegraph(cfg: &RunConfig) -> Result<()> {
    let g = prepared(cfg)?;
    let lg = build_line_graph(&g, &cfg.line, cfg.seed)?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("line_edges.tsv");
    let edges: Vec<(usize, usize)> = lg.edges().iter().copied().collect();
    save_edges(&path, &edges)?;
    println!(
        "line graph: {} hyperedges, {} co-occurrence edges -> {}",
        lg.node_count(),
        lg.edge_count(),
        path.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let loaded = load_graph(&cfg.data, cfg.seed)?;
    let task_data = task_data_for(cfg, &loaded)?;
    let g = resolve_environments(loaded.graph, &cfg.env, cfg.seed)?;
    let inc = build_incidence(&g)?;
    let lg = build_line_graph(&g, &cfg.line, cfg.seed)?;
    let outcome = match &task_data {
        Some(data) => train_with_task(&g, &inc, &lg, &cfg.train, &cfg.model, data)?,
        None => train(&g, &inc, &lg, &cfg.train, &cfg.model)?,
    };
    fs::create_dir_all(&cfg.output)?;
    save_loss_history(cfg.output.join("loss.csv"), &outcome.history)?;
    save_checkpoint(cfg.output.join("checkpoint.bin"), &outcome.params)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} epochs, final loss {:.6} -> {}",
        outcome.history.len(),
        last.loss,
        cfg.output.join("checkpoint.bin").display()
    );
    Ok(())
}

fn cmd_embed(cfg: &RunConfig, all: bool) -> Result<()> {
    let g = prepared(cfg)?;
    let inc = build_incidence(&g)?;
    let lg = build_line_graph(&g, &cfg.line, cfg.seed)?;
    let params = load_checkpoint(cfg.output.join("checkpoint.bin"))?;
    let ops = Operators::build(&g, &inc, &lg, params.k_hops, params.gamma)?;
    let set = forward(&g, &ops, &params)?;
    save_embeddings(cfg.output.join("embeddings.csv"), &set.r_encode)?;
    if all {
        save_embeddings(cfg.output.join("embeddings_hyper.csv"), &set.r_h)?;
        save_embeddings(cfg.output.join("embeddings_pair.csv"), &set.r_p)?;
        save_embeddings(cfg.output.join("embeddings_line.csv"), &set.r_star)?;
    }
    println!(
        "{}x{} embeddings -> {}",
        set.r_encode.nrows(),
        set.r_encode.ncols(),
        cfg.output.join("embeddings.csv").display()
    );
    Ok(())
}

fn cmd_metrics(cfg: &RunConfig) -> Result<()> {
    let g = prepared(cfg)?;
    let embeddings = load_embeddings(cfg.output.join("embeddings.csv"))?;
    if embeddings.nrows() != g.node_count() {
        return Err(Error::InvalidGraph(format!(
            "{} embedding rows for {} nodes",
            embeddings.nrows(),
            g.node_count()
        )));
    }
    let report = metric_report(&g, &embeddings, &[], &cfg.metrics, cfg.seed)?;
    fs::write(
        cfg.output.join("metrics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    let entropy_sum: f64 = report.group_entropies.values().sum();
    println!(
        "conformity {:.4}, equivalence {}, total group entropy {:.4} -> {}",
        report.conformity,
        match report.equivalence.as_finite() {
            Some(v) => format!("{v:.4}"),
            None => "infinite".to_string(),
        },
        entropy_sum,
        cfg.output.join("metrics.json").display()
    );
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, held_out: f64, negatives: usize) -> Result<()> {
    if !(0.0..1.0).contains(&held_out) {
        return Err(Error::Config(format!(
            "held-out fraction {held_out} outside [0, 1)"
        )));
    }
    if negatives == 0 {
        return Err(Error::Config("need at least one negative per positive".into()));
    }
    let loaded = load_graph(&cfg.data, cfg.seed)?;
    let g = loaded.graph;
    let embeddings = load_embeddings(cfg.output.join("embeddings.csv"))?;
    if embeddings.nrows() != g.node_count() {
        return Err(Error::InvalidGraph(format!(
            "{} embedding rows for {} nodes",
            embeddings.nrows(),
            g.node_count()
        )));
    }
    let edges: Vec<(usize, usize)> = g.pairwise_edges().iter().copied().collect();
    let (_, held) = split_edges(&edges, held_out, cfg.seed);
    let negs = sample_eval_negatives(
        g.node_count(),
        g.pairwise_edges(),
        held.len(),
        negatives,
        cfg.seed,
    );
    let auc = link_auc(&embeddings, &held, &negs);
    fs::write(
        cfg.output.join("eval.json"),
        serde_json::to_string_pretty(&json!({
            "auc": auc,
            "held_out_edges": held.len(),
            "negatives": negs.len(),
        }))?,
    )?;
    println!(
        "link AUC {:.4} ({} held-out positives, {} negatives)",
        auc,
        held.len(),
        negs.len()
    );
    Ok(())
}

fn cmd_grad_check(
    nodes: usize,
    dim: usize,
    hyperedges: usize,
    points: usize,
    seed: u64,
    tolerance: f64,
) -> Result<()> {
    if nodes < 4 || dim < 1 || hyperedges < 1 || points < 1 {
        return Err(Error::Config(
            "grad-check needs nodes >= 4, dim >= 1, hyperedges >= 1, points >= 1".into(),
        ));
    }
    let g = random_instance(nodes, dim, hyperedges, seed)?;
    let inc = build_incidence(&g)?;
    let lg = build_line_graph(&g, &Default::default(), seed)?;
    let train_cfg = TrainConfig {
        neg_ratio: 2,
        ..TrainConfig::default()
    };
    // sigmoid keeps the loss surface smooth at the probe points
    let model_cfg = ModelConfig {
        hyper_dims: vec![4, 3],
        pair_dims: vec![3],
        activation: Activation::Sigmoid,
        ..ModelConfig::default()
    };

    let ops = {
        let probe = ModelParams::init(&model_cfg, dim, seed)?;
        Operators::build(&g, &inc, &lg, probe.k_hops, probe.gamma)?
    };
    let mut worst_overall: f64 = 0.0;
    for point in 0..points {
        // reject probe points sitting within reach of a hinge kink, where a
        // two-sided difference measures the wrong one-sided slope
        let mut salt = 0u64;
        let (params, batch) = loop {
            let point_seed = seed.wrapping_add(point as u64).wrapping_add(salt * 7919);
            let params = ModelParams::init(&model_cfg, dim, point_seed)?;
            let batch = sample_pairs(&g, train_cfg.neg_ratio, point_seed)?;
            let set = forward(&g, &ops, &params)?;
            if kink_margin(g.features(), &set.x_hat, &batch, train_cfg.m_p, train_cfg.m_n) > 1e-3 {
                break (params, batch);
            }
            salt += 1;
            if salt > 200 {
                return Err(Error::Numeric(
                    "could not find a probe point away from the loss kinks".into(),
                ));
            }
        };
        let analytic = gradients(&params, &g, &ops, &batch, &train_cfg)?;

        let eps = 1e-5;
        // floor for the relative error: rounding noise in the central
        // difference scales with the loss magnitude, not with the gradient
        let base = forward(&g, &ops, &params)?;
        let f0 = dual_contrastive_loss(
            g.features(),
            &base.x_hat,
            &batch,
            train_cfg.m_p,
            train_cfg.m_n,
        );
        let atol = 1e-6 * (1.0 + f0.abs());
        let loss_at = |p: &ModelParams| -> Result<(f64, Vec<bool>)> {
            let set = forward(&g, &ops, p)?;
            let loss = dual_contrastive_loss(
                g.features(),
                &set.x_hat,
                &batch,
                train_cfg.m_p,
                train_cfg.m_n,
            );
            let active =
                hinge_activity(g.features(), &set.x_hat, &batch, train_cfg.m_p, train_cfg.m_n);
            Ok((loss, active))
        };
        let mut worst: f64 = 0.0;
        let mut worst_at: Option<(String, usize, usize, f64, f64)> = None;
        let mut skipped = 0usize;
        let mut checked = 0usize;
        for (mi, (name, mat)) in params.named_matrices().iter().enumerate() {
            for r in 0..mat.nrows() {
                for c in 0..mat.ncols() {
                    let mut plus = params.clone();
                    plus.matrices_mut()[mi][[r, c]] += eps;
                    let mut minus = params.clone();
                    minus.matrices_mut()[mi][[r, c]] -= eps;
                    let (fp, ap) = loss_at(&plus)?;
                    let (fm, am) = loss_at(&minus)?;
                    if ap != am {
                        // the ±ε step flips a hinge: no derivative to compare
                        skipped += 1;
                        continue;
                    }
                    checked += 1;
                    let fd = (fp - fm) / (2.0 * eps);
                    let an = analytic[mi][[r, c]];
                    let denom = an.abs().max(fd.abs()).max(atol);
                    let rel = (an - fd).abs() / denom;
                    if rel > worst {
                        worst = rel;
                        worst_at = Some((name.clone(), r, c, an, fd));
                    }
                }
            }
        }
        if worst >= tolerance {
            if let Some((name, r, c, an, fd)) = &worst_at {
                println!(
                    "point {point}: worst at {name}[{r},{c}]: analytic {an:.9e} vs fd {fd:.9e}"
                );
            }
        }
        if checked == 0 {
            return Err(Error::Numeric(format!(
                "point {point}: every coordinate straddles a kink"
            )));
        }
        if skipped > 0 {
            println!(
                "point {point}: max relative error {worst:.3e} ({skipped} kink-straddling coordinates skipped)"
            );
        } else {
            println!("point {point}: max relative error {worst:.3e}");
        }
        worst_overall = worst_overall.max(worst);
    }

    if worst_overall < tolerance {
        println!("gradient check passed: max relative error {worst_overall:.3e} < {tolerance:e}");
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: max relative error {worst_overall:.3e} >= {tolerance:e}"
        )))
    }
}

/// A random connected-enough instance for probing gradients.
fn random_instance(nodes: usize, dim: usize, hyperedges: usize, seed: u64) -> Result<Hypergraph> {
    let mut r = hyperflow::rng::stream(seed, "cli.gradcheck");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let features = Array2::from_shape_fn((nodes, dim), |_| normal.sample(&mut r));

    // pairwise edges: ~30% density, never complete so negatives exist
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            if (u, v) == (0, 1) || r.gen::<f64>() < 0.3 {
                edges.push((u, v));
            }
        }
    }
    edges.truncate(nodes * (nodes - 1) / 2 - nodes);

    // hyperedges: random subsets of 2..=4 members
    let sets = (0..hyperedges)
        .map(|_| {
            let size = r.gen_range(2..=4.min(nodes));
            let mut members = std::collections::BTreeSet::new();
            while members.len() < size {
                members.insert(r.gen_range(0..nodes));
            }
            members
        })
        .collect();
    Hypergraph::new(features, sets, edges)
}
