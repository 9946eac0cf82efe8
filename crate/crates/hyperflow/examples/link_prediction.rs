//! Hold out a fifth of the karate club's friendships, train jointly with a
//! link-scoring head, and rank the held-out pairs against sampled non-edges.

use hyperflow::config::{EnvMethod, EnvSelection, LineConfig};
use hyperflow::data::karate_club;
use hyperflow::graph::{build_incidence, Hypergraph};
use hyperflow::model::{forward, ModelConfig, Operators};
use hyperflow::pipeline::{build_line_graph, resolve_environments};
use hyperflow::train::{
    link_auc, sample_eval_negatives, split_edges, train_with_task, TaskData, TaskKind,
    TrainConfig, TrainMode,
};

fn main() -> hyperflow::Result<()> {
    let seed = 0;
    let full = karate_club();
    let edges: Vec<(usize, usize)> = full.pairwise_edges().iter().copied().collect();
    let (observed, held_out) = split_edges(&edges, 0.2, seed);
    println!(
        "karate club: {} friendships observed, {} held out",
        observed.len(),
        held_out.len()
    );

    // rebuild the graph without the held-out links, then derive environments
    let masked = Hypergraph::new(full.features().clone(), vec![], observed.clone())?;
    let env = EnvSelection {
        method: EnvMethod::KHop,
        k: 1,
        ..EnvSelection::default()
    };
    let masked = resolve_environments(masked, &env, seed)?;
    let inc = build_incidence(&masked)?;
    let lg = build_line_graph(&masked, &LineConfig::default(), seed)?;

    let cfg = TrainConfig {
        mode: TrainMode::Unpluggable,
        task: Some(TaskKind::LinkPrediction),
        seed,
        ..TrainConfig::default()
    };
    let mcfg = ModelConfig::default();
    let out = train_with_task(
        &masked,
        &inc,
        &lg,
        &cfg,
        &mcfg,
        &TaskData::LinkPrediction { edges: observed },
    )?;
    println!(
        "trained {} epochs, final loss {:.2}",
        out.history.len(),
        out.history.last().unwrap().loss
    );

    let ops = Operators::build(&masked, &inc, &lg, mcfg.k_hops, mcfg.gamma)?;
    let set = forward(&masked, &ops, &out.params)?;
    let negatives = sample_eval_negatives(
        full.node_count(),
        full.pairwise_edges(),
        held_out.len(),
        10,
        seed,
    );
    let auc = link_auc(&set.r_encode, &held_out, &negatives);
    println!(
        "AUC over {} held-out pairs vs {} non-edges: {auc:.3}",
        held_out.len(),
        negatives.len()
    );
    Ok(())
}
