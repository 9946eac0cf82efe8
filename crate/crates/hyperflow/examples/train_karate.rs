//! Self-supervised embeddings for the karate club, using 1-hop social
//! circles as environments.

use hyperflow::config::{EnvMethod, EnvSelection, LineConfig};
use hyperflow::data::karate_club;
use hyperflow::graph::build_incidence;
use hyperflow::model::ModelConfig;
use hyperflow::pipeline::{build_line_graph, resolve_environments};
use hyperflow::train::{moving_average_loss, train, TrainConfig};

fn main() -> hyperflow::Result<()> {
    let env = EnvSelection {
        method: EnvMethod::KHop,
        k: 1,
        ..EnvSelection::default()
    };
    let g = resolve_environments(karate_club(), &env, 0)?;
    println!(
        "karate club: {} members, {} friendships, {} social circles",
        g.node_count(),
        g.pairwise_edges().len(),
        g.hyperedge_count()
    );

    let inc = build_incidence(&g)?;
    let lg = build_line_graph(&g, &LineConfig::default(), 0)?;
    let out = train(&g, &inc, &lg, &TrainConfig::default(), &ModelConfig::default())?;

    println!("\nepoch      loss");
    for record in out.history.iter().step_by(20) {
        println!("{:>5} {:>12.2}", record.epoch, record.loss);
    }
    let early = moving_average_loss(&out.history, 10, 10);
    let late = moving_average_loss(&out.history, out.history.len(), 10);
    println!(
        "\n10-epoch moving average: {early:.2} at epoch 10, {late:.2} at the end ({:.1}% of start)",
        100.0 * late / early
    );
    println!(
        "embedding shape: {} members x {} dimensions",
        g.node_count(),
        out.params.encode_dim()
    );
    Ok(())
}
