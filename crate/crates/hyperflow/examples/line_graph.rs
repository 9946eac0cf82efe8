//! Build the co-membership line graph of a hypergraph two ways — exact
//! intersection and random-walk sampling — and compare walk frequencies
//! against the closed-form one-step distribution.

use std::collections::BTreeSet;

use ndarray::Array2;

use hyperflow::config::{LineConfig, LineMode};
use hyperflow::graph::Hypergraph;
use hyperflow::linegraph::{one_step_pair_distribution, random_walk_multiset};
use hyperflow::pipeline::build_line_graph;

fn main() -> hyperflow::Result<()> {
    // five committees sharing members
    let committees: Vec<BTreeSet<usize>> = vec![
        [0, 1, 2, 3].into(),
        [3, 4, 5].into(),
        [5, 6, 7, 8].into(),
        [0, 8].into(),
        [2, 3, 4].into(),
    ];
    let g = Hypergraph::new(Array2::zeros((9, 1)), committees, [])?;

    let exact = build_line_graph(&g, &LineConfig::default(), 0)?;
    println!(
        "exact line graph: {} committees, {} overlaps",
        exact.node_count(),
        exact.edges().len()
    );
    for &(a, b) in exact.edges() {
        println!("  committees {a} and {b} share a member");
    }

    let sampled_cfg = LineConfig {
        mode: LineMode::Sampled,
        length: 2,
        repeats: 400,
        ..LineConfig::default()
    };
    let sampled = build_line_graph(&g, &sampled_cfg, 0)?;
    println!(
        "\nsampled line graph (walk length 2, 400 repeats): {} overlaps",
        sampled.edges().len()
    );

    // walk frequencies converge on the enumerated one-step distribution
    let walks = random_walk_multiset(&g, 1, 2000, 0);
    let oracle = one_step_pair_distribution(&g);
    let total = walks.total() as f64;
    println!("\npair     sampled  exact");
    for (pair, mass) in &oracle {
        let freq = walks.pair_counts().get(pair).copied().unwrap_or(0) as f64 / total;
        println!("({}, {})   {freq:.3}    {mass:.3}", pair.0, pair.1);
    }
    Ok(())
}
