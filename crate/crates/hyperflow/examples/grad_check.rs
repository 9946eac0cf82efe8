//! Compare analytic gradients against central finite differences on a small
//! random instance, skipping coordinates that straddle a hinge kink.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use hyperflow::config::LineConfig;
use hyperflow::graph::{build_incidence, Hypergraph};
use hyperflow::model::{forward, Activation, ModelConfig, ModelParams, Operators};
use hyperflow::pipeline::build_line_graph;
use hyperflow::train::{
    dual_contrastive_loss, gradients, hinge_activity, sample_pairs, TrainConfig,
};

fn main() -> hyperflow::Result<()> {
    let (nodes, dim, seed) = (8usize, 4usize, 1u64);
    let mut r = hyperflow::rng::stream(seed, "example.gradcheck");
    let normal = Normal::new(0.0, 1.0).unwrap();
    let features = Array2::from_shape_fn((nodes, dim), |_| normal.sample(&mut r));
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            if r.gen::<f64>() < 0.4 {
                edges.push((u, v));
            }
        }
    }
    let sets: Vec<BTreeSet<usize>> = vec![
        (0..4).collect(),
        (3..7).collect(),
        [1, 5, 7].into(),
    ];
    let g = Hypergraph::new(features, sets, edges)?;

    let inc = build_incidence(&g)?;
    let lg = build_line_graph(&g, &LineConfig::default(), seed)?;
    let mcfg = ModelConfig {
        hyper_dims: vec![3],
        pair_dims: vec![3],
        activation: Activation::Sigmoid,
        ..ModelConfig::default()
    };
    let tcfg = TrainConfig {
        neg_ratio: 2,
        ..TrainConfig::default()
    };
    let params = ModelParams::init(&mcfg, dim, seed)?;
    let batch = sample_pairs(&g, tcfg.neg_ratio, seed)?;
    let ops = Operators::build(&g, &inc, &lg, mcfg.k_hops, mcfg.gamma)?;
    let analytic = gradients(&params, &g, &ops, &batch, &tcfg)?;

    let loss_at = |p: &ModelParams| {
        let set = forward(&g, &ops, p).unwrap();
        (
            dual_contrastive_loss(g.features(), &set.x_hat, &batch, tcfg.m_p, tcfg.m_n),
            hinge_activity(g.features(), &set.x_hat, &batch, tcfg.m_p, tcfg.m_n),
        )
    };
    let f0 = loss_at(&params).0;
    let atol = 1e-6 * (1.0 + f0.abs());
    let eps = 1e-5;

    println!("loss at the probe point: {f0:.6}\n");
    println!("matrix            coords  skipped  worst rel err");
    let mut worst_overall: f64 = 0.0;
    for (mi, (name, mat)) in params.named_matrices().iter().enumerate() {
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        for row in 0..mat.nrows() {
            for col in 0..mat.ncols() {
                let mut plus = params.clone();
                plus.matrices_mut()[mi][[row, col]] += eps;
                let mut minus = params.clone();
                minus.matrices_mut()[mi][[row, col]] -= eps;
                let (fp, ap) = loss_at(&plus);
                let (fm, am) = loss_at(&minus);
                if ap != am {
                    skipped += 1; // the step crosses a kink: no slope to compare
                    continue;
                }
                let fd = (fp - fm) / (2.0 * eps);
                let an = analytic[mi][[row, col]];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(atol);
                worst = worst.max(rel);
            }
        }
        println!(
            "{name:<17} {:>6} {:>8}  {worst:.3e}",
            mat.nrows() * mat.ncols() - skipped,
            skipped
        );
        worst_overall = worst_overall.max(worst);
    }
    println!("\nworst relative error overall: {worst_overall:.3e}");
    Ok(())
}
