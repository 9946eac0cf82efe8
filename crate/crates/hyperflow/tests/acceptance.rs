//! End-to-end checks of the library's headline guarantees: analytic gradients,
//! walk-sampling fidelity, influence-operator algebra, training convergence,
//! recovery of planted social structure, link ranking, and bitwise
//! reproducibility of full runs.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use hyperflow::config::{EnvMethod, EnvSelection, LineConfig};
use hyperflow::data::{generate_planted, karate_club, PlantedConfig};
use hyperflow::env::{extract_hyperedges, fit_membership, EnvFitConfig};
use hyperflow::graph::{build_incidence, Hypergraph, LineGraph};
use hyperflow::linegraph::{one_step_pair_distribution, random_walk_multiset};
use hyperflow::metrics::{equivalence, group_entropy, EntropyMode, Equivalence};
use hyperflow::model::{
    forward, theta, Activation, ModelConfig, ModelParams, Operators,
};
use hyperflow::pipeline::{build_line_graph, resolve_environments};
use hyperflow::train::{
    dual_contrastive_loss, gradients, hinge_activity, kink_margin, link_auc,
    moving_average_loss, sample_eval_negatives, sample_pairs, split_edges, train,
    train_with_task, TaskData, TaskKind, TrainConfig, TrainMode,
};

/// A random attributed hypergraph with ~30% edge density and small hyperedges,
/// mirroring the CLI's gradient-probe instance.
fn random_instance(nodes: usize, dim: usize, hyperedges: usize, seed: u64) -> Hypergraph {
    let mut r = hyperflow::rng::stream(seed, "cli.gradcheck");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let features = Array2::from_shape_fn((nodes, dim), |_| normal.sample(&mut r));

    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            if (u, v) == (0, 1) || r.gen::<f64>() < 0.3 {
                edges.push((u, v));
            }
        }
    }
    edges.truncate(nodes * (nodes - 1) / 2 - nodes);

    let sets: Vec<BTreeSet<usize>> = (0..hyperedges)
        .map(|_| {
            let size = r.gen_range(2..=4.min(nodes));
            let mut members = BTreeSet::new();
            while members.len() < size {
                members.insert(r.gen_range(0..nodes));
            }
            members
        })
        .collect();
    Hypergraph::new(features, sets, edges).expect("random instance is valid")
}

#[test]
fn gradients_match_central_differences_at_random_points() {
    let started = Instant::now();
    let (nodes, dim, hyperedges, points, seed) = (12usize, 5usize, 3usize, 20usize, 0u64);
    let tolerance = 1e-4;

    let g = random_instance(nodes, dim, hyperedges, seed);
    let inc = build_incidence(&g).unwrap();
    let lg = build_line_graph(&g, &LineConfig::default(), seed).unwrap();
    let train_cfg = TrainConfig {
        neg_ratio: 2,
        ..TrainConfig::default()
    };
    let model_cfg = ModelConfig {
        hyper_dims: vec![4, 3],
        pair_dims: vec![3],
        activation: Activation::Sigmoid,
        ..ModelConfig::default()
    };
    let ops = Operators::build(&g, &inc, &lg, model_cfg.k_hops, model_cfg.gamma).unwrap();

    let mut worst_overall: f64 = 0.0;
    for point in 0..points {
        // probe points sitting within ε of a hinge boundary measure a
        // one-sided slope; reseed until the whole batch clears the kinks
        let mut salt = 0u64;
        let (params, batch) = loop {
            let point_seed = seed.wrapping_add(point as u64).wrapping_add(salt * 7919);
            let params = ModelParams::init(&model_cfg, dim, point_seed).unwrap();
            let batch = sample_pairs(&g, train_cfg.neg_ratio, point_seed).unwrap();
            let set = forward(&g, &ops, &params).unwrap();
            if kink_margin(g.features(), &set.x_hat, &batch, train_cfg.m_p, train_cfg.m_n) > 1e-3
            {
                break (params, batch);
            }
            salt += 1;
            assert!(salt <= 200, "[FAIL] no probe point clear of loss kinks");
        };
        let analytic = gradients(&params, &g, &ops, &batch, &train_cfg).unwrap();

        let eps = 1e-5;
        let loss_at = |p: &ModelParams| {
            let set = forward(&g, &ops, p).unwrap();
            let loss =
                dual_contrastive_loss(g.features(), &set.x_hat, &batch, train_cfg.m_p, train_cfg.m_n);
            let active =
                hinge_activity(g.features(), &set.x_hat, &batch, train_cfg.m_p, train_cfg.m_n);
            (loss, active)
        };
        // central-difference rounding noise scales with the loss magnitude
        let f0 = loss_at(&params).0;
        let atol = 1e-6 * (1.0 + f0.abs());

        let mut checked = 0usize;
        for (mi, (_, mat)) in params.named_matrices().iter().enumerate() {
            for r in 0..mat.nrows() {
                for c in 0..mat.ncols() {
                    let mut plus = params.clone();
                    plus.matrices_mut()[mi][[r, c]] += eps;
                    let mut minus = params.clone();
                    minus.matrices_mut()[mi][[r, c]] -= eps;
                    let (fp, ap) = loss_at(&plus);
                    let (fm, am) = loss_at(&minus);
                    if ap != am {
                        continue; // the ±ε step flips a hinge
                    }
                    checked += 1;
                    let fd = (fp - fm) / (2.0 * eps);
                    let an = analytic[mi][[r, c]];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(atol);
                    worst_overall = worst_overall.max(rel);
                }
            }
        }
        assert!(checked > 0, "[FAIL] point {point}: every coordinate straddles a kink");
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        worst_overall < tolerance,
        "[FAIL] gradient check: max relative error {worst_overall:.3e} >= {tolerance:e}"
    );
    assert!(elapsed < 30.0, "[FAIL] gradient check took {elapsed:.1}s (budget 30s)");
    println!(
        "[PASS] gradient check: max relative error {worst_overall:.3e} < {tolerance:e} over {points} points ({elapsed:.1}s)"
    );
}

/// Fixed overlapping-hyperedge fixtures, none larger than 6 sets of 5 members.
fn walk_fixtures() -> Vec<(&'static str, Hypergraph)> {
    let build = |nodes: usize, sets: &[&[usize]]| {
        let hyperedges: Vec<BTreeSet<usize>> =
            sets.iter().map(|s| s.iter().copied().collect()).collect();
        Hypergraph::new(Array2::zeros((nodes, 1)), hyperedges, []).expect("fixture is valid")
    };
    vec![
        ("pair overlap", build(3, &[&[0, 1], &[1, 2]])),
        ("sliding triples", build(5, &[&[0, 1, 2], &[1, 2, 3], &[2, 3, 4]])),
        ("chain", build(5, &[&[0, 1], &[1, 2], &[2, 3], &[3, 4]])),
        (
            "hub and spokes",
            build(10, &[&[0, 1, 2, 3, 4], &[0, 5], &[1, 6], &[2, 7], &[3, 8], &[4, 9]]),
        ),
        (
            "nested",
            build(7, &[&[0, 1, 2], &[0, 1, 2, 3], &[3, 4], &[4, 5, 6], &[5, 6], &[0, 6]]),
        ),
        (
            "two camps with a bridge",
            build(8, &[&[0, 1, 2, 3], &[0, 1, 2], &[3, 4], &[4, 5, 6, 7], &[5, 6, 7]]),
        ),
    ]
}

#[test]
fn sampled_walks_match_one_step_cooccurrence() {
    let started = Instant::now();
    let repeats = 5000;
    let mut worst: f64 = 0.0;
    for (name, g) in walk_fixtures() {
        let multiset = random_walk_multiset(&g, 1, repeats, 7);
        let oracle = one_step_pair_distribution(&g);
        let total = multiset.total() as f64;
        assert!(total > 0.0, "[FAIL] {name}: no walk pairs recorded");

        let mut keys: BTreeSet<(usize, usize)> = oracle.keys().copied().collect();
        keys.extend(multiset.pair_counts().keys().copied());
        let tv: f64 = 0.5
            * keys
                .iter()
                .map(|k| {
                    let sampled =
                        multiset.pair_counts().get(k).copied().unwrap_or(0) as f64 / total;
                    let exact = oracle.get(k).copied().unwrap_or(0.0);
                    (sampled - exact).abs()
                })
                .sum::<f64>();
        assert!(tv < 0.05, "[FAIL] {name}: total variation {tv:.4} >= 0.05");
        worst = worst.max(tv);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "[FAIL] walk sampling took {elapsed:.1}s (budget 10s)");
    println!(
        "[PASS] walk sampling: worst total variation {worst:.4} < 0.05 across 6 fixtures ({elapsed:.1}s)"
    );
}

/// Influence operator from first principles, dense.
fn dense_theta(g: &Hypergraph) -> Array2<f64> {
    let n = g.node_count();
    let m = g.hyperedge_count();
    let mut h = Array2::<f64>::zeros((n, m));
    for (k, e) in g.hyperedges().iter().enumerate() {
        for &u in e {
            h[[u, k]] = 1.0;
        }
    }
    let w = g.hyperedge_weights();
    let uw = g.node_weights();
    let de: Vec<f64> = (0..m)
        .map(|k| (0..n).map(|u| uw[u] * h[[u, k]]).sum())
        .collect();
    let dv: Vec<f64> = (0..n)
        .map(|u| (0..m).map(|k| w[k] * h[[u, k]]).sum())
        .collect();
    let s: Vec<f64> = (0..n)
        .map(|u| if dv[u] > 0.0 { uw[u] / dv[u].sqrt() } else { 0.0 })
        .collect();
    let mut th = Array2::<f64>::zeros((n, n));
    for u in 0..n {
        for v in 0..n {
            let mut acc = 0.0;
            for k in 0..m {
                acc += h[[u, k]] * (w[k] / de[k]) * h[[v, k]];
            }
            th[[u, v]] = s[u] * s[v] * acc;
        }
    }
    th
}

fn dense_activation(act: Activation, x: &Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Relu => x.mapv(|v| v.max(0.0)),
        Activation::Sigmoid => x.mapv(|v| 1.0 / (1.0 + (-v).exp())),
        Activation::Identity => x.clone(),
    }
}

/// (r_h, r_p, r_encode, x_circ, r_star, x_hat), all dense.
type DenseOutputs = (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>);

/// The whole forward pass recomputed densely and independently.
fn dense_forward(g: &Hypergraph, lg: &LineGraph, params: &ModelParams) -> DenseOutputs {
    let n = g.node_count();
    let m = g.hyperedge_count();

    let th = dense_theta(g);
    let mut theta_sum = Array2::<f64>::zeros((n, n));
    let mut power = th.clone();
    let mut decay = 1.0;
    for hop in 0..params.k_hops {
        if hop > 0 {
            power = power.dot(&th);
        }
        theta_sum = theta_sum + decay * &power;
        decay *= params.gamma;
    }
    let mut prop = theta_sum;
    for u in 0..n {
        prop[[u, u]] = 1.0;
    }

    let sym_norm = |adj: &Array2<f64>| {
        let deg: Vec<f64> = (0..adj.nrows()).map(|r| adj.row(r).sum()).collect();
        let mut out = adj.clone();
        for r in 0..adj.nrows() {
            for c in 0..adj.ncols() {
                out[[r, c]] *= 1.0 / (deg[r].sqrt() * deg[c].sqrt());
            }
        }
        out
    };
    let mut pair_adj = Array2::<f64>::eye(n);
    for &(a, b) in g.pairwise_edges() {
        pair_adj[[a, b]] = 1.0;
        pair_adj[[b, a]] = 1.0;
    }
    let pair_norm = sym_norm(&pair_adj);
    let mut line_adj = Array2::<f64>::eye(m);
    for &(a, b) in lg.edges() {
        line_adj[[a, b]] = 1.0;
        line_adj[[b, a]] = 1.0;
    }
    let line_norm = sym_norm(&line_adj);

    let mut hmat = Array2::<f64>::zeros((n, m));
    for (k, e) in g.hyperedges().iter().enumerate() {
        for &u in e {
            hmat[[u, k]] = 1.0;
        }
    }

    let act = params.activation;
    let mut rh = g.features().clone();
    for p in &params.hyper_layers {
        rh = dense_activation(act, &prop.dot(&rh).dot(p));
    }
    let mut rp = g.features().clone();
    for p in &params.pair_layers {
        rp = dense_activation(act, &pair_norm.dot(&rp).dot(p));
    }
    let mut r_encode = Array2::<f64>::zeros((n, rh.ncols() + rp.ncols()));
    for u in 0..n {
        for c in 0..rh.ncols() {
            r_encode[[u, c]] = rh[[u, c]];
        }
        for c in 0..rp.ncols() {
            r_encode[[u, rh.ncols() + c]] = rp[[u, c]];
        }
    }

    let mut circ = hmat.t().dot(&r_encode);
    for p in &params.line_layers {
        circ = dense_activation(act, &line_norm.dot(&circ).dot(p));
    }
    let r_star = hmat.dot(&circ);

    let mut dec_in = Array2::<f64>::zeros((n, r_star.ncols() + r_encode.ncols()));
    for u in 0..n {
        for c in 0..r_star.ncols() {
            dec_in[[u, c]] = r_star[[u, c]];
        }
        for c in 0..r_encode.ncols() {
            dec_in[[u, r_star.ncols() + c]] = r_encode[[u, c]];
        }
    }
    let mut hidden_lin = dec_in.dot(&params.decoder_hidden);
    for mut row in hidden_lin.rows_mut() {
        row += &params.decoder_hidden_bias.row(0);
    }
    let hidden = dense_activation(act, &hidden_lin);
    let mut x_hat = hidden.dot(&params.decoder_out);
    for mut row in x_hat.rows_mut() {
        row += &params.decoder_out_bias.row(0);
    }

    (rh, rp, r_encode, circ, r_star, x_hat)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max)
}

#[test]
fn influence_operator_is_uniform_symmetric_and_matches_dense_oracle() {
    // one hyperedge covering everything averages uniformly
    let mut worst_uniform: f64 = 0.0;
    for n in 2..=10usize {
        let g = Hypergraph::new(
            Array2::zeros((n, 1)),
            vec![(0..n).collect::<BTreeSet<_>>()],
            [],
        )
        .unwrap();
        let inc = build_incidence(&g).unwrap();
        let th = theta(&inc, g.hyperedge_weights(), g.node_weights()).to_dense();
        let expect = 1.0 / n as f64;
        for v in th.iter() {
            worst_uniform = worst_uniform.max((v - expect).abs());
        }
    }
    assert!(
        worst_uniform <= 1e-12,
        "[FAIL] universal hyperedge deviates from uniform by {worst_uniform:.3e}"
    );

    // symmetry under arbitrary positive weights
    let mut r = hyperflow::rng::stream(11, "accept.theta");
    let mut worst_sym: f64 = 0.0;
    for _ in 0..50 {
        let n = r.gen_range(4..=10);
        let m = r.gen_range(1..=5);
        let sets: Vec<BTreeSet<usize>> = (0..m)
            .map(|_| {
                let size = r.gen_range(2..=n);
                let mut e = BTreeSet::new();
                while e.len() < size {
                    e.insert(r.gen_range(0..n));
                }
                e
            })
            .collect::<BTreeSet<_>>() // the graph dedupes; weights must match
            .into_iter()
            .collect();
        let w: Vec<f64> = (0..sets.len()).map(|_| r.gen_range(0.5..3.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..2.0)).collect();
        let g = Hypergraph::new(Array2::zeros((n, 1)), sets, [])
            .unwrap()
            .with_weights(w, u)
            .unwrap();
        let inc = build_incidence(&g).unwrap();
        let th = theta(&inc, g.hyperedge_weights(), g.node_weights()).to_dense();
        for a in 0..n {
            for b in 0..n {
                worst_sym = worst_sym.max((th[[a, b]] - th[[b, a]]).abs());
            }
        }
    }
    assert!(
        worst_sym <= 1e-12,
        "[FAIL] influence operator asymmetric by {worst_sym:.3e}"
    );

    // sparse pipeline forward equals an independent dense recomputation
    let mut worst_forward: f64 = 0.0;
    for (i, act) in [Activation::Relu, Activation::Sigmoid, Activation::Identity, Activation::Relu, Activation::Sigmoid]
        .into_iter()
        .enumerate()
    {
        let seed = 100 + i as u64;
        let g = random_instance(4 + i, 3, 2 + i % 3, seed);
        let inc = build_incidence(&g).unwrap();
        let lg = build_line_graph(&g, &LineConfig::default(), seed).unwrap();
        let cfg = ModelConfig {
            hyper_dims: vec![6, 4],
            pair_dims: vec![5],
            activation: act,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&cfg, 3, seed).unwrap();
        let ops = Operators::build(&g, &inc, &lg, cfg.k_hops, cfg.gamma).unwrap();
        let set = forward(&g, &ops, &params).unwrap();
        let (rh, rp, renc, circ, rstar, xhat) = dense_forward(&g, &lg, &params);
        for (sparse, dense) in [
            (&set.r_h, &rh),
            (&set.r_p, &rp),
            (&set.r_encode, &renc),
            (&set.x_circ, &circ),
            (&set.r_star, &rstar),
            (&set.x_hat, &xhat),
        ] {
            worst_forward = worst_forward.max(max_abs_diff(sparse, dense));
        }
    }
    assert!(
        worst_forward <= 1e-10,
        "[FAIL] sparse forward deviates from dense oracle by {worst_forward:.3e}"
    );

    println!(
        "[PASS] influence operator: uniform within {worst_uniform:.2e}, symmetric within {worst_sym:.2e}, forward matches dense oracle within {worst_forward:.2e}"
    );
}

#[test]
fn karate_loss_halves_within_200_epochs() {
    let started = Instant::now();
    let env = EnvSelection {
        method: EnvMethod::KHop,
        k: 1,
        ..EnvSelection::default()
    };
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..5u64 {
        let g = resolve_environments(karate_club(), &env, seed).unwrap();
        let inc = build_incidence(&g).unwrap();
        let lg = build_line_graph(&g, &LineConfig::default(), seed).unwrap();
        let cfg = TrainConfig {
            neg_ratio: 10,
            learning_rate: 0.01,
            epochs: 200,
            seed,
            ..TrainConfig::default()
        };
        let out = train(&g, &inc, &lg, &cfg, &ModelConfig::default()).unwrap();
        let early = moving_average_loss(&out.history, 10, 10);
        let late = moving_average_loss(&out.history, 200, 10);
        let ratio = late / early;
        assert!(
            late <= 0.5 * early,
            "[FAIL] seed {seed}: loss moving average went {early:.2} -> {late:.2} (ratio {ratio:.3} > 0.5)"
        );
        worst_ratio = worst_ratio.max(ratio);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "[FAIL] convergence runs took {elapsed:.1}s (budget 120s)");
    println!(
        "[PASS] convergence: 10-epoch moving average shrinks to at most {:.4} of its epoch-10 value across 5 seeds ({elapsed:.1}s)",
        worst_ratio
    );
}

#[test]
fn learned_environments_separate_planted_blocks() {
    let mut reported = Vec::new();
    for seed in 0..5u64 {
        let g = generate_planted(&PlantedConfig::default(), seed).unwrap();
        let fit = fit_membership(
            g.features(),
            g.pairwise_edges(),
            2,
            &EnvFitConfig::default(),
            seed,
        )
        .unwrap();
        let learned = extract_hyperedges(&fit.membership, 0.5).unwrap();
        let eq = equivalence(&learned, g.node_count(), g.pairwise_edges(), usize::MAX, seed)
            .unwrap();
        let pass = match eq {
            Equivalence::Finite(v) => v > 1.0,
            Equivalence::Infinite { .. } => true,
        };
        assert!(pass, "[FAIL] seed {seed}: equivalence {eq:?} not > 1");
        reported.push(match eq {
            Equivalence::Finite(v) => format!("{v:.2}"),
            Equivalence::Infinite { .. } => "inf".into(),
        });
    }
    println!(
        "[PASS] social equivalence: learned environments give eq > 1 on all 5 seeds ({})",
        reported.join(", ")
    );
}

#[test]
fn training_lowers_group_entropy_on_planted_blocks() {
    let mcfg = ModelConfig {
        hyper_dims: vec![4],
        pair_dims: vec![4],
        activation: Activation::Sigmoid,
        ..ModelConfig::default()
    };
    let mut lower = 0usize;
    let mut total = 0usize;
    for seed in 0..5u64 {
        let g = generate_planted(&PlantedConfig::default(), seed).unwrap();
        let inc = build_incidence(&g).unwrap();
        let lg = build_line_graph(&g, &LineConfig::default(), seed).unwrap();
        let cfg = TrainConfig {
            seed,
            snapshot_every: 200,
            ..TrainConfig::default()
        };
        let out = train(&g, &inc, &lg, &cfg, &mcfg).unwrap();
        let initial = &out.snapshots.first().unwrap().1;
        let updated = &out.snapshots.last().unwrap().1;
        for e in g.hyperedges() {
            total += 1;
            if group_entropy(updated, e, EntropyMode::Sum)
                < group_entropy(initial, e, EntropyMode::Sum)
            {
                lower += 1;
            }
        }
    }
    assert!(
        lower * 10 >= total * 8,
        "[FAIL] group entropy decreased for only {lower}/{total} planted groups (< 80%)"
    );
    println!(
        "[PASS] polarization direction: group entropy drops after training for {lower}/{total} planted groups"
    );
}

/// Hold out 20% of edges, rebuild the graph without them, train with the link
/// task, and rank held-out edges against 10 sampled negatives per positive.
fn held_out_auc(g: &Hypergraph, env: &EnvSelection, uniform_weights: bool, seed: u64) -> f64 {
    let edges: Vec<(usize, usize)> = g.pairwise_edges().iter().copied().collect();
    let (train_edges, held) = split_edges(&edges, 0.2, seed);
    let masked = Hypergraph::new(
        g.features().clone(),
        g.hyperedges().to_vec(),
        train_edges.clone(),
    )
    .unwrap();
    let masked = if uniform_weights {
        let w: Vec<f64> = masked.hyperedges().iter().map(|e| e.len() as f64).collect();
        let n = masked.node_count();
        masked.with_weights(w, vec![1.0; n]).unwrap()
    } else {
        masked
    };
    let masked = resolve_environments(masked, env, seed).unwrap();
    let inc = build_incidence(&masked).unwrap();
    let lg = build_line_graph(&masked, &LineConfig::default(), seed).unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::Unpluggable,
        task: Some(TaskKind::LinkPrediction),
        seed,
        ..TrainConfig::default()
    };
    let out = train_with_task(
        &masked,
        &inc,
        &lg,
        &cfg,
        &ModelConfig::default(),
        &TaskData::LinkPrediction { edges: train_edges },
    )
    .unwrap();
    let ops = Operators::build(&masked, &inc, &lg, 2, 0.5).unwrap();
    let set = forward(&masked, &ops, &out.params).unwrap();
    let negs = sample_eval_negatives(g.node_count(), g.pairwise_edges(), held.len(), 10, seed);
    link_auc(&set.r_encode, &held, &negs)
}

#[test]
fn held_out_links_rank_above_negatives() {
    let seed = 0u64;

    let planted = generate_planted(&PlantedConfig::default(), seed).unwrap();
    let planted_auc = held_out_auc(&planted, &EnvSelection::default(), true, seed);
    assert!(
        planted_auc > 0.9,
        "[FAIL] planted blocks: link AUC {planted_auc:.4} <= 0.9"
    );

    let karate_env = EnvSelection {
        method: EnvMethod::KHop,
        k: 1,
        ..EnvSelection::default()
    };
    let karate_auc = held_out_auc(&karate_club(), &karate_env, false, seed);
    assert!(
        karate_auc > 0.65,
        "[FAIL] karate club: link AUC {karate_auc:.4} <= 0.65"
    );

    println!(
        "[PASS] link prediction: AUC {planted_auc:.3} > 0.9 on planted blocks, {karate_auc:.3} > 0.65 on the karate club"
    );
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let bin = env!("CARGO_BIN_EXE_hyperflow");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    // karate + 1-hop environments gives 34 overlapping hyperedges, so the
    // sampled line graph really exercises the parallel walk code
    std::fs::write(
        &config_path,
        r#"{
  "seed": 7,
  "output": "placeholder",
  "data.source": "karate",
  "env.method": "khop",
  "env.k": 1,
  "line.mode": "sampled",
  "line.repeats": 200,
  "train.epochs": 60,
  "train.snapshot_every": 30
}"#,
    )
    .unwrap();

    let artifacts = ["embeddings.csv", "loss.csv", "checkpoint.bin", "metrics.json", "line_edges.tsv"];
    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for (label, threads) in [("first", None), ("second", None), ("one", Some("1")), ("four", Some("4"))] {
        let out_dir = dir.path().join(label);
        for sub in ["run", "linegraph"] {
            let mut cmd = Command::new(bin);
            cmd.arg(sub)
                .arg("--config")
                .arg(&config_path)
                .arg("--set")
                .arg(format!("output={}", out_dir.display()));
            match threads {
                Some(t) => {
                    cmd.env("HYPERFLOW_THREADS", t);
                }
                None => {
                    cmd.env_remove("HYPERFLOW_THREADS");
                }
            }
            let status = cmd.status().unwrap();
            assert!(status.success(), "[FAIL] {sub} exited with {status:?} for {label}");
        }
        outputs.push(
            artifacts
                .iter()
                .map(|a| std::fs::read(out_dir.join(a)).unwrap_or_else(|e| panic!("read {a}: {e}")))
                .collect(),
        );
    }

    for other in 1..outputs.len() {
        for (a, name) in outputs[0].iter().zip(artifacts) {
            assert!(
                *a == outputs[other][name_index(&artifacts, name)],
                "[FAIL] {name} differs between invocation 0 and {other}"
            );
        }
    }
    println!(
        "[PASS] determinism: embeddings, line graph, loss history, checkpoint, and metrics are bitwise identical across repeated runs and thread counts"
    );
}

fn name_index(artifacts: &[&str], name: &str) -> usize {
    artifacts.iter().position(|&a| a == name).unwrap()
}
