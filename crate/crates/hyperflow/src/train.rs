//! Self-supervised training with the dual-contrastive reconstruction loss.
//!
//! Positive pairs align each node's features with its own reconstruction;
//! negative pairs push reconstructions of non-adjacent nodes at least a margin
//! apart:
//!
//! L = Σ_{(u,u)∈P} [‖X_u − X̂_u‖² − m_p]₊ + Σ_{(u,v)∈N} [m_n − ‖X_u − X̂_v‖²]₊
//!
//! Negatives are resampled every epoch from seed-derived streams; the whole
//! loop is full-batch and bitwise deterministic for a fixed (dataset, config).

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Hypergraph, IncidenceMatrix, LineGraph};
use crate::model::{forward_on_tape, ModelConfig, ModelParams, Operators, ParamVars};
use crate::rng;

/// One epoch of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub loss: f64,
    pub pos_term: f64,
    pub neg_term: f64,
}

/// Sampled pairs for one epoch: positives are (u, u) for every node,
/// negatives are non-adjacent ordered pairs (u, v), u ≠ v.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// Which adaptive rule updates the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Pluggable trains self-supervised only; unpluggable adds λ·task loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Pluggable,
    Unpluggable,
}

/// Downstream objectives available in unpluggable mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinkPrediction,
    RatingRegression,
}

/// Supervision for the unpluggable task head.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    /// Observed links; per-epoch negatives are resampled one per positive.
    LinkPrediction { edges: Vec<(usize, usize)> },
    /// (u, v, score) triples with scores already scaled into [0, 1].
    RatingRegression { ratings: Vec<(usize, usize, f64)> },
}

/// Knobs of the optimizer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub m_p: f64,
    pub m_n: f64,
    pub neg_ratio: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub mode: TrainMode,
    pub task: Option<TaskKind>,
    pub lambda: f64,
    /// Record an embedding snapshot every this many epochs (0 = off); the
    /// initial state and the final epoch are always included when on.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m_p: 0.1,
            m_n: 1.0,
            neg_ratio: 10,
            epochs: 200,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            mode: TrainMode::Pluggable,
            task: None,
            lambda: 1.0,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_p >= 0.0 && self.m_n > self.m_p) {
            return Err(Error::Config(format!(
                "margins need m_n > m_p >= 0, got m_p={} m_n={}",
                self.m_p, self.m_n
            )));
        }
        if self.neg_ratio < 1 {
            return Err(Error::Config("neg_ratio must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.mode == TrainMode::Unpluggable && self.task.is_none() {
            return Err(Error::Config("unpluggable mode needs a task".into()));
        }
        Ok(())
    }
}

/// Draw one epoch's pairs: all (u, u) positives plus neg_ratio·N uniform
/// non-adjacent negatives.
pub fn sample_pairs(g: &Hypergraph, neg_ratio: usize, seed: u64) -> Result<PairBatch> {
    let mut rng = rng::stream(seed, "train.negatives");
    sample_pairs_with(g, neg_ratio, &mut rng)
}

pub(crate) fn sample_pairs_with(
    g: &Hypergraph,
    neg_ratio: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PairBatch> {
    let n = g.node_count();
    let candidates = n * (n - 1) / 2 - g.pairwise_edges().len();
    if candidates == 0 {
        return Err(Error::InvalidGraph(
            "complete graph leaves no negative pairs to sample".into(),
        ));
    }
    let positives: Vec<(usize, usize)> = (0..n).map(|u| (u, u)).collect();
    let target = neg_ratio * n;
    let mut negatives = Vec::with_capacity(target);
    let mut attempts = 0usize;
    let cap = target.saturating_mul(1000).max(1000);
    while negatives.len() < target {
        attempts += 1;
        if attempts > cap {
            return Err(Error::InvalidGraph(
                "negative sampling stalled; graph too dense".into(),
            ));
        }
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || g.pairwise_edges().contains(&(u.min(v), u.max(v))) {
            continue;
        }
        negatives.push((u, v));
    }
    Ok(PairBatch {
        positives,
        negatives,
    })
}

fn pair_distances(x: &Array2<f64>, x_hat: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(u, v)| {
            let diff = &x.row(u) - &x_hat.row(v);
            diff.iter().map(|d| d * d).sum()
        })
        .collect()
}

/// Evaluate the loss without a tape.
pub fn dual_contrastive_loss(
    x: &Array2<f64>,
    x_hat: &Array2<f64>,
    batch: &PairBatch,
    m_p: f64,
    m_n: f64,
) -> f64 {
    let pos: f64 = pair_distances(x, x_hat, &batch.positives)
        .into_iter()
        .map(|d| (d - m_p).max(0.0))
        .sum();
    let neg: f64 = pair_distances(x, x_hat, &batch.negatives)
        .into_iter()
        .map(|d| (m_n - d).max(0.0))
        .sum();
    pos + neg
}

/// Which hinge terms are active (strictly past their margin), positives then
/// negatives. Two parameter points with different activity straddle a kink,
/// where a central difference measures a chord across it rather than a slope.
pub fn hinge_activity(
    x: &Array2<f64>,
    x_hat: &Array2<f64>,
    batch: &PairBatch,
    m_p: f64,
    m_n: f64,
) -> Vec<bool> {
    let pos = pair_distances(x, x_hat, &batch.positives)
        .into_iter()
        .map(|d| d > m_p);
    let neg = pair_distances(x, x_hat, &batch.negatives)
        .into_iter()
        .map(|d| d < m_n);
    pos.chain(neg).collect()
}

/// Smallest |distance² − margin| over the batch: how far the loss sits from
/// its nearest hinge kink. Finite-difference probes need this comfortably
/// above the step size, or the two-sided difference straddles the kink.
pub fn kink_margin(
    x: &Array2<f64>,
    x_hat: &Array2<f64>,
    batch: &PairBatch,
    m_p: f64,
    m_n: f64,
) -> f64 {
    let pos = pair_distances(x, x_hat, &batch.positives)
        .into_iter()
        .map(|d| (d - m_p).abs());
    let neg = pair_distances(x, x_hat, &batch.negatives)
        .into_iter()
        .map(|d| (d - m_n).abs());
    pos.chain(neg).fold(f64::INFINITY, f64::min)
}

/// Squared row distances ‖X_u − X̂_v‖² on the tape, one row per pair.
fn distances_on_tape(tape: &mut Tape, x: Var, x_hat: Var, pairs: &[(usize, usize)]) -> Var {
    let us: Vec<usize> = pairs.iter().map(|&(u, _)| u).collect();
    let vs: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
    let xu = tape.gather_rows(x, Rc::new(us));
    let xv = tape.gather_rows(x_hat, Rc::new(vs));
    let diff = tape.sub(xu, xv);
    let sq = tape.mul(diff, diff);
    tape.row_sum(sq)
}

/// Loss pieces wired on the tape: (total, pos_term, neg_term).
fn loss_on_tape(
    tape: &mut Tape,
    x: Var,
    x_hat: Var,
    batch: &PairBatch,
    m_p: f64,
    m_n: f64,
) -> (Var, Var, Var) {
    let d_pos = distances_on_tape(tape, x, x_hat, &batch.positives);
    let hinged = tape.hinge(d_pos, m_p);
    let pos_term = tape.sum(hinged);

    let d_neg = distances_on_tape(tape, x, x_hat, &batch.negatives);
    let neg_flipped = tape.scale(d_neg, -1.0);
    let shifted = tape.add_scalar(neg_flipped, m_n);
    let hinged = tape.relu(shifted);
    let neg_term = tape.sum(hinged);

    let total = tape.add(pos_term, neg_term);
    (total, pos_term, neg_term)
}

/// Logistic link loss on tape: −Σ ln σ(dot) over positives −Σ ln(1−σ(dot))
/// over negatives, averaged.
fn link_loss_on_tape(
    tape: &mut Tape,
    r_encode: Var,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Var {
    let dot = |tape: &mut Tape, pairs: &[(usize, usize)]| {
        let us: Vec<usize> = pairs.iter().map(|&(u, _)| u).collect();
        let vs: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
        let a = tape.gather_rows(r_encode, Rc::new(us));
        let b = tape.gather_rows(r_encode, Rc::new(vs));
        let prod = tape.mul(a, b);
        tape.row_sum(prod)
    };
    let count = (positives.len() + negatives.len()).max(1) as f64;

    let d_pos = dot(tape, positives);
    let p = tape.sigmoid(d_pos);
    let p = tape.clamp_min(p, 1e-12);
    let lp = tape.ln(p);
    let pos_sum = tape.sum(lp);

    let d_neg = dot(tape, negatives);
    let pn = tape.sigmoid(d_neg);
    let flipped = tape.scale(pn, -1.0);
    let one_minus = tape.add_scalar(flipped, 1.0);
    let one_minus = tape.clamp_min(one_minus, 1e-12);
    let ln = tape.ln(one_minus);
    let neg_sum = tape.sum(ln);

    let total = tape.add(pos_sum, neg_sum);
    tape.scale(total, -1.0 / count)
}

/// Mean absolute error between σ(dot) and [0,1]-scaled scores, on tape.
fn rating_loss_on_tape(tape: &mut Tape, r_encode: Var, ratings: &[(usize, usize, f64)]) -> Var {
    let us: Vec<usize> = ratings.iter().map(|&(u, _, _)| u).collect();
    let vs: Vec<usize> = ratings.iter().map(|&(_, v, _)| v).collect();
    let targets =
        Array2::from_shape_vec((ratings.len(), 1), ratings.iter().map(|&(_, _, s)| s).collect())
            .expect("target shape");
    let a = tape.gather_rows(r_encode, Rc::new(us));
    let b = tape.gather_rows(r_encode, Rc::new(vs));
    let prod = tape.mul(a, b);
    let dots = tape.row_sum(prod);
    let preds = tape.sigmoid(dots);
    let t = tape.leaf(targets);
    let diff = tape.sub(preds, t);
    let abs = tape.abs(diff);
    let total = tape.sum(abs);
    tape.scale(total, 1.0 / ratings.len().max(1) as f64)
}

/// Adam/SGD state over one flat list of matrices.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[(usize, usize)]) -> Self {
        Optimizer {
            kind,
            lr,
            t: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// One step over all parameters; `grads` aligns with `params`.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    **p -= &(g * self.lr);
                }
                OptimizerKind::Adam => {
                    self.m[i] = &self.m[i] * B1 + &(g * (1.0 - B1));
                    self.v[i] = &self.v[i] * B2 + &(g.mapv(|x| x * x) * (1.0 - B2));
                    let mhat = &self.m[i] / (1.0 - B1.powi(self.t as i32));
                    let vhat = &self.v[i] / (1.0 - B2.powi(self.t as i32));
                    let update = mhat / (vhat.mapv(f64::sqrt) + EPS);
                    **p -= &(update * self.lr);
                }
            }
        }
    }
}

/// Gradients of the full pipeline loss for every trainable matrix, in
/// `named_matrices` order. Fails if any gradient is non-finite.
pub fn gradients(
    params: &ModelParams,
    g: &Hypergraph,
    ops: &Operators,
    batch: &PairBatch,
    cfg: &TrainConfig,
) -> Result<Vec<Array2<f64>>> {
    let mut tape = Tape::new();
    let x = tape.leaf(g.features().clone());
    let pv = ParamVars::register(&mut tape, params);
    let fv = forward_on_tape(&mut tape, x, ops, &pv, params.activation);
    let (loss, _, _) = loss_on_tape(&mut tape, x, fv.x_hat, batch, cfg.m_p, cfg.m_n);
    if !tape.scalar(loss).is_finite() {
        return Err(Error::Numeric("loss is non-finite at current parameters".into()));
    }
    let grads = tape.backward(loss);
    let names: Vec<String> = params.named_matrices().into_iter().map(|(n, _)| n).collect();
    pv.all
        .iter()
        .zip(names)
        .map(|(&v, name)| {
            let g = grads.get(v);
            if g.iter().all(|x| x.is_finite()) {
                Ok(g.clone())
            } else {
                Err(Error::Numeric(format!("non-finite gradient for {name}")))
            }
        })
        .collect()
}

/// Everything `train` hands back.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<LossRecord>,
    /// (epoch, R_encode) pairs when snapshots were requested; epoch 0 is the
    /// untrained model.
    pub snapshots: Vec<(usize, Array2<f64>)>,
}

/// Self-supervised training (the pluggable path).
pub fn train(
    g: &Hypergraph,
    inc: &IncidenceMatrix,
    lg: &LineGraph,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainOutcome> {
    run_training(g, inc, lg, cfg, model_cfg, None)
}

/// Joint training with a task head (the unpluggable path); λ = 0 reduces to
/// `train`.
pub fn train_with_task(
    g: &Hypergraph,
    inc: &IncidenceMatrix,
    lg: &LineGraph,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    task_data: &TaskData,
) -> Result<TrainOutcome> {
    match (cfg.task, task_data) {
        (Some(TaskKind::LinkPrediction), TaskData::LinkPrediction { .. })
        | (Some(TaskKind::RatingRegression), TaskData::RatingRegression { .. }) => {}
        (None, _) => return Err(Error::Config("unpluggable training needs cfg.task".into())),
        _ => {
            return Err(Error::Config(
                "task kind does not match the supplied task data".into(),
            ))
        }
    }
    run_training(g, inc, lg, cfg, model_cfg, Some(task_data))
}

fn run_training(
    g: &Hypergraph,
    inc: &IncidenceMatrix,
    lg: &LineGraph,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    task_data: Option<&TaskData>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = ModelParams::init(model_cfg, g.feature_dim(), cfg.seed)?;
    let ops = Operators::build(g, inc, lg, params.k_hops, params.gamma)?;
    let shapes: Vec<(usize, usize)> = params
        .named_matrices()
        .iter()
        .map(|(_, m)| m.dim())
        .collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &shapes);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();
    let snap_on = cfg.snapshot_every > 0;
    if snap_on {
        let set = crate::model::forward(g, &ops, &params)?;
        snapshots.push((0, set.r_encode));
    }

    for epoch in 1..=cfg.epochs {
        let mut epoch_rng = rng::stream_indexed(cfg.seed, "train.negatives", epoch as u64);
        let batch = sample_pairs_with(g, cfg.neg_ratio, &mut epoch_rng)?;

        let mut tape = Tape::new();
        let x = tape.leaf(g.features().clone());
        let pv = ParamVars::register(&mut tape, &params);
        let fv = forward_on_tape(&mut tape, x, &ops, &pv, params.activation);
        let (mut loss, pos_term, neg_term) =
            loss_on_tape(&mut tape, x, fv.x_hat, &batch, cfg.m_p, cfg.m_n);

        if let Some(data) = task_data {
            let task_loss = match data {
                TaskData::LinkPrediction { edges } => {
                    let negs: Vec<(usize, usize)> = {
                        let mut out = Vec::with_capacity(edges.len());
                        let n = g.node_count();
                        let mut attempts = 0usize;
                        while out.len() < edges.len() && attempts < edges.len() * 1000 + 1000 {
                            attempts += 1;
                            let u = epoch_rng.gen_range(0..n);
                            let v = epoch_rng.gen_range(0..n);
                            if u != v && !g.pairwise_edges().contains(&(u.min(v), u.max(v))) {
                                out.push((u, v));
                            }
                        }
                        out
                    };
                    link_loss_on_tape(&mut tape, fv.r_encode, edges, &negs)
                }
                TaskData::RatingRegression { ratings } => {
                    rating_loss_on_tape(&mut tape, fv.r_encode, ratings)
                }
            };
            let weighted = tape.scale(task_loss, cfg.lambda);
            loss = tape.add(loss, weighted);
        }

        let loss_val = tape.scalar(loss);
        let record = LossRecord {
            epoch,
            loss: loss_val,
            pos_term: tape.scalar(pos_term),
            neg_term: tape.scalar(neg_term),
        };
        if !loss_val.is_finite() {
            history.push(record);
            return Err(Error::Diverged {
                epoch,
                history,
            });
        }
        history.push(record);

        let grads = tape.backward(loss);
        let names: Vec<String> = params.named_matrices().into_iter().map(|(n, _)| n).collect();
        let grad_mats: Vec<Array2<f64>> = pv
            .all
            .iter()
            .zip(&names)
            .map(|(&v, name)| {
                let gm = grads.get(v);
                if gm.iter().all(|x| x.is_finite()) {
                    Ok(gm.clone())
                } else {
                    Err(Error::Numeric(format!("non-finite gradient for {name}")))
                }
            })
            .collect::<Result<_>>()?;
        opt.step(&mut params.matrices_mut(), &grad_mats);

        if snap_on && (epoch % cfg.snapshot_every == 0 || epoch == cfg.epochs) {
            let set = crate::model::forward(g, &ops, &params)?;
            snapshots.push((epoch, set.r_encode));
        }
    }

    Ok(TrainOutcome {
        params,
        history,
        snapshots,
    })
}

/// Hold out `frac` of the edges (at least one) for evaluation; returns
/// (train_edges, held_out) deterministically under seed.
#[allow(clippy::type_complexity)]
pub fn split_edges(
    edges: &[(usize, usize)],
    frac: f64,
    seed: u64,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    assert!((0.0..1.0).contains(&frac), "holdout fraction in [0, 1)");
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let mut rng = rng::stream(seed, "eval.split");
    // Fisher–Yates
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let held = ((edges.len() as f64 * frac).round() as usize).clamp(1, edges.len() - 1);
    let test: Vec<(usize, usize)> = order[..held].iter().map(|&i| edges[i]).collect();
    let train: Vec<(usize, usize)> = order[held..].iter().map(|&i| edges[i]).collect();
    (train, test)
}

/// Uniform non-edges (w.r.t. `all_edges`) for ranking evaluation,
/// `per_positive` per held-out edge.
pub fn sample_eval_negatives(
    node_count: usize,
    all_edges: &std::collections::BTreeSet<(usize, usize)>,
    positives: usize,
    per_positive: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut rng = rng::stream(seed, "eval.negatives");
    let target = positives * per_positive;
    let mut out = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while out.len() < target && attempts < target * 1000 + 1000 {
        attempts += 1;
        let u = rng.gen_range(0..node_count);
        let v = rng.gen_range(0..node_count);
        if u != v && !all_edges.contains(&(u.min(v), u.max(v))) {
            out.push((u, v));
        }
    }
    out
}

/// Area under the ROC curve for inner-product scores of candidate pairs.
pub fn link_auc(
    embeddings: &Array2<f64>,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> f64 {
    let score = |&(u, v): &(usize, usize)| embeddings.row(u).dot(&embeddings.row(v));
    let pos: Vec<f64> = positives.iter().map(score).collect();
    let neg: Vec<f64> = negatives.iter().map(score).collect();
    let mut won = 0.0;
    for p in &pos {
        for n in &neg {
            if p > n {
                won += 1.0;
            } else if p == n {
                won += 0.5;
            }
        }
    }
    won / (pos.len() as f64 * neg.len() as f64)
}

/// Moving average of the loss over a trailing window, evaluated at `epoch`
/// (1-based, inclusive).
pub fn moving_average_loss(history: &[LossRecord], epoch: usize, window: usize) -> f64 {
    assert!(epoch >= 1 && epoch <= history.len(), "epoch out of range");
    let end = epoch;
    let start = end.saturating_sub(window);
    let slice = &history[start..end];
    slice.iter().map(|r| r.loss).sum::<f64>() / slice.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_incidence;
    use crate::model::Activation;
    use ndarray::array;
    use std::collections::BTreeSet;

    fn graph(n: usize, hyperedges: &[&[usize]], pairs: &[(usize, usize)]) -> Hypergraph {
        let sets: Vec<BTreeSet<usize>> = hyperedges
            .iter()
            .map(|e| e.iter().copied().collect())
            .collect();
        let x = Array2::from_shape_fn((n, 4), |(i, j)| ((i * 5 + j) as f64 * 0.61).cos());
        Hypergraph::new(x, sets, pairs.iter().copied()).unwrap()
    }

    fn small_setup() -> (Hypergraph, IncidenceMatrix, LineGraph) {
        let g = graph(6, &[&[0, 1, 2], &[2, 3], &[3, 4, 5]], &[(0, 1), (2, 3), (4, 5)]);
        let inc = build_incidence(&g).unwrap();
        let lg = LineGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        (g, inc, lg)
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            hyper_dims: vec![3],
            pair_dims: vec![3],
            ..ModelConfig::default()
        }
    }

    #[test]
    fn loss_hand_cases() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        // positive distance 0.5 with margin 0.1 => 0.4
        let x_hat = array![[0.5, 0.5], [0.0, 1.0]];
        let batch = PairBatch {
            positives: vec![(0, 0)],
            negatives: vec![],
        };
        let l = dual_contrastive_loss(&x, &x_hat, &batch, 0.1, 1.0);
        assert!((l - 0.4).abs() < 1e-12);

        // negative distance 0.2 with margin 1.0 => 0.8
        let x = array![[0.0, 0.0], [0.2, 0.4]];
        let x_hat = x.clone();
        let batch = PairBatch {
            positives: vec![],
            negatives: vec![(0, 1)],
        };
        let l = dual_contrastive_loss(&x, &x_hat, &batch, 0.1, 1.0);
        assert!((l - 0.8).abs() < 1e-12);

        // perfect reconstruction, distant negatives => 0
        let x = array![[0.0, 0.0], [3.0, 3.0]];
        let batch = PairBatch {
            positives: vec![(0, 0), (1, 1)],
            negatives: vec![(0, 1), (1, 0)],
        };
        assert_eq!(dual_contrastive_loss(&x, &x, &batch, 0.1, 1.0), 0.0);
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let x = array![[0.1, 0.9], [0.8, 0.2], [0.4, 0.4]];
        let x_hat = array![[0.0, 1.0], [0.7, 0.1], [0.5, 0.6]];
        let batch = PairBatch {
            positives: vec![(0, 0), (1, 1), (2, 2)],
            negatives: vec![(0, 2), (2, 1)],
        };
        let base = dual_contrastive_loss(&x, &x_hat, &batch, 0.1, 1.0);

        // permute nodes by p = [2, 0, 1] everywhere
        let p = [2usize, 0, 1];
        let permute = |m: &Array2<f64>| {
            let mut out = m.clone();
            for (old, &new) in p.iter().enumerate() {
                out.row_mut(new).assign(&m.row(old));
            }
            out
        };
        let batch_p = PairBatch {
            positives: batch.positives.iter().map(|&(u, v)| (p[u], p[v])).collect(),
            negatives: batch.negatives.iter().map(|&(u, v)| (p[u], p[v])).collect(),
        };
        let permuted = dual_contrastive_loss(&permute(&x), &permute(&x_hat), &batch_p, 0.1, 1.0);
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn sample_pairs_counts_and_exclusions() {
        let g = graph(3, &[&[0, 1, 2]], &[]);
        let batch = sample_pairs(&g, 1, 5).unwrap();
        assert_eq!(batch.positives, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(batch.negatives.len(), 3);

        let g = graph(4, &[&[0, 1, 2, 3]], &[(0, 1), (2, 3)]);
        let batch = sample_pairs(&g, 50, 5).unwrap();
        for &(u, v) in &batch.negatives {
            assert_ne!(u, v);
            assert!(!g.pairwise_edges().contains(&(u.min(v), u.max(v))));
        }
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let g = graph(3, &[&[0, 1, 2]], &[(0, 1), (0, 2), (1, 2)]);
        assert!(sample_pairs(&g, 1, 5).is_err());
    }

    #[test]
    fn pipeline_gradients_match_finite_differences() {
        let (g, inc, lg) = small_setup();
        let cfg = TrainConfig {
            neg_ratio: 2,
            ..TrainConfig::default()
        };
        // sigmoid keeps the surface smooth: no kink-crossing FD noise
        let model_cfg = ModelConfig {
            hyper_dims: vec![3],
            pair_dims: vec![2],
            activation: Activation::Sigmoid,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&model_cfg, g.feature_dim(), 3).unwrap();
        let ops = Operators::build(&g, &inc, &lg, params.k_hops, params.gamma).unwrap();
        let batch = sample_pairs(&g, cfg.neg_ratio, 11).unwrap();

        let analytic = gradients(&params, &g, &ops, &batch, &cfg).unwrap();

        let eps = 1e-5;
        let loss_at = |p: &ModelParams| {
            let set = crate::model::forward(&g, &ops, p).unwrap();
            dual_contrastive_loss(g.features(), &set.x_hat, &batch, cfg.m_p, cfg.m_n)
        };
        // rounding noise in the central difference scales with |loss|
        let atol = 1e-6 * (1.0 + loss_at(&params).abs());
        let mut worst: f64 = 0.0;
        for (mi, (_, mat)) in params.named_matrices().iter().enumerate() {
            for r in 0..mat.nrows() {
                for c in 0..mat.ncols() {
                    let mut plus = params.clone();
                    plus.matrices_mut()[mi][[r, c]] += eps;
                    let mut minus = params.clone();
                    minus.matrices_mut()[mi][[r, c]] -= eps;
                    let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
                    let an = analytic[mi][[r, c]];
                    let denom = an.abs().max(fd.abs()).max(atol);
                    worst = worst.max((an - fd).abs() / denom);
                }
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn kink_margin_reports_distance_to_clamp_boundaries() {
        let x = array![[0.0, 0.0]];
        let x_hat = array![[0.5, 0.0]]; // squared distance 0.25
        let batch = PairBatch {
            positives: vec![(0, 0)],
            negatives: vec![(0, 0)],
        };
        assert_eq!(kink_margin(&x, &x_hat, &batch, 0.1, 1.0), 0.15);
        assert_eq!(kink_margin(&x, &x_hat, &batch, 0.25, 1.0), 0.0);
        assert!((kink_margin(&x, &x_hat, &batch, 0.1, 0.3) - 0.05).abs() < 1e-15);
        // distance 0.25: past m_p = 0.1 (pos active), below m_n = 1.0 (neg active)
        assert_eq!(hinge_activity(&x, &x_hat, &batch, 0.1, 1.0), [true, true]);
        assert_eq!(hinge_activity(&x, &x_hat, &batch, 0.3, 0.2), [false, false]);
    }

    #[test]
    fn zero_loss_region_has_zero_gradients() {
        // X̂ = X·I reconstructs exactly (positive hinge off) and the rows are
        // mutually distant (negative hinge off): the loss sits flat at zero,
        // so the clamp subgradients kill everything upstream — here a weight.
        let x = array![[5.0, 0.0], [0.0, 5.0], [-5.0, -5.0]];
        let batch = PairBatch {
            positives: vec![(0, 0), (1, 1), (2, 2)],
            negatives: vec![(0, 1), (1, 2), (2, 0)],
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let w = tape.leaf(array![[1.0, 0.0], [0.0, 1.0]]);
        let x_hat = tape.matmul(xv, w);
        let (loss, _, _) = loss_on_tape(&mut tape, xv, x_hat, &batch, 0.1, 1.0);
        assert_eq!(tape.scalar(loss), 0.0);
        let g = tape.backward(loss);
        assert!(g.get(w).iter().all(|&v| v == 0.0));
        assert!(g.get(xv).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_slack_gradient_scales_linearly() {
        // single negative pair with the hinge active: d(loss)/d(X̂_v) is
        // −2(X_u − X̂_v); doubling the slack by moving X̂_v halves/doubles it
        let x = array![[1.0, 0.0], [0.0, 0.0]];
        let batch = PairBatch {
            positives: vec![],
            negatives: vec![(0, 1)],
        };
        let grad_at = |xhat_row: [f64; 2]| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let xh = tape.leaf(array![[0.0, 0.0], [xhat_row[0], xhat_row[1]]]);
            let (loss, _, _) = loss_on_tape(&mut tape, xv, xh, &batch, 0.1, 10.0);
            let g = tape.backward(loss);
            g.get(xh).row(1).to_owned()
        };
        let g1 = grad_at([0.5, 0.0]); // X_u − X̂_v = (0.5, 0)
        let g2 = grad_at([0.0, 0.0]); // X_u − X̂_v = (1.0, 0)
        assert!((g1[0] * 2.0 - g2[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_freezes_history() {
        let (g, inc, lg) = small_setup();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.0,
            neg_ratio: 1,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = train(&g, &inc, &lg, &cfg, &tiny_model()).unwrap();
        // negatives are resampled per epoch, so only the positive term is
        // guaranteed frozen
        let first = out.history[0].pos_term;
        for r in &out.history {
            assert_eq!(r.pos_term, first);
        }
    }

    #[test]
    fn equal_seeds_give_bitwise_equal_histories() {
        let (g, inc, lg) = small_setup();
        let cfg = TrainConfig {
            epochs: 8,
            neg_ratio: 2,
            seed: 21,
            ..TrainConfig::default()
        };
        let a = train(&g, &inc, &lg, &cfg, &tiny_model()).unwrap();
        let b = train(&g, &inc, &lg, &cfg, &tiny_model()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn loss_decreases_on_small_instance() {
        let (g, inc, lg) = small_setup();
        let cfg = TrainConfig {
            epochs: 60,
            neg_ratio: 2,
            seed: 4,
            ..TrainConfig::default()
        };
        let out = train(&g, &inc, &lg, &cfg, &tiny_model()).unwrap();
        let early = moving_average_loss(&out.history, 10, 10);
        let late = moving_average_loss(&out.history, 60, 10);
        assert!(late < early, "loss went {early} -> {late}");
    }

    #[test]
    fn lambda_zero_matches_plain_training() {
        let (g, inc, lg) = small_setup();
        let cfg = TrainConfig {
            epochs: 5,
            neg_ratio: 1,
            seed: 2,
            mode: TrainMode::Unpluggable,
            task: Some(TaskKind::LinkPrediction),
            lambda: 0.0,
            ..TrainConfig::default()
        };
        let data = TaskData::LinkPrediction {
            edges: g.pairwise_edges().iter().copied().collect(),
        };
        let joint = train_with_task(&g, &inc, &lg, &cfg, &tiny_model(), &data).unwrap();

        let plain_cfg = TrainConfig {
            mode: TrainMode::Pluggable,
            task: None,
            ..cfg
        };
        let plain = train(&g, &inc, &lg, &plain_cfg, &tiny_model()).unwrap();
        assert_eq!(joint.params, plain.params);
        for (a, b) in joint.history.iter().zip(&plain.history) {
            assert_eq!(a.pos_term, b.pos_term);
            assert_eq!(a.neg_term, b.neg_term);
        }
    }

    #[test]
    fn task_validation_errors() {
        let (g, inc, lg) = small_setup();
        let cfg = TrainConfig {
            mode: TrainMode::Unpluggable,
            task: Some(TaskKind::RatingRegression),
            ..TrainConfig::default()
        };
        let data = TaskData::LinkPrediction { edges: vec![] };
        assert!(train_with_task(&g, &inc, &lg, &cfg, &tiny_model(), &data).is_err());
    }

    #[test]
    fn auc_orders_scores() {
        let emb = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        // pos pair (0,1) scores 1; negs (0,2)=0, (0,3)=-1
        let auc = link_auc(&emb, &[(0, 1)], &[(0, 2), (0, 3)]);
        assert_eq!(auc, 1.0);
        let auc = link_auc(&emb, &[(0, 2)], &[(0, 1)]);
        assert_eq!(auc, 0.0);
        let auc = link_auc(&emb, &[(0, 2)], &[(1, 2)]);
        assert_eq!(auc, 0.5); // tie
    }

    #[test]
    fn split_edges_partitions_and_determinism() {
        let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, i + 10)).collect();
        let (train1, test1) = split_edges(&edges, 0.2, 7);
        let (train2, test2) = split_edges(&edges, 0.2, 7);
        assert_eq!(train1, train2);
        assert_eq!(test1, test2);
        assert_eq!(train1.len() + test1.len(), edges.len());
        assert_eq!(test1.len(), 2);
        let mut all: Vec<(usize, usize)> = train1.iter().chain(&test1).copied().collect();
        all.sort_unstable();
        let mut want = edges.clone();
        want.sort_unstable();
        assert_eq!(all, want);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            m_p: 1.0,
            m_n: 0.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            neg_ratio: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            mode: TrainMode::Unpluggable,
            task: None,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
