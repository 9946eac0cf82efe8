//! The influence network: hypergraph and pairwise encoders, line-graph
//! propagation, and the reconstruction decoder.
//!
//! The hypergraph branch propagates features through the influence operator
//! Θ = (D^v)^{-1/2} U H W (D^e)^{-1} Hᵀ U (D^v)^{-1/2}, summed over K hops with
//! decay γ. The pairwise branch is a symmetric-normalized graph convolution.
//! Their concatenation is pushed onto the line graph (one hyperedge = one
//! super node), propagated once, pulled back to nodes, and decoded to feature
//! reconstructions by a small MLP.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{pairwise_adjacency, Hypergraph, IncidenceMatrix, LineGraph};
use crate::rng;
use crate::sparse::CsrMatrix;

/// Pointwise nonlinearity used by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => x.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => x.mapv(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Identity => x.clone(),
        }
    }

    pub fn apply_tape(&self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(v),
            Activation::Sigmoid => tape.sigmoid(v),
            Activation::Identity => v,
        }
    }
}

/// The influence operator Θ (N×N, sparse, symmetric). Rows and columns of
/// nodes belonging to no hyperedge are zero.
pub fn theta(inc: &IncidenceMatrix, hyperedge_weights: &[f64], node_weights: &[f64]) -> CsrMatrix {
    let n = inc.node_count();
    // s_u = U_u / sqrt(D^v_u), zero where D^v_u = 0; t_k = W_k / D^e_k
    let s: Vec<f64> = (0..n)
        .map(|u| {
            let dv = inc.node_degrees()[u];
            if dv > 0.0 {
                node_weights[u] / dv.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let t: Vec<f64> = (0..inc.hyperedge_count())
        .map(|k| hyperedge_weights[k] / inc.edge_degrees()[k])
        .collect();

    // Θ = (S·H·T)·(S·H)ᵀ with S, T diagonal
    let mut left = Vec::new();
    let mut right_t = Vec::new(); // (S·H)ᵀ, i.e. M×N
    for (u, k, _) in inc.matrix().iter() {
        left.push((u, k, s[u] * t[k]));
        right_t.push((k, u, s[u]));
    }
    let left = CsrMatrix::from_triplets(n, inc.hyperedge_count(), &left);
    let right_t = CsrMatrix::from_triplets(inc.hyperedge_count(), n, &right_t);
    left.matmul(&right_t)
}

/// Decayed hop sum Θ_Σ = Σ_{k=1..K} γ^{k-1} Θ^k, materialized sparse.
pub fn theta_sum(theta: &CsrMatrix, k_hops: usize, gamma: f64) -> CsrMatrix {
    assert!(k_hops >= 1, "need at least one hop");
    let mut triplets = Vec::new();
    let mut power = theta.clone();
    let mut decay = 1.0;
    for hop in 0..k_hops {
        if hop > 0 {
            if decay == 0.0 {
                break;
            }
            power = power.matmul(theta);
        }
        for (r, c, v) in power.iter() {
            triplets.push((r, c, decay * v));
        }
        decay *= gamma;
    }
    CsrMatrix::from_triplets(theta.rows(), theta.cols(), &triplets)
}

/// Hypergraph propagation matrix Θ_Σ − Diag(Θ_Σ) + I: self-influence is
/// replaced by an identity pass-through.
pub fn propagation_matrix(theta_sum: &CsrMatrix) -> CsrMatrix {
    theta_sum.with_diagonal(1.0)
}

/// Symmetric normalization D^{-1/2} A D^{-1/2}.
pub fn normalized_adjacency(adj: &CsrMatrix, degrees: &[f64]) -> Result<CsrMatrix> {
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| {
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::Numeric("zero-degree row in adjacency normalization".into()))
            }
        })
        .collect::<Result<_>>()?;
    let triplets: Vec<(usize, usize, f64)> = adj
        .iter()
        .map(|(r, c, v)| (r, c, inv_sqrt[r] * v * inv_sqrt[c]))
        .collect();
    Ok(CsrMatrix::from_triplets(adj.rows(), adj.cols(), &triplets))
}

fn ensure_finite(name: &str, x: &Array2<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {name}")))
    }
}

/// One hypergraph layer: f((Θ_Σ − Diag(Θ_Σ) + I)·X·P).
pub fn hyper_layer(
    x: &Array2<f64>,
    theta_sum: &CsrMatrix,
    p: &Array2<f64>,
    activation: Activation,
) -> Result<Array2<f64>> {
    ensure_finite("hyper layer input", x)?;
    let prop = propagation_matrix(theta_sum);
    Ok(activation.apply(&prop.dot_dense(x).dot(p)))
}

/// One pairwise layer: f((D^p)^{-1/2} A^p (D^p)^{-1/2}·X·P).
pub fn pair_layer(
    x: &Array2<f64>,
    adj: &CsrMatrix,
    degrees: &[f64],
    p: &Array2<f64>,
    activation: Activation,
) -> Result<Array2<f64>> {
    ensure_finite("pair layer input", x)?;
    let norm = normalized_adjacency(adj, degrees)?;
    Ok(activation.apply(&norm.dot_dense(x).dot(p)))
}

/// All trainable matrices of the model, in a fixed flattening order used by
/// the optimizer and the checkpoint format.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper_layers: Vec<Array2<f64>>,
    pub pair_layers: Vec<Array2<f64>>,
    pub line_layers: Vec<Array2<f64>>,
    pub decoder_hidden: Array2<f64>,
    pub decoder_hidden_bias: Array2<f64>,
    pub decoder_out: Array2<f64>,
    pub decoder_out_bias: Array2<f64>,
    pub activation: Activation,
    pub k_hops: usize,
    pub gamma: f64,
}

/// Layer widths and operator knobs; the shape half of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hyper_dims: Vec<usize>,
    pub pair_dims: Vec<usize>,
    pub k_hops: usize,
    pub gamma: f64,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hyper_dims: vec![32, 16],
            pair_dims: vec![32, 16],
            k_hops: 2,
            gamma: 0.5,
            activation: Activation::Relu,
        }
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl ModelParams {
    /// Random initialization for input feature width `d`, deterministic under
    /// seed. Encoder output width is hyper_dims.last() + pair_dims.last();
    /// the decoder narrows to half its input, then maps linearly back to `d`.
    pub fn init(cfg: &ModelConfig, d: usize, seed: u64) -> Result<Self> {
        if cfg.hyper_dims.is_empty() || cfg.pair_dims.is_empty() {
            return Err(Error::Config("at least one layer per branch".into()));
        }
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", cfg.gamma)));
        }
        if cfg.k_hops < 1 {
            return Err(Error::Config("k_hops must be >= 1".into()));
        }
        let mut idx = 0u64;
        let mut next = |rows: usize, cols: usize| {
            let mut r = rng::stream_indexed(seed, "model.init", idx);
            idx += 1;
            glorot(rows, cols, &mut r)
        };

        let mut hyper_layers = Vec::new();
        let mut prev = d;
        for &w in &cfg.hyper_dims {
            hyper_layers.push(next(prev, w));
            prev = w;
        }
        let d_h = prev;

        let mut pair_layers = Vec::new();
        let mut prev = d;
        for &w in &cfg.pair_dims {
            pair_layers.push(next(prev, w));
            prev = w;
        }
        let d_p = prev;

        let d_enc = d_h + d_p;
        let line_layers = vec![next(d_enc, d_enc)];

        let dec_in = d_enc + d_enc; // R* ⊕ R^h ⊕ R^p
        let dec_hidden_w = (dec_in / 2).max(1);
        let decoder_hidden = next(dec_in, dec_hidden_w);
        let decoder_out = next(dec_hidden_w, d);

        Ok(ModelParams {
            hyper_layers,
            pair_layers,
            line_layers,
            decoder_hidden,
            decoder_hidden_bias: Array2::zeros((1, dec_hidden_w)),
            decoder_out,
            decoder_out_bias: Array2::zeros((1, d)),
            activation: cfg.activation,
            k_hops: cfg.k_hops,
            gamma: cfg.gamma,
        })
    }

    /// Encoder output width d_h + d_p.
    pub fn encode_dim(&self) -> usize {
        self.hyper_layers.last().unwrap().ncols() + self.pair_layers.last().unwrap().ncols()
    }

    /// (name, matrix) pairs in flattening order.
    pub fn named_matrices(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, m) in self.hyper_layers.iter().enumerate() {
            out.push((format!("hyper.{i}"), m));
        }
        for (i, m) in self.pair_layers.iter().enumerate() {
            out.push((format!("pair.{i}"), m));
        }
        for (i, m) in self.line_layers.iter().enumerate() {
            out.push((format!("line.{i}"), m));
        }
        out.push(("decoder.hidden.w".into(), &self.decoder_hidden));
        out.push(("decoder.hidden.b".into(), &self.decoder_hidden_bias));
        out.push(("decoder.out.w".into(), &self.decoder_out));
        out.push(("decoder.out.b".into(), &self.decoder_out_bias));
        out
    }

    /// Mutable views in the same order as [`Self::named_matrices`].
    pub fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        out.extend(self.hyper_layers.iter_mut());
        out.extend(self.pair_layers.iter_mut());
        out.extend(self.line_layers.iter_mut());
        out.push(&mut self.decoder_hidden);
        out.push(&mut self.decoder_hidden_bias);
        out.push(&mut self.decoder_out);
        out.push(&mut self.decoder_out_bias);
        out
    }
}

/// Constant sparse operators shared by every forward pass.
#[derive(Clone)]
pub struct Operators {
    pub prop: Rc<CsrMatrix>,      // Θ_Σ − Diag + I
    pub pair_norm: Rc<CsrMatrix>, // normalized A^p with self-loops
    pub incidence: Rc<CsrMatrix>, // H
    pub line_norm: Rc<CsrMatrix>, // normalized line-graph adjacency
}

impl Operators {
    pub fn build(
        g: &Hypergraph,
        inc: &IncidenceMatrix,
        lg: &LineGraph,
        k_hops: usize,
        gamma: f64,
    ) -> Result<Self> {
        if lg.node_count() != g.hyperedge_count() {
            return Err(Error::InvalidGraph(format!(
                "line graph has {} nodes but hypergraph has {} hyperedges",
                lg.node_count(),
                g.hyperedge_count()
            )));
        }
        if g.hyperedge_count() == 0 {
            return Err(Error::InvalidGraph("no environments".into()));
        }
        let th = theta(inc, g.hyperedge_weights(), g.node_weights());
        let ts = theta_sum(&th, k_hops, gamma);
        let (adj, deg) = pairwise_adjacency(g, true);
        let (ladj, ldeg) = lg.adjacency_with_self_loops();
        Ok(Operators {
            prop: Rc::new(propagation_matrix(&ts)),
            pair_norm: Rc::new(normalized_adjacency(&adj, &deg)?),
            incidence: Rc::new(inc.matrix().clone()),
            line_norm: Rc::new(normalized_adjacency(&ladj, &ldeg)?),
        })
    }
}

/// Everything a forward pass produces, node embeddings through reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub r_h: Array2<f64>,
    pub r_p: Array2<f64>,
    pub r_encode: Array2<f64>,
    pub x_circ: Array2<f64>,
    pub r_star: Array2<f64>,
    pub x_hat: Array2<f64>,
}

/// Model parameters registered on a tape, same order as `named_matrices`.
pub struct ParamVars {
    pub all: Vec<Var>,
    hyper: Vec<Var>,
    pair: Vec<Var>,
    line: Vec<Var>,
    decoder_hidden: Var,
    decoder_hidden_bias: Var,
    decoder_out: Var,
    decoder_out_bias: Var,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let hyper: Vec<Var> = params.hyper_layers.iter().map(|m| tape.leaf(m.clone())).collect();
        let pair: Vec<Var> = params.pair_layers.iter().map(|m| tape.leaf(m.clone())).collect();
        let line: Vec<Var> = params.line_layers.iter().map(|m| tape.leaf(m.clone())).collect();
        let decoder_hidden = tape.leaf(params.decoder_hidden.clone());
        let decoder_hidden_bias = tape.leaf(params.decoder_hidden_bias.clone());
        let decoder_out = tape.leaf(params.decoder_out.clone());
        let decoder_out_bias = tape.leaf(params.decoder_out_bias.clone());
        let mut all = Vec::new();
        all.extend(&hyper);
        all.extend(&pair);
        all.extend(&line);
        all.push(decoder_hidden);
        all.push(decoder_hidden_bias);
        all.push(decoder_out);
        all.push(decoder_out_bias);
        ParamVars {
            all,
            hyper,
            pair,
            line,
            decoder_hidden,
            decoder_hidden_bias,
            decoder_out,
            decoder_out_bias,
        }
    }
}

/// Tape handles to the forward pass outputs.
pub struct ForwardVars {
    pub r_h: Var,
    pub r_p: Var,
    pub r_encode: Var,
    pub x_circ: Var,
    pub r_star: Var,
    pub x_hat: Var,
}

/// Run the full differentiable forward pass on `tape`.
pub fn forward_on_tape(
    tape: &mut Tape,
    x: Var,
    ops: &Operators,
    pv: &ParamVars,
    activation: Activation,
) -> ForwardVars {
    let mut h = x;
    for &p in &pv.hyper {
        let prop = tape.spmm(Rc::clone(&ops.prop), h);
        let lin = tape.matmul(prop, p);
        h = activation.apply_tape(tape, lin);
    }
    let mut q = x;
    for &p in &pv.pair {
        let prop = tape.spmm(Rc::clone(&ops.pair_norm), q);
        let lin = tape.matmul(prop, p);
        q = activation.apply_tape(tape, lin);
    }
    let r_encode = tape.concat_cols(h, q);

    let mut circ = tape.spmm_t(Rc::clone(&ops.incidence), r_encode);
    for &p in &pv.line {
        let prop = tape.spmm(Rc::clone(&ops.line_norm), circ);
        let lin = tape.matmul(prop, p);
        circ = activation.apply_tape(tape, lin);
    }
    let r_star = tape.spmm(Rc::clone(&ops.incidence), circ);

    let dec_in = tape.concat_cols(r_star, r_encode);
    let lin = tape.matmul(dec_in, pv.decoder_hidden);
    let lin = tape.add_row(lin, pv.decoder_hidden_bias);
    let hidden = activation.apply_tape(tape, lin);
    let out = tape.matmul(hidden, pv.decoder_out);
    let x_hat = tape.add_row(out, pv.decoder_out_bias);

    ForwardVars {
        r_h: h,
        r_p: q,
        r_encode,
        x_circ: circ,
        r_star,
        x_hat,
    }
}

/// Full forward pass without gradients.
pub fn forward(g: &Hypergraph, ops: &Operators, params: &ModelParams) -> Result<EmbeddingSet> {
    ensure_finite("features", g.features())?;
    let mut tape = Tape::new();
    let x = tape.leaf(g.features().clone());
    let pv = ParamVars::register(&mut tape, params);
    let fv = forward_on_tape(&mut tape, x, ops, &pv, params.activation);
    let set = EmbeddingSet {
        r_h: tape.value(fv.r_h).clone(),
        r_p: tape.value(fv.r_p).clone(),
        r_encode: tape.value(fv.r_encode).clone(),
        x_circ: tape.value(fv.x_circ).clone(),
        r_star: tape.value(fv.r_star).clone(),
        x_hat: tape.value(fv.x_hat).clone(),
    };
    ensure_finite("reconstruction", &set.x_hat)?;
    Ok(set)
}

/// Run both encoder branches and concatenate: (R^h, R^p, R^h ⊕ R^p).
pub fn encode(
    g: &Hypergraph,
    theta_sum_mat: &CsrMatrix,
    adj: &CsrMatrix,
    degrees: &[f64],
    params: &ModelParams,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    if params.hyper_layers.is_empty() || params.pair_layers.is_empty() {
        return Err(Error::Config("at least one layer per branch".into()));
    }
    let mut h = g.features().clone();
    for p in &params.hyper_layers {
        h = hyper_layer(&h, theta_sum_mat, p, params.activation)?;
    }
    let mut q = g.features().clone();
    for p in &params.pair_layers {
        q = pair_layer(&q, adj, degrees, p, params.activation)?;
    }
    let mut r_encode = Array2::zeros((h.nrows(), h.ncols() + q.ncols()));
    r_encode.slice_mut(ndarray::s![.., ..h.ncols()]).assign(&h);
    r_encode.slice_mut(ndarray::s![.., h.ncols()..]).assign(&q);
    Ok((h, q, r_encode))
}

/// Push node embeddings onto the line graph and pull them back:
/// X° = Hᵀ·R, one propagation pass, R* = H·X°.
pub fn line_propagate(
    inc: &IncidenceMatrix,
    r_encode: &Array2<f64>,
    lg: &LineGraph,
    params: &ModelParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if lg.node_count() == 0 {
        return Err(Error::InvalidGraph("line graph has no nodes".into()));
    }
    if lg.node_count() != inc.hyperedge_count() {
        return Err(Error::InvalidGraph(
            "line graph node count must match hyperedge count".into(),
        ));
    }
    let (ladj, ldeg) = lg.adjacency_with_self_loops();
    let norm = normalized_adjacency(&ladj, &ldeg)?;
    let mut circ = inc.matrix().transpose_dot_dense(r_encode);
    for p in &params.line_layers {
        circ = params.activation.apply(&norm.dot_dense(&circ).dot(p));
    }
    let r_star = inc.matrix().dot_dense(&circ);
    Ok((circ, r_star))
}

/// Decode reconstructions X̂ = MLP(R* ⊕ R^h ⊕ R^p).
pub fn reconstruct(
    r_star: &Array2<f64>,
    r_h: &Array2<f64>,
    r_p: &Array2<f64>,
    params: &ModelParams,
) -> Result<Array2<f64>> {
    let width = r_star.ncols() + r_h.ncols() + r_p.ncols();
    if width != params.decoder_hidden.nrows() {
        return Err(Error::Config(format!(
            "decoder expects input width {}, got {width}",
            params.decoder_hidden.nrows()
        )));
    }
    let n = r_star.nrows();
    let mut dec_in = Array2::zeros((n, width));
    dec_in.slice_mut(ndarray::s![.., ..r_star.ncols()]).assign(r_star);
    dec_in
        .slice_mut(ndarray::s![.., r_star.ncols()..r_star.ncols() + r_h.ncols()])
        .assign(r_h);
    dec_in
        .slice_mut(ndarray::s![.., r_star.ncols() + r_h.ncols()..])
        .assign(r_p);
    let hidden = params
        .activation
        .apply(&(dec_in.dot(&params.decoder_hidden) + &params.decoder_hidden_bias));
    Ok(hidden.dot(&params.decoder_out) + &params.decoder_out_bias)
}
