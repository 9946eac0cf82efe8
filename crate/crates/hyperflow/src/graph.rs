//! Core graph structures: hypergraphs, incidence matrices, and line graphs.
//!
//! A hypergraph couples three views of the same population: node features,
//! pairwise social links, and hyperedges grouping nodes into environments.
//! Hyperedge weights W and node weights U scale the degree computations used
//! by the influence operator.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A weighted hypergraph over N nodes with both hyperedges and pairwise edges.
///
/// Hyperedges are stored as sorted node-id sets; duplicates are merged on
/// construction. Pairwise edges are undirected, stored once as (min, max).
#[derive(Debug, Clone)]
pub struct Hypergraph {
    node_count: usize,
    features: Array2<f64>,
    hyperedges: Vec<BTreeSet<usize>>,
    pairwise_edges: BTreeSet<(usize, usize)>,
    hyperedge_weights: Vec<f64>,
    node_weights: Vec<f64>,
}

impl Hypergraph {
    /// Build a hypergraph with default weights (W = hyperedge size, U = degree
    /// centrality floored at 1). Validates all structural invariants.
    pub fn new(
        features: Array2<f64>,
        hyperedges: Vec<BTreeSet<usize>>,
        pairwise_edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let node_count = features.nrows();

        let mut edges = BTreeSet::new();
        for (a, b) in pairwise_edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "pairwise edge ({a}, {b}) references a node outside [0, {node_count})"
                )));
            }
            edges.insert((a.min(b), a.max(b)));
        }

        let mut merged: Vec<BTreeSet<usize>> = Vec::new();
        let mut seen = BTreeSet::new();
        for e in hyperedges {
            if e.is_empty() {
                return Err(Error::InvalidGraph("empty hyperedge".into()));
            }
            if let Some(&u) = e.iter().next_back() {
                if u >= node_count {
                    return Err(Error::InvalidGraph(format!(
                        "hyperedge member {u} outside [0, {node_count})"
                    )));
                }
            }
            let key: Vec<usize> = e.iter().copied().collect();
            if seen.insert(key) {
                merged.push(e);
            }
        }

        let mut g = Hypergraph {
            node_count,
            features,
            hyperedges: merged,
            pairwise_edges: edges,
            hyperedge_weights: Vec::new(),
            node_weights: Vec::new(),
        };
        let (w, u) = default_weights(&g);
        g.hyperedge_weights = w;
        g.node_weights = u;
        Ok(g)
    }

    /// Replace W and U with explicit values; both must be strictly positive.
    pub fn with_weights(mut self, hyperedge_weights: Vec<f64>, node_weights: Vec<f64>) -> Result<Self> {
        if hyperedge_weights.len() != self.hyperedges.len() {
            return Err(Error::InvalidGraph(format!(
                "expected {} hyperedge weights, got {}",
                self.hyperedges.len(),
                hyperedge_weights.len()
            )));
        }
        if node_weights.len() != self.node_count {
            return Err(Error::InvalidGraph(format!(
                "expected {} node weights, got {}",
                self.node_count,
                node_weights.len()
            )));
        }
        if hyperedge_weights
            .iter()
            .chain(&node_weights)
            .any(|&w| w.is_nan() || w <= 0.0)
        {
            return Err(Error::InvalidGraph("weights must be strictly positive".into()));
        }
        self.hyperedge_weights = hyperedge_weights;
        self.node_weights = node_weights;
        Ok(self)
    }

    /// Swap in a different hyperedge list, revalidating and recomputing W.
    pub fn with_hyperedges(self, hyperedges: Vec<BTreeSet<usize>>) -> Result<Self> {
        Hypergraph::new(self.features, hyperedges, self.pairwise_edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn hyperedge_count(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn hyperedges(&self) -> &[BTreeSet<usize>] {
        &self.hyperedges
    }

    pub fn pairwise_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairwise_edges
    }

    pub fn hyperedge_weights(&self) -> &[f64] {
        &self.hyperedge_weights
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    /// Number of pairwise edges incident to `u`.
    pub fn pair_degree(&self, u: usize) -> usize {
        self.pairwise_edges
            .iter()
            .filter(|&&(a, b)| a == u || b == u)
            .count()
    }

    /// Neighbour lists over the pairwise edges.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(a, b) in &self.pairwise_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// Default weighting: W_k = |e_k| and U_u = pairwise degree of u, floored at 1
/// so nodes without links still carry positive weight.
pub fn default_weights(g: &Hypergraph) -> (Vec<f64>, Vec<f64>) {
    let w = g.hyperedges.iter().map(|e| e.len() as f64).collect();
    let mut deg = vec![0usize; g.node_count];
    for &(a, b) in &g.pairwise_edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    let u = deg.into_iter().map(|d| (d.max(1)) as f64).collect();
    (w, u)
}

/// Binary incidence matrix H (N×M) with weighted degrees precomputed:
/// D^v(u) = Σ_k W_k·H_uk and D^e(k) = Σ_u U_u·H_uk.
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    matrix: CsrMatrix,
    node_degrees: Vec<f64>,
    edge_degrees: Vec<f64>,
}

impl IncidenceMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn node_degrees(&self) -> &[f64] {
        &self.node_degrees
    }

    pub fn edge_degrees(&self) -> &[f64] {
        &self.edge_degrees
    }

    pub fn node_count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn hyperedge_count(&self) -> usize {
        self.matrix.cols()
    }
}

/// Build the incidence matrix and weighted degree vectors of a hypergraph.
pub fn build_incidence(g: &Hypergraph) -> Result<IncidenceMatrix> {
    if g.hyperedges.is_empty() {
        return Err(Error::InvalidGraph("no environments".into()));
    }
    let mut triplets = Vec::new();
    let mut node_degrees = vec![0.0; g.node_count];
    let mut edge_degrees = vec![0.0; g.hyperedges.len()];
    for (k, e) in g.hyperedges.iter().enumerate() {
        for &u in e {
            triplets.push((u, k, 1.0));
            node_degrees[u] += g.hyperedge_weights[k];
            edge_degrees[k] += g.node_weights[u];
        }
    }
    Ok(IncidenceMatrix {
        matrix: CsrMatrix::from_triplets(g.node_count, g.hyperedges.len(), &triplets),
        node_degrees,
        edge_degrees,
    })
}

/// Symmetric binary adjacency A^p over the pairwise edges, with its degree
/// vector D^p. Self-loops are added when requested (as in the GCN layer).
pub fn pairwise_adjacency(g: &Hypergraph, add_self_loops: bool) -> (CsrMatrix, Vec<f64>) {
    let mut triplets = Vec::new();
    for &(a, b) in &g.pairwise_edges {
        triplets.push((a, b, 1.0));
        triplets.push((b, a, 1.0));
    }
    if add_self_loops {
        for u in 0..g.node_count {
            triplets.push((u, u, 1.0));
        }
    }
    let adj = CsrMatrix::from_triplets(g.node_count, g.node_count, &triplets);
    let mut degrees = vec![0.0; g.node_count];
    for (r, _, v) in adj.iter() {
        degrees[r] += v;
    }
    (adj, degrees)
}

/// Line graph: one node per hyperedge, undirected edges between hyperedges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl LineGraph {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("line graph self-loop on {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "line graph edge ({a}, {b}) outside [0, {node_count})"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(LineGraph {
            node_count,
            edges: set,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adjacency with self-loops and its degree vector, for propagation.
    pub fn adjacency_with_self_loops(&self) -> (CsrMatrix, Vec<f64>) {
        let mut triplets = Vec::new();
        for &(a, b) in &self.edges {
            triplets.push((a, b, 1.0));
            triplets.push((b, a, 1.0));
        }
        for i in 0..self.node_count {
            triplets.push((i, i, 1.0));
        }
        let adj = CsrMatrix::from_triplets(self.node_count, self.node_count, &triplets);
        let mut degrees = vec![0.0; self.node_count];
        for (r, _, v) in adj.iter() {
            degrees[r] += v;
        }
        (adj, degrees)
    }
}
