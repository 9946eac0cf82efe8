//! Social environment construction.
//!
//! The learned path fits a small network f(X|θ) whose (0,1) outputs are
//! per-node membership probabilities over C environments, trained so that
//! linked nodes share memberships (positive pairs) and non-adjacent nodes do
//! not (negative pairs):
//!
//! L = −E_{(u,v)∈E}[ln(1 − exp(−f_u·f_v))] + E_{(u,v)∉E}[f_u·f_v]
//!
//! Hyperedges are thresholded out of the membership matrix. Three simpler
//! constructors — feature clustering, greedy modularity communities, and
//! k-hop neighbourhoods — are provided for comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::rng;
use crate::train::{Optimizer, OptimizerKind};

/// Node-to-environment membership probabilities F (N×C), entries in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    values: Array2<f64>,
}

impl MembershipMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Numeric(
                "membership values must lie in [0, 1]".into(),
            ));
        }
        Ok(MembershipMatrix { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn env_count(&self) -> usize {
        self.values.ncols()
    }
}

/// The parameterized map f(X|θ): one rectified hidden layer, then a layer
/// squashed to (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipNet {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl MembershipNet {
    pub fn init(input_dim: usize, hidden: usize, env_count: usize, seed: u64) -> Self {
        let glorot = |rows: usize, cols: usize, idx: u64| {
            let mut r = rng::stream_indexed(seed, "env.init", idx);
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| r.gen_range(-bound..bound))
        };
        MembershipNet {
            w1: glorot(input_dim, hidden, 0),
            b1: Array2::zeros((1, hidden)),
            w2: glorot(hidden, env_count, 1),
            b2: Array2::zeros((1, env_count)),
        }
    }

    /// F = sigmoid(relu(X·W1 + b1)·W2 + b2), shape N×C.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let h = (x.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        (h.dot(&self.w2) + &self.b2).mapv(|v| 1.0 / (1.0 + (-v).exp()))
    }

    fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Optimization knobs for [`fit_membership`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvFitConfig {
    pub hidden: usize,
    pub neg_ratio: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for EnvFitConfig {
    fn default() -> Self {
        EnvFitConfig {
            hidden: 64,
            neg_ratio: 5,
            epochs: 200,
            learning_rate: 0.01,
        }
    }
}

/// Result of fitting the membership objective.
pub struct MembershipFit {
    pub net: MembershipNet,
    pub membership: MembershipMatrix,
    /// Per-epoch objective values.
    pub objective: Vec<f64>,
}

/// Learn memberships from features and connectivity. Positives are the given
/// edges; per positive, `neg_ratio` non-adjacent pairs are resampled each
/// epoch. Deterministic under seed.
pub fn fit_membership(
    x: &Array2<f64>,
    edges: &BTreeSet<(usize, usize)>,
    env_count: usize,
    cfg: &EnvFitConfig,
    seed: u64,
) -> Result<MembershipFit> {
    let n = x.nrows();
    if edges.is_empty() {
        return Err(Error::InvalidGraph(
            "membership fitting needs at least one edge".into(),
        ));
    }
    if env_count < 1 || env_count > n {
        return Err(Error::Config(format!(
            "env count {env_count} outside [1, {n}]"
        )));
    }
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidGraph(format!(
                "edge ({a}, {b}) references a node outside [0, {n})"
            )));
        }
    }
    let non_adjacent = n * (n - 1) / 2 - edges.len();
    if non_adjacent == 0 {
        return Err(Error::InvalidGraph(
            "complete graph leaves no negative pairs".into(),
        ));
    }

    let positives: Vec<(usize, usize)> = edges.iter().copied().collect();
    let mut net = MembershipNet::init(x.ncols(), cfg.hidden, env_count, seed);
    let mut opt = Optimizer::new(
        OptimizerKind::Adam,
        cfg.learning_rate,
        &[net.w1.dim(), net.b1.dim(), net.w2.dim(), net.b2.dim()],
    );
    let mut objective = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut er = rng::stream_indexed(seed, "env.negatives", epoch as u64);
        let target = positives.len() * cfg.neg_ratio;
        let mut negatives = Vec::with_capacity(target);
        let mut attempts = 0usize;
        while negatives.len() < target {
            attempts += 1;
            if attempts > target * 1000 + 1000 {
                return Err(Error::InvalidGraph(
                    "negative sampling stalled; graph too dense".into(),
                ));
            }
            let u = er.gen_range(0..n);
            let v = er.gen_range(0..n);
            if u != v && !edges.contains(&(u.min(v), u.max(v))) {
                negatives.push((u, v));
            }
        }

        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let w1 = tape.leaf(net.w1.clone());
        let b1 = tape.leaf(net.b1.clone());
        let w2 = tape.leaf(net.w2.clone());
        let b2 = tape.leaf(net.b2.clone());
        let lin = tape.matmul(xv, w1);
        let lin = tape.add_row(lin, b1);
        let h = tape.relu(lin);
        let lin = tape.matmul(h, w2);
        let lin = tape.add_row(lin, b2);
        let f = tape.sigmoid(lin);

        let dots = |tape: &mut Tape, pairs: &[(usize, usize)]| {
            let us: Vec<usize> = pairs.iter().map(|&(u, _)| u).collect();
            let vs: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
            let a = tape.gather_rows(f, Rc::new(us));
            let b = tape.gather_rows(f, Rc::new(vs));
            let prod = tape.mul(a, b);
            tape.row_sum(prod)
        };

        let d_pos = dots(&mut tape, &positives);
        let d_pos = tape.clamp_min(d_pos, 1e-9);
        let neg_d = tape.scale(d_pos, -1.0);
        let e = tape.exp(neg_d);
        let flipped = tape.scale(e, -1.0);
        let one_minus = tape.add_scalar(flipped, 1.0);
        let ln = tape.ln(one_minus);
        let pos_sum = tape.sum(ln);
        let pos_term = tape.scale(pos_sum, -1.0 / positives.len() as f64);

        let d_neg = dots(&mut tape, &negatives);
        let neg_sum = tape.sum(d_neg);
        let neg_term = tape.scale(neg_sum, 1.0 / negatives.len() as f64);

        let loss = tape.add(pos_term, neg_term);
        let loss_val = tape.scalar(loss);
        if !loss_val.is_finite() {
            return Err(Error::Numeric(format!(
                "membership objective diverged at epoch {epoch}"
            )));
        }
        objective.push(loss_val);

        let grads = tape.backward(loss);
        let grad_mats = vec![
            grads.get(w1).clone(),
            grads.get(b1).clone(),
            grads.get(w2).clone(),
            grads.get(b2).clone(),
        ];
        opt.step(&mut net.matrices_mut(), &grad_mats);
    }

    let membership = MembershipMatrix::new(net.forward(x))?;
    Ok(MembershipFit {
        net,
        membership,
        objective,
    })
}

/// Threshold memberships into hyperedges: u joins environment j when
/// F_uj ≥ τ, and always joins its argmax column (ties → lowest index), so no
/// node is left uncovered. Empty columns are dropped.
pub fn extract_hyperedges(f: &MembershipMatrix, tau: f64) -> Result<Vec<BTreeSet<usize>>> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::Config(format!("tau {tau} outside (0, 1)")));
    }
    let values = f.values();
    let (n, c) = values.dim();
    let mut columns = vec![BTreeSet::new(); c];
    for u in 0..n {
        let mut best = 0;
        for j in 0..c {
            if values[[u, j]] >= tau {
                columns[j].insert(u);
            }
            if values[[u, j]] > values[[u, best]] {
                best = j;
            }
        }
        columns[best].insert(u);
    }
    Ok(columns.into_iter().filter(|e| !e.is_empty()).collect())
}

/// k-means on feature rows; each nonempty cluster becomes a hyperedge.
pub fn hyperedges_from_clusters(
    x: &Array2<f64>,
    k: usize,
    seed: u64,
) -> Result<Vec<BTreeSet<usize>>> {
    let n = x.nrows();
    if k < 1 || k > n {
        return Err(Error::Config(format!("k {k} outside [1, {n}]")));
    }
    let mut r = rng::stream(seed, "env.kmeans");
    // initial centroids: k distinct rows, Fisher–Yates prefix
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = r.gen_range(i..n);
        order.swap(i, j);
    }
    let mut centroids: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| x.row(i).to_vec())
        .collect();
    let mut assignment = vec![0usize; n];

    for _ in 0..100 {
        let mut changed = false;
        for (u, assigned) in assignment.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.iter().enumerate() {
                let d: f64 = x
                    .row(u)
                    .iter()
                    .zip(cent)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *assigned != best {
                *assigned = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, cent) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&u| assignment[u] == c).collect();
            if members.is_empty() {
                continue; // keep the previous centroid
            }
            for (j, v) in cent.iter_mut().enumerate() {
                *v = members.iter().map(|&u| x[[u, j]]).sum::<f64>() / members.len() as f64;
            }
        }
    }

    let mut clusters = vec![BTreeSet::new(); k];
    for u in 0..n {
        clusters[assignment[u]].insert(u);
    }
    Ok(clusters.into_iter().filter(|e| !e.is_empty()).collect())
}

/// Weighted undirected graph state for one greedy-modularity level.
struct Level {
    /// neighbour weights per node, self-loops included under the node's own key
    adj: Vec<BTreeMap<usize, f64>>,
    degree: Vec<f64>, // k_u, self-loops counted twice
    two_m: f64,
}

impl Level {
    fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj = vec![BTreeMap::new(); n];
        let mut degree = vec![0.0; n];
        for &(a, b, w) in edges {
            if a == b {
                *adj[a].entry(a).or_insert(0.0) += w;
                degree[a] += 2.0 * w;
            } else {
                *adj[a].entry(b).or_insert(0.0) += w;
                *adj[b].entry(a).or_insert(0.0) += w;
                degree[a] += w;
                degree[b] += w;
            }
        }
        let two_m = degree.iter().sum();
        Level { adj, degree, two_m }
    }

    /// One complete local-move phase; returns (community per node, moved?).
    fn local_moves(&self) -> (Vec<usize>, bool) {
        let n = self.adj.len();
        let m = self.two_m / 2.0;
        let mut community: Vec<usize> = (0..n).collect();
        let mut sigma_tot: Vec<f64> = self.degree.clone();
        let mut moved_any = false;

        loop {
            let mut moved = false;
            for u in 0..n {
                let a = community[u];
                // weight from u to each adjacent community (excluding self-loop)
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                for (&v, &w) in &self.adj[u] {
                    if v != u {
                        *links.entry(community[v]).or_insert(0.0) += w;
                    }
                }
                let k_u = self.degree[u];
                let k_u_a = links.get(&a).copied().unwrap_or(0.0);
                let remove_gain = -k_u_a / m + (sigma_tot[a] - k_u) * k_u / (2.0 * m * m);

                let mut best_c = a;
                let mut best_gain = 0.0;
                for (&c, &k_u_c) in &links {
                    if c == a {
                        continue;
                    }
                    let insert_gain = k_u_c / m - sigma_tot[c] * k_u / (2.0 * m * m);
                    let gain = remove_gain + insert_gain;
                    if gain > best_gain + 1e-12 || (gain > best_gain - 1e-12 && gain > 1e-12 && c < best_c)
                    {
                        best_gain = gain;
                        best_c = c;
                    }
                }
                if best_c != a {
                    community[u] = best_c;
                    sigma_tot[a] -= k_u;
                    sigma_tot[best_c] += k_u;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (community, moved_any)
    }
}

/// Greedy modularity (Louvain-style) communities over pairwise edges,
/// deterministic without a seed. Communities of size ≥ 2 become hyperedges;
/// singletons are dropped.
pub fn hyperedges_from_communities(
    node_count: usize,
    edges: &BTreeSet<(usize, usize)>,
) -> Result<Vec<BTreeSet<usize>>> {
    if edges.is_empty() {
        return Err(Error::InvalidGraph("community detection needs edges".into()));
    }
    // members[c] = original nodes currently aggregated into node c
    let mut members: Vec<BTreeSet<usize>> = (0..node_count).map(|u| BTreeSet::from([u])).collect();
    let mut level_edges: Vec<(usize, usize, f64)> =
        edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
    let mut n = node_count;

    loop {
        let level = Level::from_edges(n, &level_edges);
        let (community, moved) = level.local_moves();
        if !moved {
            break;
        }
        // compact community ids in ascending order of first appearance
        let mut remap = BTreeMap::new();
        for &c in &community {
            let next = remap.len();
            remap.entry(c).or_insert(next);
        }
        let mut new_members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); remap.len()];
        for (u, &c) in community.iter().enumerate() {
            let id = remap[&c];
            new_members[id].extend(members[u].iter().copied());
        }
        let mut agg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(a, b, w) in &level_edges {
            let (ca, cb) = (remap[&community[a]], remap[&community[b]]);
            let key = (ca.min(cb), ca.max(cb));
            *agg.entry(key).or_insert(0.0) += w;
        }
        members = new_members;
        level_edges = agg.into_iter().map(|((a, b), w)| (a, b, w)).collect();
        n = members.len();
        if n == 1 {
            break;
        }
    }

    Ok(members.into_iter().filter(|c| c.len() >= 2).collect())
}

/// One hyperedge per node: the node plus everything within k hops.
pub fn hyperedges_from_khop(
    node_count: usize,
    edges: &BTreeSet<(usize, usize)>,
    k: usize,
) -> Result<Vec<BTreeSet<usize>>> {
    if k < 1 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let mut adj = vec![Vec::new(); node_count];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut out = Vec::with_capacity(node_count);
    for start in 0..node_count {
        let mut seen = BTreeSet::from([start]);
        let mut frontier = vec![start];
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &adj[u] {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out.push(seen);
    }
    Ok(out)
}
