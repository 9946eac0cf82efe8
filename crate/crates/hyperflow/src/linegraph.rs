//! Line graph construction from a hypergraph.
//!
//! The production path estimates hyperedge co-occurrence with short random
//! walks on the node/hyperedge bipartite graph and samples line-graph edges
//! from the resulting pair multiset. The exact Jaccard similarity of
//! hyperedge pairs is kept alongside as a slow oracle and for the Bernoulli
//! generative variant.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Hypergraph, LineGraph};
use crate::rng;

/// Multiset of unordered hyperedge-index pairs recorded by the walks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkMultiset {
    pair_counts: BTreeMap<(usize, usize), u64>,
    total: u64,
    hyperedge_count: usize,
}

impl WalkMultiset {
    pub fn pair_counts(&self) -> &BTreeMap<(usize, usize), u64> {
        &self.pair_counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn hyperedge_count(&self) -> usize {
        self.hyperedge_count
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Run `repeats` random walks of at most `max_len` hops from every hyperedge.
///
/// Each hop picks a member of the current hyperedge uniformly, then moves to a
/// uniformly chosen *other* hyperedge containing that member, recording the
/// traversed pair. A member belonging to no other hyperedge ends the walk.
/// Walks run in parallel with per-walk RNG streams, so the counts do not
/// depend on the worker count.
pub fn random_walk_multiset(
    g: &Hypergraph,
    max_len: usize,
    repeats: usize,
    seed: u64,
) -> WalkMultiset {
    assert!(max_len >= 1 && repeats >= 1, "walk needs max_len, repeats >= 1");
    let m = g.hyperedge_count();
    let members: Vec<Vec<usize>> = g
        .hyperedges()
        .iter()
        .map(|e| e.iter().copied().collect())
        .collect();
    let mut node_to_edges = vec![Vec::new(); g.node_count()];
    for (k, e) in members.iter().enumerate() {
        for &u in e {
            node_to_edges[u].push(k);
        }
    }

    let pair_counts = (0..repeats * m)
        .into_par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<(usize, usize), u64>, task| {
            let start = task % m;
            let mut rng = rng::stream_indexed(seed, "line.walk", task as u64);
            let mut cur = start;
            for _ in 0..max_len {
                let u = members[cur][rng.gen_range(0..members[cur].len())];
                let others: Vec<usize> = node_to_edges[u]
                    .iter()
                    .copied()
                    .filter(|&k| k != cur)
                    .collect();
                if others.is_empty() {
                    break;
                }
                let next = others[rng.gen_range(0..others.len())];
                let key = (cur.min(next), cur.max(next));
                *acc.entry(key).or_insert(0) += 1;
                cur = next;
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });

    let total = pair_counts.values().sum();
    WalkMultiset {
        pair_counts,
        total,
        hyperedge_count: m,
    }
}

/// Draw `m` pairs i.i.d. with probability proportional to multiset count,
/// deduplicate, and return them as a line graph.
pub fn sample_line_edges(multiset: &WalkMultiset, m: usize, seed: u64) -> LineGraph {
    assert!(m >= 1, "need at least one draw");
    if multiset.is_empty() {
        return LineGraph::new(multiset.hyperedge_count, []).expect("empty line graph");
    }
    let pairs: Vec<(usize, usize)> = multiset.pair_counts.keys().copied().collect();
    let weights: Vec<u64> = multiset.pair_counts.values().copied().collect();
    let dist = WeightedIndex::new(&weights).expect("positive counts");
    let mut rng = rng::stream(seed, "line.sample");
    let edges: Vec<(usize, usize)> = (0..m).map(|_| pairs[dist.sample(&mut rng)]).collect();
    LineGraph::new(multiset.hyperedge_count, edges).expect("pairs are valid line edges")
}

/// Symmetric matrix of pairwise hyperedge similarities, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::InvalidGraph("similarity matrix must be square".into()));
        }
        for i in 0..values.nrows() {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidGraph("similarity diagonal must be zero".into()));
            }
            for j in 0..values.ncols() {
                let s = values[[i, j]];
                if !(0.0..=1.0).contains(&s) || s != values[[j, i]] {
                    return Err(Error::InvalidGraph(
                        "similarities must be symmetric values in [0,1]".into(),
                    ));
                }
            }
        }
        Ok(SimilarityMatrix { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn hyperedge_count(&self) -> usize {
        self.values.nrows()
    }
}

/// Exact Jaccard similarity |e_i ∩ e_j| / |e_i ∪ e_j| for every hyperedge
/// pair. Quadratic in M; used as the reference the walk estimator is tested
/// against, and as input to the Bernoulli variant.
pub fn exact_similarity(g: &Hypergraph) -> SimilarityMatrix {
    let m = g.hyperedge_count();
    let edges = g.hyperedges();
    let mut values = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let inter = edges[i].intersection(&edges[j]).count();
            let union = edges[i].len() + edges[j].len() - inter;
            let s = inter as f64 / union as f64;
            values[[i, j]] = s;
            values[[j, i]] = s;
        }
    }
    SimilarityMatrix { values }
}

/// Include each pair (i, j), i<j, independently with probability s_ij.
pub fn bernoulli_line_graph(s: &SimilarityMatrix, seed: u64) -> LineGraph {
    let m = s.hyperedge_count();
    let mut rng = rng::stream(seed, "line.bernoulli");
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let p = s.get(i, j);
            if p > 0.0 && rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    LineGraph::new(m, edges).expect("generated pairs are valid")
}

/// Exact one-step co-occurrence distribution over unordered hyperedge pairs:
/// the walk's single-hop transition mass computed by enumerating every
/// (start, member, next) triple. Normalized over recorded pairs.
pub fn one_step_pair_distribution(g: &Hypergraph) -> BTreeMap<(usize, usize), f64> {
    let members: Vec<Vec<usize>> = g
        .hyperedges()
        .iter()
        .map(|e| e.iter().copied().collect())
        .collect();
    let mut node_to_edges = vec![Vec::new(); g.node_count()];
    for (k, e) in members.iter().enumerate() {
        for &u in e {
            node_to_edges[u].push(k);
        }
    }
    let mut mass: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (start, mems) in members.iter().enumerate() {
        let p_member = 1.0 / mems.len() as f64;
        for &u in mems {
            let others: Vec<usize> = node_to_edges[u]
                .iter()
                .copied()
                .filter(|&k| k != start)
                .collect();
            if others.is_empty() {
                continue;
            }
            let p_next = p_member / others.len() as f64;
            for next in others {
                let key = (start.min(next), start.max(next));
                *mass.entry(key).or_insert(0.0) += p_next;
            }
        }
    }
    let z: f64 = mass.values().sum();
    if z > 0.0 {
        for v in mass.values_mut() {
            *v /= z;
        }
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::BTreeSet;

    fn graph(n: usize, hyperedges: &[&[usize]]) -> Hypergraph {
        let sets: Vec<BTreeSet<usize>> = hyperedges
            .iter()
            .map(|e| e.iter().copied().collect())
            .collect();
        Hypergraph::new(Array2::zeros((n, 1)), sets, []).unwrap()
    }

    #[test]
    fn single_hyperedge_records_nothing() {
        let g = graph(3, &[&[0, 1, 2]]);
        let c = random_walk_multiset(&g, 3, 50, 7);
        assert!(c.is_empty());
    }

    #[test]
    fn disjoint_hyperedges_record_nothing() {
        let g = graph(2, &[&[0], &[1]]);
        let c = random_walk_multiset(&g, 2, 50, 7);
        assert!(c.is_empty());
    }

    #[test]
    fn shared_node_path_records_only_that_pair() {
        // from {0,1}: member 1 (p=1/2) is the only door to {1,2}
        let g = graph(3, &[&[0, 1], &[1, 2]]);
        let c = random_walk_multiset(&g, 1, 200, 11);
        assert_eq!(c.pair_counts().keys().copied().collect::<Vec<_>>(), vec![(0, 1)]);
        let moved = c.total() as f64 / 400.0; // 2 starts × 200 repeats
        assert!((moved - 0.5).abs() < 0.1, "move rate {moved}");
    }

    #[test]
    fn walks_are_seed_deterministic_and_thread_independent() {
        let g = graph(6, &[&[0, 1, 2], &[2, 3], &[3, 4, 5], &[0, 5]]);
        let a = random_walk_multiset(&g, 3, 100, 42);
        let b = random_walk_multiset(&g, 3, 100, 42);
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| random_walk_multiset(&g, 3, 100, 42));
        assert_eq!(a, c);
    }

    #[test]
    fn one_step_frequencies_approach_exact_distribution() {
        let g = graph(6, &[&[0, 1, 2], &[2, 3], &[3, 4, 5], &[0, 5], &[1, 3, 5]]);
        let exact = one_step_pair_distribution(&g);
        let c = random_walk_multiset(&g, 1, 5000, 3);
        let total = c.total() as f64;
        let mut tv = 0.0;
        let mut keys: BTreeSet<(usize, usize)> = exact.keys().copied().collect();
        keys.extend(c.pair_counts().keys());
        for k in keys {
            let emp = c.pair_counts().get(&k).map_or(0.0, |&v| v as f64 / total);
            let ex = exact.get(&k).copied().unwrap_or(0.0);
            tv += (emp - ex).abs();
        }
        assert!(tv / 2.0 < 0.05, "total variation {}", tv / 2.0);
    }

    #[test]
    fn sampling_single_pair_multiset() {
        let g = graph(3, &[&[0, 1], &[1, 2]]);
        let c = random_walk_multiset(&g, 1, 50, 5);
        let lg = sample_line_edges(&c, 10, 9);
        assert_eq!(lg.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn sampling_empty_multiset_gives_empty_graph() {
        let g = graph(3, &[&[0, 1, 2]]);
        let c = random_walk_multiset(&g, 1, 10, 5);
        let lg = sample_line_edges(&c, 5, 9);
        assert_eq!(lg.edge_count(), 0);
        assert_eq!(lg.node_count(), 1);
    }

    #[test]
    fn sampling_respects_multiset_frequencies() {
        let c = WalkMultiset {
            pair_counts: [((0, 1), 9u64), ((1, 2), 1u64)].into_iter().collect(),
            total: 10,
            hyperedge_count: 3,
        };
        let mut hits = 0;
        for trial in 0..10_000 {
            let lg = sample_line_edges(&c, 1, trial);
            if lg.edges().contains(&(0, 1)) {
                hits += 1;
            }
        }
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.9).abs() < 0.02, "selection rate {rate}");
    }

    #[test]
    fn sampled_edges_come_from_the_multiset() {
        let g = graph(6, &[&[0, 1, 2], &[2, 3], &[3, 4, 5], &[0, 5]]);
        let c = random_walk_multiset(&g, 3, 100, 13);
        let lg = sample_line_edges(&c, 25, 17);
        for e in lg.edges() {
            assert!(c.pair_counts().contains_key(e));
        }
    }

    #[test]
    fn jaccard_oracle_hand_cases() {
        let g = graph(3, &[&[0, 1], &[1, 2]]);
        let s = exact_similarity(&g);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.get(0, 0), 0.0);

        let g = graph(5, &[&[0, 1, 2], &[3, 4]]);
        assert_eq!(exact_similarity(&g).get(0, 1), 0.0);
    }

    #[test]
    fn jaccard_is_permutation_equivariant() {
        let g1 = graph(4, &[&[0, 1], &[1, 2, 3], &[0, 3]]);
        let g2 = graph(4, &[&[0, 3], &[0, 1], &[1, 2, 3]]); // rotated labels
        let s1 = exact_similarity(&g1);
        let s2 = exact_similarity(&g2);
        // hyperedge k of g1 is hyperedge (k+1) mod 3 of g2
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s1.get(i, j), s2.get((i + 1) % 3, (j + 1) % 3));
            }
        }
    }

    #[test]
    fn bernoulli_extremes() {
        let zero = SimilarityMatrix::new(Array2::zeros((3, 3))).unwrap();
        assert_eq!(bernoulli_line_graph(&zero, 1).edge_count(), 0);

        let mut sure = Array2::zeros((2, 2));
        sure[[0, 1]] = 1.0;
        sure[[1, 0]] = 1.0;
        let sure = SimilarityMatrix::new(sure).unwrap();
        for seed in 0..50 {
            assert_eq!(bernoulli_line_graph(&sure, seed).edge_count(), 1);
        }
    }

    #[test]
    fn bernoulli_half_rate() {
        let s = SimilarityMatrix::new(array![[0.0, 0.5], [0.5, 0.0]]).unwrap();
        let mut hits = 0;
        for seed in 0..10_000 {
            if bernoulli_line_graph(&s, seed).edge_count() == 1 {
                hits += 1;
            }
        }
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "inclusion rate {rate}");
    }

    #[test]
    fn similarity_matrix_validates() {
        assert!(SimilarityMatrix::new(array![[0.0, 1.5], [1.5, 0.0]]).is_err());
        assert!(SimilarityMatrix::new(array![[0.0, 0.2], [0.3, 0.0]]).is_err());
        assert!(SimilarityMatrix::new(array![[0.1]]).is_err());
    }
}
