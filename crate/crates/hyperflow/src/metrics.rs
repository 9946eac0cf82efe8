//! Sociological evaluation of learned embeddings.
//!
//! Four criteria over a hypergraph and node embeddings: conformity (how many
//! members align with their environments), equivalence (do linked nodes share
//! environments more than unlinked ones), group entropy (aggregate membership
//! uncertainty per environment), and the evolving ratio (significant members
//! across training snapshots).

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Hypergraph;
use crate::rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Confidence that node `u` belongs to `hyperedge`: the logistic of the inner
/// product between u's embedding and the mean member embedding.
pub fn membership_confidence(
    embeddings: &Array2<f64>,
    u: usize,
    hyperedge: &BTreeSet<usize>,
) -> f64 {
    assert!(!hyperedge.is_empty(), "hyperedge must be nonempty");
    let d = embeddings.ncols();
    let mut mean = vec![0.0; d];
    for &v in hyperedge {
        for j in 0..d {
            mean[j] += embeddings[[v, j]];
        }
    }
    let len = hyperedge.len() as f64;
    let dot: f64 = (0..d).map(|j| embeddings[[u, j]] * mean[j] / len).sum();
    sigmoid(dot)
}

/// Mean over hyperedges of the fraction of members whose confidence exceeds ρ.
pub fn conformity(
    embeddings: &Array2<f64>,
    hyperedges: &[BTreeSet<usize>],
    rho: f64,
) -> Result<f64> {
    if hyperedges.is_empty() {
        return Err(Error::InvalidGraph("conformity needs hyperedges".into()));
    }
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::Config(format!("rho {rho} outside (0, 1)")));
    }
    let mut total = 0.0;
    for e in hyperedges {
        let significant = e
            .iter()
            .filter(|&&u| membership_confidence(embeddings, u, e) > rho)
            .count();
        total += significant as f64 / e.len() as f64;
    }
    Ok(total / hyperedges.len() as f64)
}

/// Equivalence score, or a flag when the non-adjacent baseline vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Equivalence {
    Finite(f64),
    Infinite { infinite: bool },
}

impl Equivalence {
    pub fn infinite() -> Self {
        Equivalence::Infinite { infinite: true }
    }

    pub fn as_finite(&self) -> Option<f64> {
        match self {
            Equivalence::Finite(v) => Some(*v),
            Equivalence::Infinite { .. } => None,
        }
    }
}

fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0 // neither node belongs anywhere: no shared-environment evidence
    } else {
        inter as f64 / union as f64
    }
}

/// Ratio of the expected environment-Jaccard between linked pairs to the same
/// expectation between non-adjacent pairs (plus ε = 1e-9). Pairs are fully
/// enumerated when fewer than `sample_count`, otherwise sampled under seed.
pub fn equivalence(
    hyperedges: &[BTreeSet<usize>],
    node_count: usize,
    edges: &BTreeSet<(usize, usize)>,
    sample_count: usize,
    seed: u64,
) -> Result<Equivalence> {
    if edges.is_empty() {
        return Err(Error::InvalidGraph("equivalence needs pairwise edges".into()));
    }
    let total_pairs = node_count * (node_count - 1) / 2;
    if total_pairs == edges.len() {
        return Err(Error::InvalidGraph(
            "complete graph leaves no non-adjacent pairs".into(),
        ));
    }
    let mut envs = vec![BTreeSet::new(); node_count];
    for (k, e) in hyperedges.iter().enumerate() {
        for &u in e {
            envs[u].insert(k);
        }
    }

    let numerator = if edges.len() <= sample_count {
        edges.iter().map(|&(a, b)| jaccard(&envs[a], &envs[b])).sum::<f64>() / edges.len() as f64
    } else {
        let items: Vec<(usize, usize)> = edges.iter().copied().collect();
        let mut r = rng::stream(seed, "metrics.eq.pos");
        (0..sample_count)
            .map(|_| {
                let (a, b) = items[r.gen_range(0..items.len())];
                jaccard(&envs[a], &envs[b])
            })
            .sum::<f64>()
            / sample_count as f64
    };

    let non_adjacent = total_pairs - edges.len();
    let denominator = if non_adjacent <= sample_count {
        let mut sum = 0.0;
        for a in 0..node_count {
            for b in (a + 1)..node_count {
                if !edges.contains(&(a, b)) {
                    sum += jaccard(&envs[a], &envs[b]);
                }
            }
        }
        sum / non_adjacent as f64
    } else {
        let mut r = rng::stream(seed, "metrics.eq.neg");
        let mut sum = 0.0;
        let mut drawn = 0usize;
        while drawn < sample_count {
            let a = r.gen_range(0..node_count);
            let b = r.gen_range(0..node_count);
            if a == b || edges.contains(&(a.min(b), a.max(b))) {
                continue;
            }
            sum += jaccard(&envs[a], &envs[b]);
            drawn += 1;
        }
        sum / sample_count as f64
    };

    const EPS: f64 = 1e-9;
    if denominator < EPS {
        Ok(Equivalence::infinite())
    } else {
        Ok(Equivalence::Finite(numerator / (denominator + EPS)))
    }
}

/// Aggregate a group's uncertainty as a member sum or a member mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    Sum,
    Mean,
}

/// Group entropy po(i) = Σ_{u∈i} −ln p_ui (confidences clamped at 1e-12).
/// `Mean` divides by the member count.
pub fn group_entropy(
    embeddings: &Array2<f64>,
    hyperedge: &BTreeSet<usize>,
    mode: EntropyMode,
) -> f64 {
    let sum: f64 = hyperedge
        .iter()
        .map(|&u| {
            let p = membership_confidence(embeddings, u, hyperedge).max(1e-12);
            let term = -p.ln();
            // keep -0.0 (from p == 1) out of reports
            if term == 0.0 {
                0.0
            } else {
                term
            }
        })
        .sum();
    match mode {
        EntropyMode::Sum => sum,
        EntropyMode::Mean => sum / hyperedge.len() as f64,
    }
}

/// Significant-membership tally for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolvingStage {
    pub stage: usize,
    pub count: usize,
    pub ratio: f64,
}

/// For each embedding snapshot, how many members of `hyperedge` have
/// confidence strictly above 0.5, and the fraction they make up.
pub fn evolving_ratio(
    snapshots: &[(usize, Array2<f64>)],
    hyperedge: &BTreeSet<usize>,
) -> Vec<EvolvingStage> {
    snapshots
        .iter()
        .map(|(stage, emb)| {
            let count = hyperedge
                .iter()
                .filter(|&&u| membership_confidence(emb, u, hyperedge) > 0.5)
                .count();
            EvolvingStage {
                stage: *stage,
                count,
                ratio: count as f64 / hyperedge.len() as f64,
            }
        })
        .collect()
}

/// Knobs for the combined report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub rho: f64,
    pub samples: usize,
    pub entropy_mode: EntropyMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            rho: 0.5,
            samples: 10_000,
            entropy_mode: EntropyMode::Sum,
        }
    }
}

/// All four criteria in one serializable bundle. Evolving stages aggregate
/// over hyperedges: counts are summed, ratios averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub conformity: f64,
    pub equivalence: Equivalence,
    pub group_entropies: BTreeMap<String, f64>,
    pub evolving: Vec<EvolvingStage>,
}

/// Evaluate every criterion on one hypergraph + embedding set; snapshot list
/// may be empty (evolving stages omitted).
pub fn metric_report(
    g: &Hypergraph,
    embeddings: &Array2<f64>,
    snapshots: &[(usize, Array2<f64>)],
    cfg: &MetricConfig,
    seed: u64,
) -> Result<MetricReport> {
    let hyperedges = g.hyperedges();
    let conformity = conformity(embeddings, hyperedges, cfg.rho)?;
    let equivalence = equivalence(
        hyperedges,
        g.node_count(),
        g.pairwise_edges(),
        cfg.samples,
        seed,
    )?;
    let group_entropies = hyperedges
        .iter()
        .enumerate()
        .map(|(k, e)| (k.to_string(), group_entropy(embeddings, e, cfg.entropy_mode)))
        .collect();

    let mut evolving: Vec<EvolvingStage> = Vec::new();
    if !snapshots.is_empty() {
        for (k, e) in hyperedges.iter().enumerate() {
            for (i, stage) in evolving_ratio(snapshots, e).into_iter().enumerate() {
                if k == 0 {
                    evolving.push(stage);
                } else {
                    evolving[i].count += stage.count;
                    evolving[i].ratio += stage.ratio;
                }
            }
        }
        let m = hyperedges.len() as f64;
        for stage in &mut evolving {
            stage.ratio /= m;
        }
    }

    Ok(MetricReport {
        conformity,
        equivalence,
        group_entropies,
        evolving,
    })
}
