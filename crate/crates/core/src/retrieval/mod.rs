//! Cluster-diversified nearest-neighbour retrieval.
//!
//! The user vector picks the `M` closest centroids (temperature-scaled dot
//! product), a softmax over those affinities splits the budget `N` across
//! them, and each cluster is searched exactly. Everything is merged, sorted by
//! score and cut back to `N`.

pub mod index;
pub mod kmeans;

use serde::{Deserialize, Serialize};

pub use index::{ClusteredIndex, Member, CENTROID_TOLERANCE, INDEX_MAGIC};
pub use kmeans::{kmeans_fit, KMeansFit, DEFAULT_MAX_ITERS};

use crate::error::{Error, Result};
use crate::nn::real::dot;

/// Slack for products like 0.1 * 20 landing a hair above an integer.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Items returned per user.
    pub n: usize,
    /// Clusters probed per query.
    pub m: usize,
    /// Clusters built; `None` means one per ten items.
    pub k: Option<usize>,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            n: 12,
            m: 10,
            k: None,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
        }
    }
}

impl RetrievalConfig {
    pub fn clusters_for(&self, items: usize) -> usize {
        self.k.unwrap_or((items / 10).max(1)).min(items.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be >= 1"));
        }
        if self.m == 0 {
            return Err(Error::config("m", "must be >= 1"));
        }
        if let Some(k) = self.k {
            if k < self.m {
                return Err(Error::config("k", format!("must be >= m = {}", self.m)));
            }
        }
        Ok(())
    }
}

/// `m_i = ceil(softmax(affinities)_i * n)`. The counts always add up to at
/// least `n`, and may exceed it.
pub fn allocate_budget(affinities: &[f64], n: usize) -> Vec<usize> {
    if affinities.is_empty() {
        return Vec::new();
    }
    let max = affinities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = affinities.iter().map(|a| (a - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut m: Vec<usize> = w
        .iter()
        .map(|&x| {
            let share = x / total * n as f64;
            if share > 0.0 {
                ((share - CEIL_SLACK).ceil() as usize).max(1)
            } else {
                0
            }
        })
        .collect();
    // rounding can only lose a unit when shares sit right at integers
    let sum: usize = m.iter().sum();
    if sum < n {
        let top = (0..w.len()).fold(0, |b, i| if w[i] > w[b] { i } else { b });
        m[top] += n - sum;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    /// `(item_id, dot product)`, score descending, ties by id.
    pub items: Vec<(String, f32)>,
    /// Fewer than `n` items were found in the probed clusters.
    pub shortfall: bool,
}

fn by_score(a: &(String, f32), b: &(String, f32)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn top_n<'a>(members: impl Iterator<Item = &'a Member>, user: &[f32], n: usize) -> Vec<(String, f32)> {
    let mut scored: Vec<(String, f32)> = members
        .map(|m| (m.item_id.clone(), dot(user, &m.embedding)))
        .collect();
    scored.sort_by(by_score);
    scored.truncate(n);
    scored
}

/// Indices of the `m` clusters with the largest `c_i . u / tau`, with those
/// affinities.
pub fn nearest_clusters(index: &ClusteredIndex, user: &[f32], m: usize) -> Vec<(usize, f64)> {
    let mut aff: Vec<(usize, f64)> = index
        .centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dot(c, user) as f64 / index.tau as f64))
        .collect();
    aff.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    aff.truncate(m);
    aff
}

/// Diversified top-`n` for one user. `m` is capped at the index's cluster count.
pub fn retrieve(index: &ClusteredIndex, user: &[f32], n: usize, m: usize) -> Result<Retrieved> {
    if index.is_empty() {
        return Err(Error::Contract("retrieval index is empty".into()));
    }
    if user.len() != index.dim {
        return Err(Error::Shape {
            what: "user embedding",
            expected: vec![index.dim],
            got: vec![user.len()],
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::Parameter {
            name: if n == 0 { "n" } else { "m" },
            reason: "must be >= 1".into(),
        });
    }
    let probed = nearest_clusters(index, user, m.min(index.k()));
    let aff: Vec<f64> = probed.iter().map(|p| p.1).collect();
    let budget = allocate_budget(&aff, n);
    let mut items = Vec::new();
    for (&(j, _), &mi) in probed.iter().zip(&budget) {
        items.extend(top_n(index.clusters[j].iter(), user, mi));
    }
    items.sort_by(by_score);
    items.truncate(n);
    Ok(Retrieved {
        shortfall: items.len() < n,
        items,
    })
}

/// Full scan over every indexed item; the reference for [`retrieve`].
pub fn exhaustive_knn(index: &ClusteredIndex, user: &[f32], n: usize) -> Vec<(String, f32)> {
    top_n(index.clusters.iter().flatten(), user, n)
}
