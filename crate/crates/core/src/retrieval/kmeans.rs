//! Seeded k-means++ and Lloyd iterations over item embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Mean of each cluster's members, in f32.
    pub centroids: Vec<Vec<f32>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after every Lloyd iteration.
    pub inertia: Vec<f64>,
    /// Lloyd iterations run; fewer than `max_iters` means a fixpoint was hit.
    pub iterations: usize,
}

fn sq_dist(a: &[f32], c: &[f64]) -> f64 {
    a.iter().zip(c).map(|(&x, &y)| (x as f64 - y) * (x as f64 - y)).sum()
}

/// Nearest centroid, ties to the lower index.
fn nearest(p: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let widen = |p: &Vec<f32>| p.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let mut centroids = vec![widen(&points[rng.gen_range(0..points.len())])];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            // every point sits on a centroid already; duplicates get repaired later
            rng.gen_range(0..points.len())
        };
        let c = widen(&points[pick]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn means(points: &[Vec<f32>], assign: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        for (s, &x) in sums[a].iter_mut().zip(p) {
            *s += x as f64;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Gives every empty cluster the member of the currently largest cluster that
/// lies farthest from that cluster's centroid.
fn repair_empty(points: &[Vec<f32>], assign: &mut [usize], centroids: &mut Vec<Vec<f64>>, counts: &mut [usize]) {
    while let Some(empty) = counts.iter().position(|&n| n == 0) {
        let largest = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        let far = (0..points.len())
            .filter(|&i| assign[i] == largest)
            .map(|i| (i, sq_dist(&points[i], &centroids[largest])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|x| x.0)
            .expect("largest cluster has members");
        assign[far] = empty;
        counts[largest] -= 1;
        counts[empty] = 1;
        let (m, _) = means(points, assign, centroids.len(), centroids[0].len());
        *centroids = m;
    }
}

fn inertia(points: &[Vec<f32>], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assign).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

/// Clusters `points` into `k` groups. Deterministic for a given seed.
pub fn kmeans_fit(points: &[Vec<f32>], k: usize, max_iters: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter {
            name: "k",
            reason: format!("need 1 <= k <= {} points, got {k}", points.len()),
        });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape {
            what: "kmeans points",
            expected: vec![dim],
            got: vec![bad.len()],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let next: Vec<usize> = points.par_iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assign;
        assign = next;
        let (m, mut counts) = means(points, &assign, k, dim);
        centroids = m;
        repair_empty(points, &mut assign, &mut centroids, &mut counts);
        trace.push(inertia(points, &assign, &centroids));
        if !changed {
            break;
        }
    }
    Ok(KMeansFit {
        centroids: centroids
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f32).collect())
            .collect(),
        assignments: assign,
        inertia: trace,
        iterations,
    })
}
