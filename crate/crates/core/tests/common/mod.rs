#![allow(dead_code)]

/// Ten tight clusters on orthogonal axes `e_j`, each spread symmetrically
/// along its own side axis `f_j`, so every centroid sits on `e_j` with the
/// same length. The user has equal weight on all `e_j` plus a lean towards
/// `f_0`: every centroid scores the same, but the best single items all come
/// from cluster 0.
pub struct ClusterFixture {
    pub ids: Vec<String>,
    pub embeddings: Vec<Vec<f32>>,
    pub truth: Vec<usize>,
    pub user: Vec<f32>,
}

pub fn separated_clusters(clusters: usize, half: usize) -> ClusterFixture {
    let dim = 2 * clusters;
    let (mut ids, mut embeddings, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..clusters {
        for k in 1..=half {
            for sign in [1.0f64, -1.0] {
                let s = sign * 0.25 * k as f64 / half as f64;
                let norm = (1.0 + s * s).sqrt();
                let mut v = vec![0.0f32; dim];
                v[j] = (1.0 / norm) as f32;
                v[clusters + j] = (s / norm) as f32;
                ids.push(format!("c{j:02}-{k:03}-{}", if sign > 0.0 { "p" } else { "n" }));
                embeddings.push(v);
                truth.push(j);
            }
        }
    }
    let mut user = vec![0.0f32; dim];
    let even = 0.3 / (clusters as f64).sqrt();
    user[..clusters].iter_mut().for_each(|x| *x = even as f32);
    user[clusters] = (1.0f64 - 0.09).sqrt() as f32;
    ClusterFixture {
        ids,
        embeddings,
        truth,
        user,
    }
}
