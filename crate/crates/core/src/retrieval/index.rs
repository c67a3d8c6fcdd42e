//! Clustered item index and its `ECIX1` file.
//!
//! ```text
//! ECIX1\n
//! u32 K, u32 D, f32 tau, u64 item count, i64 built_at
//! K*D f32 centroids
//! per cluster: u32 count, then count * (u32-prefixed id, D f32)
//! ```

use std::collections::HashSet;
use std::path::Path;

use super::kmeans::kmeans_fit;
use crate::binio::{put_f32s, put_string, read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8] = b"ECIX1\n";
/// Largest allowed gap between a stored centroid and the recomputed mean.
pub const CENTROID_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub item_id: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredIndex {
    pub dim: usize,
    /// Temperature applied to centroid affinities at query time.
    pub tau: f32,
    pub built_at: i64,
    pub centroids: Vec<Vec<f32>>,
    pub clusters: Vec<Vec<Member>>,
}

fn mean_of(members: &[Member], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0f64; dim];
    for x in members {
        for (s, &v) in m.iter_mut().zip(&x.embedding) {
            *s += v as f64;
        }
    }
    m.iter_mut().for_each(|v| *v /= members.len().max(1) as f64);
    m
}

impl ClusteredIndex {
    /// K-means over `embeddings`; members keep their input order inside each
    /// cluster.
    pub fn build(
        ids: &[String],
        embeddings: &[Vec<f32>],
        k: usize,
        tau: f32,
        max_iters: usize,
        seed: u64,
        built_at: i64,
    ) -> Result<Self> {
        if ids.len() != embeddings.len() {
            return Err(Error::Shape {
                what: "index ids vs embeddings",
                expected: vec![ids.len()],
                got: vec![embeddings.len()],
            });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Parameter {
                name: "tau",
                reason: format!("must be > 0, got {tau}"),
            });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateItem(dup.clone()));
        }
        let fit = kmeans_fit(embeddings, k, max_iters, seed)?;
        let mut clusters: Vec<Vec<Member>> = vec![Vec::new(); k];
        for ((id, e), &a) in ids.iter().zip(embeddings).zip(&fit.assignments) {
            clusters[a].push(Member {
                item_id: id.clone(),
                embedding: e.clone(),
            });
        }
        Ok(ClusteredIndex {
            dim: embeddings[0].len(),
            tau,
            built_at,
            centroids: fit.centroids,
            clusters,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cluster of every item, keyed by id.
    pub fn cluster_of(&self, item_id: &str) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.iter().any(|m| m.item_id == item_id))
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.clusters.iter().flatten().map(|m| m.item_id.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.tau.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.built_at.to_le_bytes());
        for c in &self.centroids {
            put_f32s(&mut out, c);
        }
        for c in &self.clusters {
            out.extend_from_slice(&(c.len() as u32).to_le_bytes());
            for m in c {
                put_string(&mut out, &m.item_id);
                put_f32s(&mut out, &m.embedding);
            }
        }
        out
    }

    /// Parses and validates an index: counts add up, every id appears once,
    /// and each centroid matches its members' mean.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(INDEX_MAGIC)?;
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let tau = r.f32()?;
        let at = r.offset();
        let count = r.u64()?;
        let built_at = r.i64()?;
        if k == 0 || dim == 0 {
            return Err(Error::integrity(0, "index header has zero clusters or dimensions"));
        }
        let centroids = (0..k).map(|_| r.f32s(dim)).collect::<Result<Vec<_>>>()?;
        let mut clusters = Vec::with_capacity(k);
        let mut seen = HashSet::new();
        for j in 0..k {
            let n = r.u32()? as usize;
            let mut members = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let id_at = r.offset();
                let item_id = r.string()?;
                if !seen.insert(item_id.clone()) {
                    return Err(Error::integrity(id_at, format!("item `{item_id}` indexed twice")));
                }
                members.push(Member {
                    item_id,
                    embedding: r.f32s(dim)?,
                });
            }
            let mean = mean_of(&members, dim);
            let off = centroids[j]
                .iter()
                .zip(&mean)
                .map(|(&c, &m)| (c as f64 - m).abs())
                .fold(0.0, f64::max);
            if !members.is_empty() && off > CENTROID_TOLERANCE {
                return Err(Error::integrity(
                    r.offset(),
                    format!("centroid {j} is {off:e} away from its members' mean"),
                ));
            }
            clusters.push(members);
        }
        if !r.is_eof() {
            return Err(Error::integrity(r.offset(), "trailing bytes after last cluster"));
        }
        if seen.len() as u64 != count {
            return Err(Error::integrity(
                at,
                format!("header says {count} items, clusters hold {}", seen.len()),
            ));
        }
        Ok(ClusteredIndex {
            dim,
            tau,
            built_at,
            centroids,
            clusters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}
