//! Batch embedding output.
//!
//! ```text
//! EEMB1\n
//! id\tdim=D\tcount=N\n
//! <id>\n<D little-endian f32>     (N times)
//! ```

use std::collections::HashSet;
use std::path::Path;

use crate::binio::{put_f32s, read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};

pub const EMBEDDINGS_MAGIC: &[u8] = b"EEMB1\n";

/// Ids with one vector each, kept in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    pub fn push(&mut self, id: String, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape {
                what: "embedding row",
                expected: vec![self.dim],
                got: vec![v.len()],
            });
        }
        if id.is_empty() || id.contains('\n') {
            return Err(Error::Contract(format!("embedding id {id:?} is empty or multi-line")));
        }
        self.ids.push(id);
        self.vectors.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.ids.iter().position(|x| x == id).map(|i| self.vectors[i].as_slice())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * (self.dim * 4 + 12) + 32);
        out.extend_from_slice(EMBEDDINGS_MAGIC);
        out.extend_from_slice(format!("id\tdim={}\tcount={}\n", self.dim, self.len()).as_bytes());
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            out.extend_from_slice(id.as_bytes());
            out.push(b'\n');
            put_f32s(&mut out, v);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(EMBEDDINGS_MAGIC)?;
        let at = r.offset();
        let header = r.line()?;
        let bad = || Error::integrity(at, format!("bad embeddings header `{header}`"));
        let mut fields = header.split('\t');
        if fields.next() != Some("id") {
            return Err(bad());
        }
        let mut num = |key: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        let dim = num("dim=")?;
        let count = num("count=")?;
        let mut t = EmbeddingTable::new(dim);
        let mut seen = HashSet::new();
        for _ in 0..count {
            let id_at = r.offset();
            let id = r.line()?.to_string();
            if id.is_empty() || !seen.insert(id.clone()) {
                return Err(Error::integrity(id_at, format!("empty or repeated id `{id}`")));
            }
            let v = r.f32s(dim)?;
            t.ids.push(id);
            t.vectors.push(v);
        }
        if !r.is_eof() {
            return Err(Error::integrity(r.offset(), "trailing bytes after last embedding"));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}
