//! File-backed results cache keyed by user id.
//!
//! ```text
//! ERST1\n
//! generated_at=T\tusers=U\n
//! per user, ids ascending:
//!   <user_id>\t<model|fallback>\n
//!   u32 count, count * (u32-prefixed item id, f32 score)
//! 32-byte SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::{put_string, read_file, write_atomic_with, ByteReader};
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8] = b"ERST1\n";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Model,
    /// Popular candidates for users the model could not embed.
    Fallback,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Model => "model",
            Source::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub source: Source,
    pub items: Vec<(String, f32)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsStore {
    pub generated_at: i64,
    pub entries: BTreeMap<String, StoreEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Found(StoreEntry),
    NotFound,
}

impl ResultsStore {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(
            format!("generated_at={}\tusers={}\n", self.generated_at, self.entries.len()).as_bytes(),
        );
        for (user, e) in &self.entries {
            out.extend_from_slice(format!("{user}\t{}\n", e.source.as_str()).as_bytes());
            out.extend_from_slice(&(e.items.len() as u32).to_le_bytes());
            for (id, score) in &e.items {
                put_string(&mut out, id);
                out.extend_from_slice(&score.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < STORE_MAGIC.len() + DIGEST_LEN {
            let mut r = ByteReader::new(bytes);
            r.magic(STORE_MAGIC)?;
            return Err(Error::integrity(bytes.len() as u64, "truncated: no digest"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut r = ByteReader::new(body);
        r.magic(STORE_MAGIC)?;
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::integrity(body.len() as u64, "digest does not match contents"));
        }
        let at = r.offset();
        let header = r.line()?;
        let bad = || Error::integrity(at, format!("bad store header `{header}`"));
        let (g, u) = header.split_once('\t').ok_or_else(bad)?;
        let generated_at: i64 = g
            .strip_prefix("generated_at=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        let users: usize = u.strip_prefix("users=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let mut entries = BTreeMap::new();
        for _ in 0..users {
            let at = r.offset();
            let line = r.line()?;
            let (user, src) = line
                .split_once('\t')
                .ok_or_else(|| Error::integrity(at, format!("bad user line `{line}`")))?;
            let source = match src {
                "model" => Source::Model,
                "fallback" => Source::Fallback,
                _ => return Err(Error::integrity(at, format!("unknown source `{src}`"))),
            };
            let n = r.u32()? as usize;
            let mut items = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                let id = r.string()?;
                items.push((id, r.f32()?));
            }
            if items.windows(2).any(|w| w[0].1 < w[1].1) {
                return Err(Error::integrity(at, format!("scores of `{user}` are not sorted")));
            }
            if entries.insert(user.to_string(), StoreEntry { source, items }).is_some() {
                return Err(Error::integrity(at, format!("user `{user}` stored twice")));
            }
        }
        if !r.is_eof() {
            return Err(Error::integrity(r.offset(), "trailing bytes before digest"));
        }
        Ok(ResultsStore {
            generated_at,
            entries,
        })
    }

    /// Temp file plus rename; `before_rename` is a fault-injection hook.
    pub fn save_with(&self, path: &Path, before_rename: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        write_atomic_with(path, &self.encode(), before_rename)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with(path, |_| Ok(()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }

    pub fn get(&self, user: &str) -> Lookup {
        match self.entries.get(user) {
            Some(e) => Lookup::Found(e.clone()),
            None => Lookup::NotFound,
        }
    }
}

/// Reads the store at `path` and returns one user's list.
pub fn lookup(path: &Path, user: &str) -> Result<Lookup> {
    Ok(ResultsStore::load(path)?.get(user))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ResultsStore {
        let mut s = ResultsStore {
            generated_at: 42,
            ..Default::default()
        };
        s.entries.insert(
            "u2".into(),
            StoreEntry {
                source: Source::Model,
                items: vec![("a".into(), 0.9), ("b".into(), 0.5)],
            },
        );
        s.entries.insert(
            "u1".into(),
            StoreEntry {
                source: Source::Fallback,
                items: vec![("c".into(), 7.0)],
            },
        );
        s
    }

    #[test]
    fn round_trip_and_lookup() {
        let s = store();
        let bytes = s.encode();
        let back = ResultsStore::decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.encode(), bytes);
        assert!(matches!(back.get("u1"), Lookup::Found(e) if e.source == Source::Fallback));
        assert_eq!(back.get("nobody"), Lookup::NotFound);
    }

    #[test]
    fn any_flipped_byte_is_caught() {
        let bytes = store().encode();
        for i in STORE_MAGIC.len()..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x01;
            assert!(
                matches!(ResultsStore::decode(&b), Err(Error::Integrity { .. })),
                "byte {i}"
            );
        }
        assert!(matches!(ResultsStore::decode(&bytes[..10]), Err(Error::Integrity { .. })));
        assert!(matches!(ResultsStore::decode(b"ERST9\n0123456789012345678901234567890123"), Err(Error::Format(_))));
    }

    #[test]
    fn crash_before_rename_leaves_old_store() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.erst");
        store().save(&p).unwrap();
        let before = std::fs::read(&p).unwrap();
        let mut next = store();
        next.generated_at = 43;
        let err = next.save_with(&p, |_| Err(Error::Format("power cut".into())));
        assert!(err.is_err());
        assert_eq!(std::fs::read(&p).unwrap(), before);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
