//! Tokenization and vocabularies for titles, aspects and query text.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// Replaces every character outside `[A-Za-z0-9]` with whitespace, splits on
/// whitespace runs and lowercases.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn squash(s: &str) -> String {
    tokenize(s).join("_")
}

/// One token per `key:value` aspect: `filter(key) + ":" + filter(value)`, where
/// the filter tokenizes and joins words with `_`. Returns `None` when nothing
/// survives the filter.
pub fn aspect_token(raw: &str) -> Option<String> {
    let tok = match raw.split_once(':') {
        Some((k, v)) => {
            let (k, v) = (squash(k), squash(v));
            if k.is_empty() && v.is_empty() {
                return None;
            }
            format!("{k}:{v}")
        }
        None => squash(raw),
    };
    (!tok.is_empty()).then_some(tok)
}

pub fn aspect_tokens<S: AsRef<str>>(aspects: &[S]) -> Vec<String> {
    aspects
        .iter()
        .filter_map(|a| aspect_token(a.as_ref()))
        .collect()
}

/// Dense token ids with PAD = 0 and OOV = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
    max_size: usize,
    min_frequency: usize,
}

/// Counts tokens and keeps the `max_size − 2` most frequent ones with
/// frequency ≥ `min_frequency`, ranked by (count desc, token asc).
pub fn build_vocab<I, S>(stream: I, max_size: usize, min_frequency: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_size < 2 {
        return Err(Error::Parameter {
            name: "max_size",
            reason: format!("must be >= 2 to hold PAD and OOV, got {max_size}"),
        });
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for tok in stream {
        *counts.entry(tok.as_ref().to_owned()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_frequency)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - 2);
    let tokens = [PAD_TOKEN.to_string(), OOV_TOKEN.to_string()]
        .into_iter()
        .chain(ranked.into_iter().map(|(t, _)| t))
        .collect();
    Ok(Vocabulary::from_tokens(tokens, max_size, min_frequency))
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, max_size: usize, min_frequency: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            index,
            tokens,
            max_size,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    /// Ids outside the vocabulary decode to the OOV token.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(OOV_TOKEN).to_owned())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# embrec vocabulary: token id = zero-based line index after this header; max_size={} min_frequency={}\n",
            self.max_size, self.min_frequency
        );
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: origin.into(),
            line: 1,
            reason: "empty vocabulary file".into(),
        })?;
        let header = header.trim_end_matches('\r');
        if !header.starts_with('#') {
            return Err(Error::Parse {
                path: origin.into(),
                line: 1,
                reason: "missing `#` header line".into(),
            });
        }
        let field = |key: &str| -> usize {
            header
                .split_whitespace()
                .find_map(|w| w.strip_prefix(key).and_then(|v| v.parse().ok()))
                .unwrap_or(0)
        };
        let (max_size, min_frequency) = (field("max_size="), field("min_frequency="));
        let mut tokens = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in lines {
            let tok = line.trim_end_matches('\r');
            if tok.is_empty() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    reason: "empty token".into(),
                });
            }
            if seen.insert(tok.to_owned(), i).is_some() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    reason: format!("duplicate token `{tok}`"),
                });
            }
            tokens.push(tok.to_owned());
        }
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != OOV_TOKEN {
            return Err(Error::Parse {
                path: origin.into(),
                line: 2,
                reason: format!("first two tokens must be {PAD_TOKEN} and {OOV_TOKEN}"),
            });
        }
        Ok(Vocabulary::from_tokens(tokens, max_size, min_frequency))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::binio::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_text(&text, &path.display().to_string())
    }
}
