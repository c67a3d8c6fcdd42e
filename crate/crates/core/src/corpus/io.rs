//! JSON-lines readers and writers for items, events and impressions.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::*;
use crate::binio::write_atomic;
use crate::error::{Error, Result};

fn parse_lines<T: DeserializeOwned>(
    text: &str,
    origin: &str,
    mut check: impl FnMut(&T) -> std::result::Result<(), String>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            reason,
        };
        let rec: T = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        check(&rec).map_err(err)?;
        out.push(rec);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_items(text: &str, origin: &str) -> Result<Vec<ItemRecord>> {
    let items: Vec<ItemRecord> = parse_lines(text, origin, |it: &ItemRecord| {
        if it.item_id.is_empty() {
            Err("empty item_id".into())
        } else {
            Ok(())
        }
    })?;
    let mut seen = HashSet::new();
    for it in &items {
        if !seen.insert(it.item_id.as_str()) {
            return Err(Error::DuplicateItem(it.item_id.clone()));
        }
    }
    Ok(items)
}

pub fn parse_events(text: &str, origin: &str) -> Result<Vec<UserEvent>> {
    parse_lines(text, origin, UserEvent::validate)
}

pub fn parse_impressions(text: &str, origin: &str) -> Result<Vec<ImpressionRecord>> {
    parse_lines(text, origin, ImpressionRecord::validate)
}

pub fn load_items(path: &Path) -> Result<Vec<ItemRecord>> {
    parse_items(&read(path)?, &path.display().to_string())
}

pub fn load_events(path: &Path) -> Result<Vec<UserEvent>> {
    parse_events(&read(path)?, &path.display().to_string())
}

pub fn load_impressions(path: &Path) -> Result<Vec<ImpressionRecord>> {
    parse_impressions(&read(path)?, &path.display().to_string())
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("plain records serialize"));
        s.push('\n');
    }
    s
}

pub fn save_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    write_atomic(path, to_jsonl(records).as_bytes())
}
