use std::collections::{BTreeMap, HashMap, HashSet};

use super::types::*;
use crate::error::{Error, Result};

/// Per-user event streams sorted by time, for history slicing.
#[derive(Debug, Clone, Default)]
pub struct EventIndex {
    by_user: HashMap<String, Vec<UserEvent>>,
}

impl EventIndex {
    pub fn new(events: &[UserEvent]) -> Self {
        let mut by_user: HashMap<String, Vec<UserEvent>> = HashMap::new();
        for e in events {
            by_user.entry(e.user_id.clone()).or_default().push(e.clone());
        }
        for v in by_user.values_mut() {
            v.sort_by_key(|e| e.timestamp);
        }
        EventIndex { by_user }
    }

    /// Sorted user ids.
    pub fn users(&self) -> Vec<&str> {
        let mut u: Vec<&str> = self.by_user.keys().map(String::as_str).collect();
        u.sort_unstable();
        u
    }

    pub fn events(&self, user: &str) -> &[UserEvent] {
        self.by_user.get(user).map_or(&[], Vec::as_slice)
    }

    /// Events of `user` inside `[reference_time − window, reference_time)`.
    pub fn history(&self, user: &str, reference_time: i64, window: i64) -> UserHistory {
        let all = self.events(user);
        let lo = all.partition_point(|e| e.timestamp < reference_time - window);
        let hi = all.partition_point(|e| e.timestamp < reference_time);
        UserHistory {
            user_id: user.to_string(),
            events: all[lo..hi.max(lo)].to_vec(),
            reference_time,
        }
    }
}

pub type Example = (UserHistory, ImpressionRecord);

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    pub bounds: SplitBounds,
}

/// Assigns impressions to splits by time, keeps each user's earliest
/// impression per split and attaches the preceding `history_window_seconds`
/// of that user's events.
pub fn build_dataset(
    items: &[ItemRecord],
    events: &[UserEvent],
    impressions: &[ImpressionRecord],
    cfg: &CorpusConfig,
) -> Result<DatasetSplit> {
    if impressions.is_empty() {
        return Err(Error::EmptyDataset("no impressions".into()));
    }
    if cfg.history_window_seconds <= 0 {
        return Err(Error::config("history_window_seconds", "must be > 0"));
    }
    let known: HashSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    for imp in impressions {
        imp.validate().map_err(Error::Contract)?;
        if let Some(id) = imp
            .positive_item_ids
            .iter()
            .chain(&imp.negative_item_ids)
            .find(|id| !known.contains(id.as_str()))
        {
            return Err(Error::MissingItem(id.clone()));
        }
    }
    let bounds = cfg.split_bounds();
    let index = EventIndex::new(events);

    // split -> user -> earliest impression (first in input order on ties)
    let mut chosen: [BTreeMap<&str, &ImpressionRecord>; 3] = Default::default();
    for imp in impressions {
        let split = if imp.impression_time < bounds.train_end {
            0
        } else if imp.impression_time < bounds.validation_end {
            1
        } else {
            2
        };
        chosen[split]
            .entry(imp.user_id.as_str())
            .and_modify(|cur| {
                if imp.impression_time < cur.impression_time {
                    *cur = imp;
                }
            })
            .or_insert(imp);
    }
    let [train, validation, test] = chosen.map(|m| {
        let mut out: Vec<Example> = m
            .into_values()
            .map(|imp| {
                let h = index.history(&imp.user_id, imp.impression_time, cfg.history_window_seconds);
                (h, imp.clone())
            })
            .collect();
        out.sort_by(|a, b| {
            (a.1.impression_time, &a.1.user_id).cmp(&(b.1.impression_time, &b.1.user_id))
        });
        out
    });
    Ok(DatasetSplit {
        train,
        validation,
        test,
        bounds,
    })
}
