use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::corpus::{EventType, Example, UserHistory};
use crate::error::{Error, Result};
use crate::towers::{Featurizer, ItemFeatures, MAX_HISTORY_EVENTS};

/// Drops every event newer than `impression_time − skip_seconds`. Only the most
/// recent events are removed.
pub fn apply_history_skip(history: &UserHistory, impression_time: i64, skip_seconds: i64) -> UserHistory {
    let cutoff = impression_time - skip_seconds.max(0);
    UserHistory {
        user_id: history.user_id.clone(),
        events: history
            .events
            .iter()
            .filter(|e| e.timestamp <= cutoff)
            .cloned()
            .collect(),
        reference_time: history.reference_time,
    }
}

/// One training instance: a featurized history and a single clicked item.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub user_id: String,
    /// Oldest first, at most [`MAX_HISTORY_EVENTS`].
    pub history: Vec<(ItemFeatures, EventType)>,
    pub positive: ItemFeatures,
    pub impression_negatives: Vec<ItemFeatures>,
    pub impression_time: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrepareStats {
    pub examples: usize,
    pub missing_events: usize,
    pub empty_histories: usize,
    pub missing_items: usize,
}

/// Expands impressions into one example per positive, after the history skip.
/// Views of unknown items are dropped; examples whose history ends up empty
/// are left out and counted.
pub fn prepare_examples(
    split: &[Example],
    featurizer: &Featurizer,
    items: &HashMap<String, ItemFeatures>,
    skip_seconds: i64,
) -> Result<(Vec<TrainExample>, PrepareStats)> {
    let mut stats = PrepareStats::default();
    let mut out = Vec::new();
    for (history, imp) in split {
        let h = apply_history_skip(history, imp.impression_time, skip_seconds);
        let start = h.events.len().saturating_sub(MAX_HISTORY_EVENTS);
        let mut events = Vec::new();
        for e in &h.events[start..] {
            match featurizer.event(e, items) {
                Ok(f) => events.push((f, e.event_type)),
                Err(Error::MissingItem(_)) => stats.missing_events += 1,
                Err(err) => return Err(err),
            }
        }
        if events.is_empty() {
            stats.empty_histories += 1;
            continue;
        }
        let lookup = |id: &String| items.get(id).cloned();
        let negatives: Vec<ItemFeatures> = imp.negative_item_ids.iter().filter_map(lookup).collect();
        for p in &imp.positive_item_ids {
            let Some(positive) = lookup(p) else {
                stats.missing_items += 1;
                continue;
            };
            out.push(TrainExample {
                user_id: imp.user_id.clone(),
                history: events.clone(),
                impression_negatives: negatives.iter().filter(|n| **n != positive).cloned().collect(),
                positive,
                impression_time: imp.impression_time,
            });
        }
    }
    stats.examples = out.len();
    Ok((out, stats))
}

/// Negatives for each example drawn uniformly with replacement from the
/// un-clicked impression items of the *other* examples in the batch, keeping
/// multiplicity. Anything feature-identical to a batch positive or to an item
/// of the example's own impression is never drawn.
pub fn sample_in_batch_negatives<R: Rng + ?Sized>(
    batch: &[TrainExample],
    per_positive: usize,
    rng: &mut R,
) -> Result<Vec<Vec<ItemFeatures>>> {
    if batch.len() < 2 {
        return Err(Error::Sampling(format!(
            "in-batch sampling needs at least 2 examples, got {}",
            batch.len()
        )));
    }
    let positives: HashSet<&ItemFeatures> = batch.iter().map(|e| &e.positive).collect();
    let mut out = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let own: HashSet<&ItemFeatures> = ex.impression_negatives.iter().collect();
        let pool: Vec<&ItemFeatures> = batch
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, other)| other.impression_negatives.iter())
            .filter(|f| !positives.contains(f) && !own.contains(f))
            .collect();
        if pool.is_empty() {
            return Err(Error::Sampling(format!(
                "no in-batch negatives available for example {i}"
            )));
        }
        out.push(
            (0..per_positive)
                .map(|_| pool[rng.gen_range(0..pool.len())].clone())
                .collect(),
        );
    }
    Ok(out)
}

/// Default count of observed un-clicked negatives per positive.
pub const OBSERVED_NEGATIVES: usize = 8;

/// The first `per_positive` un-clicked items of the example's own impression.
pub fn sample_observed_negatives(example: &TrainExample, per_positive: usize) -> Vec<ItemFeatures> {
    example
        .impression_negatives
        .iter()
        .take(per_positive)
        .cloned()
        .collect()
}
