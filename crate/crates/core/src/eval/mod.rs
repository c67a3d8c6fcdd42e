//! Offline Recall@k evaluation, the recently-viewed-items baseline and the
//! missing-history ablation.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{EventType, Example, ItemRecord, UserHistory};
use crate::error::{Error, Result};
use crate::nn::real::dot;
use crate::nn::ModelParams;
use crate::towers::{encode_item, encode_user, Featurizer, ItemFeatures};
use crate::training::apply_history_skip;

pub const RECALL_KS: [usize; 5] = [1, 5, 10, 20, 40];

/// Indices of the `k` best scores, ordered by score descending then index
/// ascending.
pub fn top_k(scores: &[f32], k: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Candidate items sorted by id, with their embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub ids: Vec<String>,
    pub embeddings: Vec<Vec<f32>>,
}

impl CandidatePool {
    /// Ids only, for baselines that need no embeddings.
    pub fn ids_only(ids: impl IntoIterator<Item = String>) -> Self {
        let mut ids: Vec<String> = ids.into_iter().collect();
        ids.sort();
        ids.dedup();
        CandidatePool {
            ids,
            embeddings: Vec::new(),
        }
    }

    /// Embeds `items` (in parallel, output in id order).
    pub fn embed(params: &ModelParams, featurizer: &Featurizer, items: &[ItemRecord]) -> Result<Self> {
        let mut recs: Vec<&ItemRecord> = items.iter().collect();
        recs.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        recs.dedup_by(|a, b| a.item_id == b.item_id);
        let embeddings = recs
            .par_iter()
            .map(|r| encode_item(params, &featurizer.item(r)).map(|e| e.into_inner()))
            .collect::<Result<Vec<_>>>()?;
        Ok(CandidatePool {
            ids: recs.iter().map(|r| r.item_id.clone()).collect(),
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Fails with a coverage error listing positives absent from the pool.
    pub fn check_coverage(&self, split: &[Example]) -> Result<()> {
        let have: HashSet<&str> = self.ids.iter().map(String::as_str).collect();
        let mut missing: Vec<String> = split
            .iter()
            .flat_map(|(_, imp)| imp.positive_item_ids.iter())
            .filter(|p| !have.contains(p.as_str()))
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Coverage(missing))
        }
    }
}

/// Candidate ids ordered by dot product with `user` (descending), ties by id.
pub fn rank_candidates<'a>(user: &[f32], pool: &'a CandidatePool) -> Vec<&'a str> {
    let scores: Vec<f32> = pool.embeddings.iter().map(|e| dot(user, e)).collect();
    top_k(&scores, scores.len())
        .into_iter()
        .map(|i| pool.ids[i].as_str())
        .collect()
}

/// Viewed candidates by latest view time (newest first), then never-viewed
/// candidates by id.
pub fn rvi_rank<'a>(history: &UserHistory, candidate_ids: &'a [String]) -> Vec<&'a str> {
    let mut last_view: HashMap<&str, i64> = HashMap::new();
    for e in &history.events {
        if e.event_type == EventType::ItemView {
            if let Some(id) = e.item_id.as_deref() {
                let t = last_view.entry(id).or_insert(e.timestamp);
                *t = (*t).max(e.timestamp);
            }
        }
    }
    let mut viewed: Vec<(&str, i64)> = Vec::new();
    let mut rest: Vec<&str> = Vec::new();
    for id in candidate_ids {
        match last_view.get(id.as_str()) {
            Some(&t) => viewed.push((id, t)),
            None => rest.push(id),
        }
    }
    viewed.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    rest.sort_unstable();
    viewed.into_iter().map(|x| x.0).chain(rest).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallValue {
    pub value: f64,
    pub impressions: usize,
    /// Impressions with no relevant items, left out of the mean.
    pub excluded: usize,
}

/// Mean over impressions of `|relevant ∩ top-k| / |relevant|`.
pub fn recall_at_k<S: AsRef<str>>(
    rankings: &[Vec<S>],
    relevants: &[HashSet<String>],
    k: usize,
) -> Result<RecallValue> {
    if k == 0 {
        return Err(Error::Parameter {
            name: "k",
            reason: "must be >= 1".into(),
        });
    }
    if rankings.len() != relevants.len() {
        return Err(Error::Shape {
            what: "rankings vs relevant sets",
            expected: vec![rankings.len()],
            got: vec![relevants.len()],
        });
    }
    let mut sum = 0.0f64;
    let mut used = 0;
    let mut excluded = 0;
    for (ranked, rel) in rankings.iter().zip(relevants) {
        if rel.is_empty() {
            excluded += 1;
            continue;
        }
        let hits = ranked
            .iter()
            .take(k)
            .filter(|id| rel.contains(id.as_ref()))
            .count();
        sum += hits as f64 / rel.len() as f64;
        used += 1;
    }
    Ok(RecallValue {
        value: if used == 0 { 0.0 } else { sum / used as f64 },
        impressions: used,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at_k: BTreeMap<usize, f64>,
    pub impression_count: usize,
    pub candidate_pool_size: usize,
    pub excluded_impressions: usize,
    /// Impressions ranked by the RVI tail because the user had no usable history.
    pub history_fallbacks: usize,
}

impl EvalReport {
    pub fn recall(&self, k: usize) -> f64 {
        self.recall_at_k.get(&k).copied().unwrap_or(f64::NAN)
    }

    fn from_rankings(
        rankings: &[Vec<&str>],
        split: &[Example],
        pool_size: usize,
        fallbacks: usize,
    ) -> Result<Self> {
        let relevants: Vec<HashSet<String>> = split
            .iter()
            .map(|(_, imp)| imp.positive_item_ids.iter().cloned().collect())
            .collect();
        let mut table = BTreeMap::new();
        let mut last = RecallValue {
            value: 0.0,
            impressions: 0,
            excluded: 0,
        };
        for k in RECALL_KS {
            last = recall_at_k(rankings, &relevants, k)?;
            table.insert(k, last.value);
        }
        Ok(EvalReport {
            recall_at_k: table,
            impression_count: last.impressions,
            candidate_pool_size: pool_size,
            excluded_impressions: last.excluded,
            history_fallbacks: fallbacks,
        })
    }
}

/// A frozen model plus what it needs to embed users.
pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
    pub featurizer: &'a Featurizer,
    pub items: &'a HashMap<String, ItemFeatures>,
}

const MAX_K: usize = 40;

fn model_rankings<'p>(
    scorer: &ModelScorer,
    split: &[Example],
    pool: &'p CandidatePool,
    skip_seconds: i64,
) -> Result<(Vec<Vec<&'p str>>, usize)> {
    if pool.embeddings.len() != pool.ids.len() {
        return Err(Error::Contract("candidate pool has no embeddings".into()));
    }
    let ranked = split
        .par_iter()
        .map(|(history, imp)| {
            let h = apply_history_skip(history, imp.impression_time, skip_seconds);
            match encode_user(scorer.params, scorer.featurizer, &h, scorer.items) {
                Ok(u) => {
                    let scores: Vec<f32> =
                        pool.embeddings.iter().map(|e| dot(u.values(), e)).collect();
                    let ids = top_k(&scores, MAX_K)
                        .into_iter()
                        .map(|i| pool.ids[i].as_str())
                        .collect();
                    Ok((ids, false))
                }
                Err(Error::EmptyHistory) => {
                    let mut r = rvi_rank(&h, &pool.ids);
                    r.truncate(MAX_K);
                    Ok((r, true))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let fallbacks = ranked.iter().filter(|r| r.1).count();
    Ok((ranked.into_iter().map(|r| r.0).collect(), fallbacks))
}

/// Recall@k of the model over the full candidate pool.
pub fn evaluate(scorer: &ModelScorer, split: &[Example], pool: &CandidatePool) -> Result<EvalReport> {
    pool.check_coverage(split)?;
    let (rankings, fallbacks) = model_rankings(scorer, split, pool, 0)?;
    EvalReport::from_rankings(&rankings, split, pool.len(), fallbacks)
}

/// Recall@k of the recently-viewed-items baseline over the same pool.
pub fn evaluate_rvi(split: &[Example], pool: &CandidatePool) -> Result<EvalReport> {
    pool.check_coverage(split)?;
    let rankings: Vec<Vec<&str>> = split
        .par_iter()
        .map(|(h, _)| {
            let mut r = rvi_rank(h, &pool.ids);
            r.truncate(MAX_K);
            r
        })
        .collect();
    EvalReport::from_rankings(&rankings, split, pool.len(), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub missing_minutes: u32,
    pub recall_at_20: f64,
    pub history_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub points: Vec<AblationPoint>,
    pub model_skip_minutes: u32,
}

impl AblationCurve {
    /// Trapezoidal area under recall@20 over missing minutes.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let dx = (w[1].missing_minutes - w[0].missing_minutes) as f64;
                dx * (w[0].recall_at_20 + w[1].recall_at_20) / 2.0
            })
            .sum()
    }
}

/// Recall@20 with the most recent `w` minutes of history removed at prediction
/// time, for each `w` in `missing_minutes` (strictly increasing).
pub fn ablation_curve(
    scorer: &ModelScorer,
    split: &[Example],
    pool: &CandidatePool,
    missing_minutes: &[u32],
    model_skip_minutes: u32,
) -> Result<AblationCurve> {
    if missing_minutes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter {
            name: "missing_windows",
            reason: "must be strictly increasing".into(),
        });
    }
    pool.check_coverage(split)?;
    let mut points = Vec::with_capacity(missing_minutes.len());
    for &w in missing_minutes {
        let (rankings, fallbacks) = model_rankings(scorer, split, pool, w as i64 * 60)?;
        let r = EvalReport::from_rankings(&rankings, split, pool.len(), fallbacks)?;
        points.push(AblationPoint {
            missing_minutes: w,
            recall_at_20: r.recall(20),
            history_fallbacks: fallbacks,
        });
    }
    Ok(AblationCurve {
        points,
        model_skip_minutes,
    })
}

/// Index of the curve with the largest AUC; ties go to the smaller training skip.
pub fn select_by_auc(curves: &[AblationCurve]) -> Option<usize> {
    (0..curves.len()).reduce(|best, i| {
        let (a, b) = (curves[i].auc(), curves[best].auc());
        if a > b || (a == b && curves[i].model_skip_minutes < curves[best].model_skip_minutes) {
            i
        } else {
            best
        }
    })
}

/// Fixed-width comparison table: k, baseline, model, relative change.
pub fn format_table(baseline: &EvalReport, model: &EvalReport) -> String {
    let mut s = format!("{:>10} {:>10} {:>10} {:>9}\n", "Recall@k", "RVI", "model", "delta %");
    for k in RECALL_KS {
        let (b, m) = (baseline.recall(k), model.recall(k));
        let delta = if b > 0.0 {
            format!("{:+.1}", (m - b) / b * 100.0)
        } else {
            "n/a".into()
        };
        s.push_str(&format!("{k:>10} {b:>10.4} {m:>10.4} {delta:>9}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserEvent;

    fn set(ids: &[&str]) -> HashSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ranking_and_ties() {
        let pool = CandidatePool {
            ids: vec!["a".into(), "b".into(), "c".into()],
            embeddings: vec![vec![0.1, 0.0], vec![0.9, 0.0], vec![0.1, 0.0]],
        };
        assert_eq!(rank_candidates(&[1.0, 0.0], &pool), vec!["b", "a", "c"]);
    }

    #[test]
    fn recall_examples() {
        let r = vec![vec!["x", "y", "p", "z"]];
        assert_eq!(recall_at_k(&r, &[set(&["p"])], 5).unwrap().value, 1.0);
        assert_eq!(recall_at_k(&r, &[set(&["p"])], 1).unwrap().value, 0.0);
        let mut second: Vec<String> = (0..20).map(|i| format!("n{i}")).collect();
        second[10] = "q".into();
        let rankings = vec![
            vec!["p".to_string()].into_iter().chain(second.clone()).collect::<Vec<_>>(),
            second,
        ];
        let v = recall_at_k(&rankings, &[set(&["p"]), set(&["q"])], 10).unwrap();
        assert_eq!(v.value, 0.5);
        let v = recall_at_k(&rankings, &[set(&["p"]), set(&[])], 10).unwrap();
        assert_eq!((v.value, v.excluded), (1.0, 1));
    }

    #[test]
    fn rvi_orders_by_latest_view() {
        let h = UserHistory {
            user_id: "u".into(),
            events: vec![
                UserEvent::item_view("u", 1, "C"),
                UserEvent::item_view("u", 3, "A"),
                UserEvent::item_view("u", 5, "B"),
            ],
            reference_time: 10,
        };
        let ids: Vec<String> = ["D", "C", "B", "A"].iter().map(|s| s.to_string()).collect();
        assert_eq!(rvi_rank(&h, &ids), vec!["B", "A", "C", "D"]);
        let mut h2 = h.clone();
        h2.events.push(UserEvent::item_view("u", 9, "C"));
        assert_eq!(rvi_rank(&h2, &ids), vec!["C", "B", "A", "D"]);
        assert_eq!(rvi_rank(&UserHistory::default(), &ids), vec!["A", "B", "C", "D"]);
    }

    #[test]
    fn auc_and_selection() {
        let flat = |v: f64, skip| AblationCurve {
            points: vec![
                AblationPoint { missing_minutes: 0, recall_at_20: v, history_fallbacks: 0 },
                AblationPoint { missing_minutes: 60, recall_at_20: v, history_fallbacks: 0 },
            ],
            model_skip_minutes: skip,
        };
        assert_eq!(flat(0.5, 0).auc(), 30.0);
        assert_eq!(select_by_auc(&[flat(0.4, 0), flat(0.5, 10)]), Some(1));
        assert_eq!(select_by_auc(&[flat(0.5, 10), flat(0.5, 0)]), Some(1));
        assert_eq!(select_by_auc(&[]), None);
    }

    #[test]
    fn top_k_is_stable_on_ties() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 2.0], 3), vec![1, 2, 3]);
        assert_eq!(top_k(&[1.0], 5), vec![0]);
    }
}
