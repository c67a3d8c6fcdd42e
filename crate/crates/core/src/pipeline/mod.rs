//! Offline serving loop at desk scale: filter candidates, embed items and
//! users, build the clustered index, and write every user's list into a
//! results store that `lookup` reads.

pub mod config;
pub mod store;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Paths, PipelineConfig, RunConfig};
pub use store::{lookup, Lookup, ResultsStore, Source, StoreEntry, STORE_MAGIC};

use crate::binio::{read_file, write_atomic};
use crate::corpus::{load_events, load_impressions, load_items, EventIndex, ImpressionRecord, ItemRecord, UserEvent};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, ModelParams};
use crate::retrieval::{retrieve, ClusteredIndex, RetrievalConfig};
use crate::towers::{encode_item, encode_user, EmbeddingTable, Featurizer, ItemFeatures};

/// Everything the pipeline reads from a corpus directory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub items: Vec<ItemRecord>,
    pub events: Vec<UserEvent>,
    pub impressions: Vec<ImpressionRecord>,
}

impl Corpus {
    pub fn load(paths: &Paths) -> Result<Self> {
        Ok(Corpus {
            items: load_items(&paths.items())?,
            events: load_events(&paths.events())?,
            impressions: load_impressions(&paths.impressions())?,
        })
    }

    /// One second past the newest event or impression.
    pub fn end_time(&self) -> i64 {
        let e = self.events.iter().map(|e| e.timestamp);
        let i = self.impressions.iter().map(|i| i.impression_time);
        e.chain(i).max().map_or(0, |t| t + 1)
    }

    /// Every click as `(item_id, time)`: the positives of each impression.
    pub fn clicks(&self) -> Vec<(&str, i64)> {
        self.impressions
            .iter()
            .flat_map(|imp| imp.positive_item_ids.iter().map(move |p| (p.as_str(), imp.impression_time)))
            .collect()
    }

    /// Sorted ids of everyone with an event or an impression.
    pub fn users(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .events
            .iter()
            .map(|e| e.user_id.as_str())
            .chain(self.impressions.iter().map(|i| i.user_id.as_str()))
            .collect();
        set.into_iter().map(String::from).collect()
    }
}

/// Clicks per item inside `[reference_time − window, reference_time)`.
pub fn click_counts(clicks: &[(&str, i64)], window: i64, reference_time: i64) -> HashMap<String, usize> {
    let mut n: HashMap<String, usize> = HashMap::new();
    for &(id, t) in clicks {
        if t >= reference_time - window && t < reference_time {
            *n.entry(id.to_string()).or_default() += 1;
        }
    }
    n
}

/// Ids (ascending) of items with at least `min_clicks` clicks in the window.
pub fn filter_candidates(
    items: &[ItemRecord],
    clicks: &[(&str, i64)],
    min_clicks: usize,
    window: i64,
    reference_time: i64,
) -> Vec<String> {
    let counts = click_counts(clicks, window, reference_time);
    let mut ids: Vec<String> = items
        .iter()
        .filter(|i| counts.get(&i.item_id).copied().unwrap_or(0) >= min_clicks)
        .map(|i| i.item_id.clone())
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Checkpoint plus the vocabularies it was trained with.
pub fn load_model(paths: &Paths) -> Result<(ModelParams, Featurizer)> {
    let params = load_checkpoint(&paths.checkpoint)?;
    let featurizer = Featurizer::load(&paths.title_vocab, &paths.aspect_vocab, params.shape.categories)?;
    featurizer.check_compatible(&params.shape)?;
    Ok((params, featurizer))
}

/// Item tower output for `ids`, in that order.
pub fn batch_embed_items(
    params: &ModelParams,
    featurizer: &Featurizer,
    items: &[ItemRecord],
    ids: &[String],
) -> Result<EmbeddingTable> {
    let by_id: HashMap<&str, &ItemRecord> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let vectors = ids
        .par_iter()
        .map(|id| {
            let rec = by_id.get(id.as_str()).ok_or_else(|| Error::MissingItem(id.clone()))?;
            encode_item(params, &featurizer.item(rec)).map(|e| e.into_inner())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = EmbeddingTable::new(params.hyper.dim);
    for (id, v) in ids.iter().zip(vectors) {
        t.push(id.clone(), v)?;
    }
    Ok(t)
}

/// User tower output for `users` over their activity window. Users whose
/// history is empty (or holds only unknown items) come back in the cold list.
pub fn batch_embed_users(
    params: &ModelParams,
    featurizer: &Featurizer,
    events: &EventIndex,
    items_by_id: &HashMap<String, ItemFeatures>,
    users: &[String],
    window: i64,
    reference_time: i64,
) -> Result<(EmbeddingTable, Vec<String>)> {
    let out = users
        .par_iter()
        .map(|u| {
            let h = events.history(u, reference_time, window);
            match encode_user(params, featurizer, &h, items_by_id) {
                Ok(e) => Ok(Some(e.into_inner())),
                Err(Error::EmptyHistory) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = EmbeddingTable::new(params.hyper.dim);
    let mut cold = Vec::new();
    for (u, v) in users.iter().zip(out) {
        match v {
            Some(v) => table.push(u.clone(), v)?,
            None => cold.push(u.clone()),
        }
    }
    Ok((table, cold))
}

pub fn build_index(items: &EmbeddingTable, cfg: &RetrievalConfig, tau: f32, built_at: i64) -> Result<ClusteredIndex> {
    if items.is_empty() {
        return Err(Error::EmptyDataset("no candidate items to index".into()));
    }
    let k = cfg.clusters_for(items.len());
    ClusteredIndex::build(&items.ids, &items.vectors, k, tau, cfg.max_iters, cfg.seed, built_at)
}

/// The `n` most clicked candidates (ties by id), scored by click count.
pub fn popular(candidates: &[String], counts: &HashMap<String, usize>, n: usize) -> Vec<(String, f32)> {
    let mut v: Vec<(String, usize)> = candidates
        .iter()
        .map(|c| (c.clone(), counts.get(c).copied().unwrap_or(0)))
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(id, c)| (id, c as f32)).collect()
}

/// Every user gets exactly one entry: retrieved for embedded users, the
/// popular list for cold ones.
pub fn batch_retrieve(
    index: &ClusteredIndex,
    users: &EmbeddingTable,
    cold: &[String],
    fallback: &[(String, f32)],
    cfg: &RetrievalConfig,
    generated_at: i64,
) -> Result<ResultsStore> {
    if users.dim != index.dim && !users.is_empty() {
        return Err(Error::Consistency(format!(
            "user embeddings have dim {}, index has {}",
            users.dim, index.dim
        )));
    }
    let universe: HashSet<&str> = index.item_ids().collect();
    if let Some((id, _)) = fallback.iter().find(|(id, _)| !universe.contains(id.as_str())) {
        return Err(Error::Consistency(format!("fallback item `{id}` is not indexed")));
    }
    let lists = users
        .vectors
        .par_iter()
        .map(|u| retrieve(index, u, cfg.n, cfg.m).map(|r| r.items))
        .collect::<Result<Vec<_>>>()?;
    let mut store = ResultsStore {
        generated_at,
        ..Default::default()
    };
    for (id, items) in users.ids.iter().zip(lists) {
        store.entries.insert(
            id.clone(),
            StoreEntry {
                source: Source::Model,
                items,
            },
        );
    }
    for id in cold {
        let entry = StoreEntry {
            source: Source::Fallback,
            items: fallback.to_vec(),
        };
        if store.entries.insert(id.clone(), entry).is_some() {
            return Err(Error::Consistency(format!("user `{id}` is both embedded and cold")));
        }
    }
    Ok(store)
}

pub fn save_id_list(ids: &[String], path: &Path) -> Result<()> {
    let mut text = ids.join("\n");
    if !ids.is_empty() {
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn load_id_list(path: &Path) -> Result<Vec<String>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub const STAGES: [&str; 5] = ["filter", "embed_items", "embed_users", "build_index", "retrieve"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// 1-based; the corpus files count as stage 0.
    pub stage: usize,
    pub name: String,
    pub status: String,
    pub count: usize,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub reference_time: i64,
    pub stages: Vec<StageReport>,
}

struct Runner {
    report: PipelineReport,
}

impl Runner {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<(T, usize)>) -> Result<T> {
        let stage = self.report.stages.len() + 1;
        let started = Instant::now();
        let out = f();
        let wall_ms = started.elapsed().as_millis() as u64;
        let (status, count, error) = match &out {
            Ok((_, n)) => ("ok", *n, None),
            Err(e) => ("failed", 0, Some(e.to_string())),
        };
        self.report.stages.push(StageReport {
            stage,
            name: name.into(),
            status: status.into(),
            count,
            wall_ms,
            error,
        });
        out.map(|x| x.0).map_err(|e| Error::Stage {
            stage: name.into(),
            source: Box::new(e),
        })
    }
}

fn write_report(report: &PipelineReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

impl PipelineConfig {
    pub fn reference_time_for(&self, corpus: &Corpus) -> i64 {
        self.reference_time.unwrap_or_else(|| corpus.end_time())
    }
}

/// Stage 1: writes and returns the candidate ids.
pub fn step_filter(cfg: &PipelineConfig, corpus: &Corpus, reference_time: i64) -> Result<Vec<String>> {
    let c = filter_candidates(
        &corpus.items,
        &corpus.clicks(),
        cfg.candidate_min_clicks,
        cfg.candidate_click_window_seconds,
        reference_time,
    );
    save_id_list(&c, &cfg.paths.candidates)?;
    Ok(c)
}

/// Stage 2: loads the model and writes the candidate embeddings.
pub fn step_embed_items(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    candidates: &[String],
) -> Result<(ModelParams, Featurizer, EmbeddingTable)> {
    let (params, featurizer) = load_model(&cfg.paths)?;
    let t = batch_embed_items(&params, &featurizer, &corpus.items, candidates)?;
    t.save(&cfg.paths.item_embeddings)?;
    Ok((params, featurizer, t))
}

/// Stage 3: writes user embeddings and the cold-user sidecar.
pub fn step_embed_users(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    params: &ModelParams,
    featurizer: &Featurizer,
    reference_time: i64,
) -> Result<(EmbeddingTable, Vec<String>)> {
    let items_by_id = featurizer.items(&corpus.items);
    let index = EventIndex::new(&corpus.events);
    let (t, cold) = batch_embed_users(
        params,
        featurizer,
        &index,
        &items_by_id,
        &corpus.users(),
        cfg.user_activity_window_seconds,
        reference_time,
    )?;
    t.save(&cfg.paths.user_embeddings)?;
    save_id_list(&cold, &cfg.paths.cold_users)?;
    Ok((t, cold))
}

/// Stage 4.
pub fn step_build_index(cfg: &PipelineConfig, items: &EmbeddingTable, tau: f64, reference_time: i64) -> Result<ClusteredIndex> {
    let index = build_index(items, &cfg.retrieval, tau as f32, reference_time)?;
    index.save(&cfg.paths.index)?;
    Ok(index)
}

/// Stage 5: cold users get the most clicked candidates.
pub fn step_retrieve(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    candidates: &[String],
    index: &ClusteredIndex,
    users: &EmbeddingTable,
    cold: &[String],
    reference_time: i64,
) -> Result<ResultsStore> {
    let counts = click_counts(&corpus.clicks(), cfg.candidate_click_window_seconds, reference_time);
    let fallback = popular(candidates, &counts, cfg.fallback_top_popular);
    let store = batch_retrieve(index, users, cold, &fallback, &cfg.retrieval, reference_time)?;
    store.save(&cfg.paths.results_store)?;
    Ok(store)
}

/// All five stages in order. The report is written even when a stage fails;
/// outputs of earlier stages stay on disk.
pub fn run_all(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let corpus = Corpus::load(&cfg.paths)?;
    let reference_time = cfg.reference_time_for(&corpus);
    let mut run = Runner {
        report: PipelineReport {
            reference_time,
            stages: Vec::new(),
        },
    };
    let result = run_stages(cfg, &corpus, reference_time, &mut run);
    write_report(&run.report, &cfg.paths.report)?;
    result.map(|_| run.report)
}

fn run_stages(cfg: &PipelineConfig, corpus: &Corpus, reference_time: i64, run: &mut Runner) -> Result<()> {
    let candidates = run.stage(STAGES[0], || {
        let c = step_filter(cfg, corpus, reference_time)?;
        let n = c.len();
        Ok((c, n))
    })?;
    let (params, featurizer, items) = run.stage(STAGES[1], || {
        let out = step_embed_items(cfg, corpus, &candidates)?;
        let n = out.2.len();
        Ok((out, n))
    })?;
    let (users, cold) = run.stage(STAGES[2], || {
        let (t, cold) = step_embed_users(cfg, corpus, &params, &featurizer, reference_time)?;
        let n = t.len() + cold.len();
        Ok(((t, cold), n))
    })?;
    let index = run.stage(STAGES[3], || {
        let index = step_build_index(cfg, &items, params.hyper.tau, reference_time)?;
        let n = index.k();
        Ok((index, n))
    })?;
    run.stage(STAGES[4], || {
        let store = step_retrieve(cfg, corpus, &candidates, &index, &users, &cold, reference_time)?;
        Ok(((), store.entries.len()))
    })
}
