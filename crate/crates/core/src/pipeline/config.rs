//! `key=value` run configuration shared by the CLI and [`super::run_all`].

use std::path::{Path, PathBuf};

use crate::corpus::{CorpusConfig, DAY};
use crate::error::{Error, Result};
use crate::nn::params::parse;
use crate::nn::HyperParams;
use crate::retrieval::RetrievalConfig;
use crate::towers::VocabConfig;
use crate::training::TrainConfig;

/// Where every artifact lives. All default to fixed names under one directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub title_vocab: PathBuf,
    pub aspect_vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub candidates: PathBuf,
    pub item_embeddings: PathBuf,
    pub user_embeddings: PathBuf,
    /// Users with no usable history, one id per line.
    pub cold_users: PathBuf,
    pub index: PathBuf,
    pub results_store: PathBuf,
    pub report: PathBuf,
}

impl Paths {
    pub fn under(dir: &Path) -> Self {
        Paths {
            corpus_dir: dir.join("corpus"),
            title_vocab: dir.join("title.vocab"),
            aspect_vocab: dir.join("aspect.vocab"),
            checkpoint: dir.join("model.ettw"),
            metrics: dir.join("metrics.jsonl"),
            candidates: dir.join("candidates.txt"),
            item_embeddings: dir.join("items.eemb"),
            user_embeddings: dir.join("users.eemb"),
            cold_users: dir.join("cold_users.txt"),
            index: dir.join("items.ecix"),
            results_store: dir.join("results.erst"),
            report: dir.join("report.json"),
        }
    }

    pub fn items(&self) -> PathBuf {
        self.corpus_dir.join("items.jsonl")
    }

    pub fn events(&self) -> PathBuf {
        self.corpus_dir.join("events.jsonl")
    }

    pub fn impressions(&self) -> PathBuf {
        self.corpus_dir.join("impressions.jsonl")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub candidate_min_clicks: usize,
    pub candidate_click_window_seconds: i64,
    pub user_activity_window_seconds: i64,
    /// "Now" for every window; `None` means one second past the newest record.
    pub reference_time: Option<i64>,
    pub retrieval: RetrievalConfig,
    /// List size served to users without an embedding.
    pub fallback_top_popular: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::under(Path::new("recsys-work")),
            candidate_min_clicks: 2,
            candidate_click_window_seconds: 4 * DAY,
            user_activity_window_seconds: 30 * DAY,
            reference_time: None,
            retrieval: RetrievalConfig::default(),
            fallback_top_popular: 12,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_click_window_seconds <= 0 {
            return Err(Error::config("candidate_click_window_seconds", "must be > 0"));
        }
        if self.user_activity_window_seconds <= 0 {
            return Err(Error::config("user_activity_window_seconds", "must be > 0"));
        }
        if self.fallback_top_popular > self.retrieval.n {
            return Err(Error::config(
                "fallback_top_popular",
                format!("must be <= n = {}", self.retrieval.n),
            ));
        }
        self.retrieval.validate()
    }
}

/// Everything one CLI invocation can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub vocab: VocabConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    /// Missing-history windows for the ablation, in minutes.
    pub ablation_minutes: Vec<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: CorpusConfig::default(),
            vocab: VocabConfig::default(),
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            ablation_minutes: vec![0, 5, 10, 30, 60],
        }
    }
}

impl RunConfig {
    /// Applies one setting. Keys are applied in file order, so `preset` should
    /// come before any hyperparameter it would otherwise overwrite.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let p = &mut self.pipeline;
        let path = || PathBuf::from(value);
        match key {
            "preset" => {
                let seed = self.train.hyper.seed;
                self.train.hyper = match value {
                    "desk" => HyperParams::desk(),
                    "full" => HyperParams::default(),
                    _ => return Err(Error::config(key, format!("expected desk|full, got `{value}`"))),
                };
                self.train.hyper.seed = seed;
            }
            "work_dir" => p.paths = Paths::under(Path::new(value)),
            "corpus_dir" => p.paths.corpus_dir = path(),
            "title_vocab" => p.paths.title_vocab = path(),
            "aspect_vocab" => p.paths.aspect_vocab = path(),
            "checkpoint" => p.paths.checkpoint = path(),
            "metrics" => p.paths.metrics = path(),
            "candidates" => p.paths.candidates = path(),
            "item_embeddings" => p.paths.item_embeddings = path(),
            "user_embeddings" => p.paths.user_embeddings = path(),
            "cold_users" => p.paths.cold_users = path(),
            "index" => p.paths.index = path(),
            "results_store" => p.paths.results_store = path(),
            "report" => p.paths.report = path(),
            "candidate_min_clicks" => p.candidate_min_clicks = parse(key, value)?,
            "candidate_click_window_seconds" => p.candidate_click_window_seconds = parse(key, value)?,
            "user_activity_window_seconds" => p.user_activity_window_seconds = parse(key, value)?,
            "reference_time" => p.reference_time = Some(parse(key, value)?),
            "fallback_top_popular" => p.fallback_top_popular = parse(key, value)?,
            "n" => p.retrieval.n = parse(key, value)?,
            "m" => p.retrieval.m = parse(key, value)?,
            "k" => p.retrieval.k = if value == "auto" { None } else { Some(parse(key, value)?) },
            "kmeans_max_iters" => p.retrieval.max_iters = parse(key, value)?,
            "kmeans_seed" => p.retrieval.seed = parse(key, value)?,
            "title_vocab_max" => self.vocab.title_max_size = parse(key, value)?,
            "aspect_vocab_max" => self.vocab.aspect_max_size = parse(key, value)?,
            "vocab_min_frequency" => self.vocab.min_frequency = parse(key, value)?,
            "user_tower" => self.train.user_tower = value.parse()?,
            "negative_mode" => self.train.negative_mode = value.parse()?,
            "skip_window_seconds" => self.train.skip_window_seconds = parse(key, value)?,
            "checkpoint_every" => self.train.checkpoint_every = parse(key, value)?,
            "validation_pool" => self.train.validation_pool = parse(key, value)?,
            "ablation_minutes" => {
                self.ablation_minutes = value
                    .split(',')
                    .map(|x| parse(key, x))
                    .collect::<Result<_>>()?
            }
            _ => {
                if !self.train.hyper.set(key, value)? && !self.corpus.set(key, value)? {
                    return Err(Error::config(key, "unknown key"));
                }
            }
        }
        Ok(())
    }

    /// `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected key=value, got `{line}`")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// One seed for the corpus, the model and k-means.
    pub fn set_seed(&mut self, seed: u64) {
        self.corpus.rng_seed = seed;
        self.train.hyper.seed = seed;
        self.pipeline.retrieval.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.train.validate()?;
        self.pipeline.validate()?;
        if self.ablation_minutes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("ablation_minutes", "must be strictly increasing"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::UserTower;

    #[test]
    fn parses_keys_from_every_section() {
        let cfg = RunConfig::parse(
            "# desk run\npreset=desk\nwork_dir=/tmp/w\nn_users = 50\ntau=0.5\nuser_tower=cboe\nk=auto\nm=3\nablation_minutes=0,10\n",
        )
        .unwrap();
        assert_eq!(cfg.corpus.n_users, 50);
        assert_eq!(cfg.train.hyper.tau, 0.5);
        assert_eq!(cfg.train.hyper.dim, HyperParams::desk().dim);
        assert_eq!(cfg.train.user_tower, UserTower::Cboe);
        assert_eq!(cfg.pipeline.retrieval.m, 3);
        assert_eq!(cfg.pipeline.paths.index, PathBuf::from("/tmp/w/items.ecix"));
        assert_eq!(cfg.ablation_minutes, vec![0, 10]);
    }

    #[test]
    fn bad_lines_name_the_problem() {
        assert!(matches!(RunConfig::parse("bogus=1"), Err(Error::Config { field, .. }) if field == "bogus"));
        assert!(matches!(RunConfig::parse("tau"), Err(Error::Config { field, .. }) if field == "line 1"));
        assert!(matches!(RunConfig::parse("epochs=x"), Err(Error::Config { field, .. }) if field == "epochs"));
        let mut cfg = RunConfig::default();
        cfg.pipeline.fallback_top_popular = 99;
        assert!(cfg.validate().is_err());
    }
}
