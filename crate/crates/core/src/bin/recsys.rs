//! `recsys`: corpus generation, training, evaluation and the offline serving
//! loop. Every command reads the same `key=value` config file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use embrec::corpus::{build_dataset, generate_corpus, save_jsonl, DatasetSplit, ItemRecord};
use embrec::eval::{
    ablation_curve, evaluate, evaluate_rvi, format_table, CandidatePool, ModelScorer,
};
use embrec::nn::{load_checkpoint, save_checkpoint};
use embrec::pipeline::*;
use embrec::towers::{EmbeddingTable, Featurizer};
use embrec::training::{metrics_jsonl, train, TrainingData};
use embrec::{Error, Result};

#[derive(Parser)]
#[command(name = "recsys", version, about = "Two-tower recommender: train, evaluate, batch-serve")]
struct Cli {
    /// key=value settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the corpus, model and k-means seeds
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra key=value setting, applied after the file (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus
    Synth,
    /// Build title and aspect vocabularies from the item catalog
    BuildVocab,
    /// Train a model on the train split, select on validation
    Train,
    /// Filter candidates and embed them
    EmbedItems,
    /// Embed every user with recent activity; list the rest as cold
    EmbedUsers,
    /// Cluster the item embeddings
    BuildIndex,
    /// Write every user's list to the results store
    Retrieve,
    /// Test-split Recall@k of the model against the RVI baseline
    Evaluate {
        /// Print the JSON reports instead of the table
        #[arg(long)]
        json: bool,
    },
    /// Recall@20 with recent history removed at prediction time
    Ablation,
    /// Print one user's stored list
    Lookup {
        user: String,
    },
    /// Filter, embed, index and retrieve in one go
    RunAll,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.set("preset", "desk")?;
            c
        }
    };
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::config("--set", format!("expected key=value, got `{s}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Saved vocabularies when present, otherwise built from the catalog and saved.
fn featurizer(cfg: &RunConfig, items: &[ItemRecord]) -> Result<Featurizer> {
    let p = &cfg.pipeline.paths;
    let built = Featurizer::build(items, &cfg.vocab)?;
    if p.title_vocab.exists() && p.aspect_vocab.exists() {
        return Featurizer::load(&p.title_vocab, &p.aspect_vocab, built.categories);
    }
    ensure_parent(&p.title_vocab)?;
    built.save_vocabs(&p.title_vocab, &p.aspect_vocab)?;
    Ok(built)
}

fn split(cfg: &RunConfig, corpus: &Corpus) -> Result<DatasetSplit> {
    build_dataset(&corpus.items, &corpus.events, &corpus.impressions, &cfg.corpus)
}

/// Everything evaluation needs; the pool is the whole catalog.
fn with_model<T>(cfg: &RunConfig, f: impl FnOnce(&ModelScorer, &DatasetSplit, &CandidatePool) -> Result<T>) -> Result<T> {
    let corpus = Corpus::load(&cfg.pipeline.paths)?;
    let (params, featurizer) = load_model(&cfg.pipeline.paths)?;
    let items = featurizer.items(&corpus.items);
    let split = split(cfg, &corpus)?;
    let pool = CandidatePool::embed(&params, &featurizer, &corpus.items)?;
    let scorer = ModelScorer {
        params: &params,
        featurizer: &featurizer,
        items: &items,
    };
    f(&scorer, &split, &pool)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let pc = &cfg.pipeline;
    let paths = &pc.paths;
    match &cli.command {
        Command::Synth => {
            let (items, events, imps) = generate_corpus(&cfg.corpus)?;
            std::fs::create_dir_all(&paths.corpus_dir).map_err(|e| Error::io(&paths.corpus_dir, e))?;
            save_jsonl(&items, &paths.items())?;
            save_jsonl(&events, &paths.events())?;
            save_jsonl(&imps, &paths.impressions())?;
            print_json(&json!({"items": items.len(), "events": events.len(), "impressions": imps.len()}))?;
        }
        Command::BuildVocab => {
            let items = embrec::corpus::load_items(&paths.items())?;
            let f = Featurizer::build(&items, &cfg.vocab)?;
            ensure_parent(&paths.title_vocab)?;
            f.save_vocabs(&paths.title_vocab, &paths.aspect_vocab)?;
            print_json(&f.shape())?;
        }
        Command::Train => {
            let corpus = Corpus::load(paths)?;
            let f = featurizer(&cfg, &corpus.items)?;
            let split = split(&cfg, &corpus)?;
            let data = TrainingData {
                featurizer: &f,
                items: &corpus.items,
                train: &split.train,
                validation: &split.validation,
            };
            let out = train(&data, &cfg.train)?;
            ensure_parent(&paths.checkpoint)?;
            save_checkpoint(&out.params, &paths.checkpoint)?;
            std::fs::write(&paths.metrics, metrics_jsonl(&out.log)).map_err(|e| Error::io(&paths.metrics, e))?;
            print_json(&json!({"best_epoch": out.best_epoch, "counters": out.counters, "log": out.log}))?;
        }
        Command::EmbedItems => {
            let corpus = Corpus::load(paths)?;
            let r = pc.reference_time_for(&corpus);
            let candidates = step_filter(pc, &corpus, r)?;
            let (_, _, t) = step_embed_items(pc, &corpus, &candidates)?;
            print_json(&json!({"candidates": candidates.len(), "embedded": t.len(), "reference_time": r}))?;
        }
        Command::EmbedUsers => {
            let corpus = Corpus::load(paths)?;
            let r = pc.reference_time_for(&corpus);
            let (params, f) = load_model(paths)?;
            let (t, cold) = step_embed_users(pc, &corpus, &params, &f, r)?;
            print_json(&json!({"embedded": t.len(), "cold": cold.len(), "reference_time": r}))?;
        }
        Command::BuildIndex => {
            let corpus = Corpus::load(paths)?;
            let r = pc.reference_time_for(&corpus);
            let items = EmbeddingTable::load(&paths.item_embeddings)?;
            let tau = load_checkpoint(&paths.checkpoint)?.hyper.tau;
            let index = step_build_index(pc, &items, tau, r)?;
            let sizes: Vec<usize> = index.clusters.iter().map(Vec::len).collect();
            print_json(&json!({"items": index.len(), "clusters": index.k(), "cluster_sizes": sizes}))?;
        }
        Command::Retrieve => {
            let corpus = Corpus::load(paths)?;
            let r = pc.reference_time_for(&corpus);
            let index = embrec::retrieval::ClusteredIndex::load(&paths.index)?;
            let users = EmbeddingTable::load(&paths.user_embeddings)?;
            let cold = load_id_list(&paths.cold_users)?;
            let candidates = load_id_list(&paths.candidates)?;
            let store = step_retrieve(pc, &corpus, &candidates, &index, &users, &cold, r)?;
            print_json(&json!({"users": store.entries.len(), "fallback": cold.len()}))?;
        }
        Command::Evaluate { json } => {
            let (rvi, model) = with_model(&cfg, |scorer, split, pool| {
                Ok((evaluate_rvi(&split.test, pool)?, evaluate(scorer, &split.test, pool)?))
            })?;
            if *json {
                print_json(&json!({"rvi": rvi, "model": model}))?;
            } else {
                print!("{}", format_table(&rvi, &model));
            }
        }
        Command::Ablation => {
            let skip = (cfg.train.skip_window_seconds / 60) as u32;
            let curve = with_model(&cfg, |scorer, split, pool| {
                ablation_curve(scorer, &split.test, pool, &cfg.ablation_minutes, skip)
            })?;
            print_json(&json!({"curve": curve, "auc": curve.auc()}))?;
        }
        Command::Lookup { user } => {
            let out = match lookup(&paths.results_store, user)? {
                Lookup::Found(e) => json!({"user": user, "status": "found", "source": e.source, "items": e.items}),
                Lookup::NotFound => json!({"user": user, "status": "not_found", "items": []}),
            };
            print_json(&out)?;
        }
        Command::RunAll => {
            let report = run_all(pc)?;
            print_json(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("recsys: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
