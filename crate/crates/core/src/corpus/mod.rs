//! Synthetic marketplace corpus, impression datasets and their JSONL files.

pub mod dataset;
pub mod generate;
pub mod io;
pub mod types;

pub use dataset::{build_dataset, DatasetSplit, EventIndex, Example};
pub use generate::{generate_corpus, item_id, user_id, generate_corpus_with_truth, GroundTruth, SyntheticCorpus};
pub use io::{load_events, load_impressions, load_items, save_jsonl};
pub use types::*;
