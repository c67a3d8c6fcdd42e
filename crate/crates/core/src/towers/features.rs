use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{EventType, ItemRecord, UserEvent};
use crate::error::{Error, Result};
use crate::nn::ModelShape;
use crate::text::{aspect_tokens, build_vocab, tokenize, Vocabulary};

/// Content of an item (or search-query pseudo-item) as vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemFeatures {
    pub title_ids: Vec<u32>,
    pub aspect_ids: Vec<u32>,
    pub category_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabConfig {
    pub title_max_size: usize,
    pub aspect_max_size: usize,
    pub min_frequency: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            title_max_size: 400_000,
            aspect_max_size: 100_000,
            min_frequency: 1,
        }
    }
}

/// Maps raw records to [`ItemFeatures`]. The category table has one extra
/// row at the end (`categories − 1`) reserved for unknown categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub title_vocab: Vocabulary,
    pub aspect_vocab: Vocabulary,
    pub categories: usize,
}

impl Featurizer {
    pub fn new(title_vocab: Vocabulary, aspect_vocab: Vocabulary, categories: usize) -> Result<Self> {
        if categories == 0 {
            return Err(Error::config("categories", "must be > 0"));
        }
        Ok(Featurizer {
            title_vocab,
            aspect_vocab,
            categories,
        })
    }

    /// Builds both vocabularies from the item catalog. The category count is
    /// the largest observed id plus one, plus the UNKNOWN row.
    pub fn build(items: &[ItemRecord], cfg: &VocabConfig) -> Result<Self> {
        let title_vocab = build_vocab(
            items.iter().flat_map(|i| tokenize(&i.title)),
            cfg.title_max_size,
            cfg.min_frequency,
        )?;
        let aspect_vocab = build_vocab(
            items.iter().flat_map(|i| aspect_tokens(&i.aspects)),
            cfg.aspect_max_size,
            cfg.min_frequency,
        )?;
        let categories = items.iter().map(|i| i.category_id as usize + 1).max().unwrap_or(0) + 1;
        Featurizer::new(title_vocab, aspect_vocab, categories)
    }

    pub fn load(title: &Path, aspect: &Path, categories: usize) -> Result<Self> {
        Featurizer::new(Vocabulary::load(title)?, Vocabulary::load(aspect)?, categories)
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            title_vocab: self.title_vocab.len(),
            aspect_vocab: self.aspect_vocab.len(),
            categories: self.categories,
        }
    }

    /// Checkpoint tables must match the vocabularies they will be indexed with.
    pub fn check_compatible(&self, shape: &ModelShape) -> Result<()> {
        if *shape != self.shape() {
            return Err(Error::Compatibility(format!(
                "checkpoint tables {shape:?} do not match vocabularies {:?}",
                self.shape()
            )));
        }
        Ok(())
    }

    pub fn unknown_category(&self) -> u32 {
        (self.categories - 1) as u32
    }

    fn category(&self, c: Option<u32>) -> u32 {
        match c {
            Some(c) if c < self.unknown_category() => c,
            _ => self.unknown_category(),
        }
    }

    pub fn item(&self, rec: &ItemRecord) -> ItemFeatures {
        ItemFeatures {
            title_ids: self.title_vocab.encode(&tokenize(&rec.title)),
            aspect_ids: self.aspect_vocab.encode(&aspect_tokens(&rec.aspects)),
            category_id: self.category(Some(rec.category_id)),
        }
    }

    pub fn items(&self, items: &[ItemRecord]) -> HashMap<String, ItemFeatures> {
        items
            .iter()
            .map(|r| (r.item_id.clone(), self.item(r)))
            .collect()
    }

    /// A search query as an item: query text through the title vocabulary,
    /// no aspects, and the query category (UNKNOWN when absent).
    pub fn pseudo_item_from_query(&self, event: &UserEvent) -> Result<ItemFeatures> {
        if event.event_type != EventType::SearchQuery {
            return Err(Error::Contract(format!(
                "pseudo-item requested for a {:?} event",
                event.event_type
            )));
        }
        let text = event.query_text.as_deref().unwrap_or("");
        Ok(ItemFeatures {
            title_ids: self.title_vocab.encode(&tokenize(text)),
            aspect_ids: Vec::new(),
            category_id: self.category(event.query_category_id),
        })
    }

    /// Features behind one history event: the viewed item or the query pseudo-item.
    pub fn event(
        &self,
        event: &UserEvent,
        items_by_id: &HashMap<String, ItemFeatures>,
    ) -> Result<ItemFeatures> {
        match event.event_type {
            EventType::SearchQuery => self.pseudo_item_from_query(event),
            EventType::ItemView => {
                let id = event.item_id.as_deref().unwrap_or("");
                items_by_id
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::MissingItem(id.to_string()))
            }
        }
    }

    pub fn save_vocabs(&self, title: &Path, aspect: &Path) -> Result<()> {
        self.title_vocab.save(title)?;
        self.aspect_vocab.save(aspect)
    }
}
