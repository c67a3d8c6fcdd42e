use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAY: i64 = 86_400;
pub const MINUTE: i64 = 60;

/// A listing as described by its content. The id is never seen by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub category_id: u32,
    pub aspects: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    ItemView,
    SearchQuery,
}

impl EventType {
    /// Row of the event-type table.
    pub fn index(self) -> usize {
        match self {
            EventType::ItemView => 0,
            EventType::SearchQuery => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEvent {
    pub user_id: String,
    pub timestamp: i64,
    pub event_type: EventType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_category_id: Option<u32>,
}

impl UserEvent {
    pub fn item_view(user_id: impl Into<String>, timestamp: i64, item_id: impl Into<String>) -> Self {
        UserEvent {
            user_id: user_id.into(),
            timestamp,
            event_type: EventType::ItemView,
            item_id: Some(item_id.into()),
            query_text: None,
            query_category_id: None,
        }
    }

    pub fn search(
        user_id: impl Into<String>,
        timestamp: i64,
        text: impl Into<String>,
        category: Option<u32>,
    ) -> Self {
        UserEvent {
            user_id: user_id.into(),
            timestamp,
            event_type: EventType::SearchQuery,
            item_id: None,
            query_text: Some(text.into()),
            query_category_id: category,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if self.timestamp < 0 {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        match self.event_type {
            EventType::ItemView => {
                if self.item_id.as_deref().map_or(true, str::is_empty) {
                    return Err("item_view event without item_id".into());
                }
                if self.query_text.is_some() || self.query_category_id.is_some() {
                    return Err("item_view event carries query fields".into());
                }
            }
            EventType::SearchQuery => {
                if self.query_text.is_none() {
                    return Err("search_query event without query_text".into());
                }
                if self.item_id.is_some() {
                    return Err("search_query event carries item_id".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    pub user_id: String,
    pub impression_time: i64,
    pub positive_item_ids: Vec<String>,
    pub negative_item_ids: Vec<String>,
}

impl ImpressionRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.positive_item_ids.is_empty() {
            return Err("impression without positives".into());
        }
        if self.impression_time < 0 {
            return Err(format!("negative impression_time {}", self.impression_time));
        }
        if let Some(p) = self
            .positive_item_ids
            .iter()
            .find(|p| self.negative_item_ids.contains(p))
        {
            return Err(format!("item `{p}` is both positive and negative"));
        }
        Ok(())
    }
}

/// Time-ascending events of one user strictly before `reference_time`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UserHistory {
    pub user_id: String,
    pub events: Vec<UserEvent>,
    pub reference_time: i64,
}

impl UserHistory {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }
}

/// Parameters of the synthetic marketplace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub n_latent_interests: usize,
    /// Inclusive range of background events per user.
    pub events_per_user_range: (usize, usize),
    pub impressions_per_user: usize,
    pub history_window_seconds: i64,
    pub rng_seed: u64,
    /// Days of impressions assigned to each split, in time order.
    pub train_days: i64,
    pub validation_days: i64,
    pub test_days: i64,
    /// Items rendered per impression (positives included).
    pub impression_size: usize,
    pub query_rate: f64,
    /// Clicks follow the user's most recent session instead of the long-term profile.
    pub last_interest_dominant: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_users: 3000,
            n_items: 5000,
            n_categories: 100,
            n_latent_interests: 10,
            events_per_user_range: (5, 15),
            impressions_per_user: 4,
            history_window_seconds: 30 * DAY,
            rng_seed: 7,
            train_days: 6,
            validation_days: 2,
            test_days: 2,
            impression_size: 12,
            query_rate: 0.2,
            last_interest_dominant: false,
        }
    }
}

/// Split boundaries: train `[start, train_end)`, validation `[train_end,
/// validation_end)`, test `[validation_end, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub start: i64,
    pub train_end: i64,
    pub validation_end: i64,
    pub end: i64,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_items", self.n_items),
            ("n_categories", self.n_categories),
            ("n_latent_interests", self.n_latent_interests),
            ("impressions_per_user", self.impressions_per_user),
            ("impression_size", self.impression_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        let (lo, hi) = self.events_per_user_range;
        if lo == 0 || lo > hi {
            return Err(Error::config(
                "events_per_user_range",
                format!("need 0 < min <= max, got {lo}..={hi}"),
            ));
        }
        if self.history_window_seconds <= 0 {
            return Err(Error::config("history_window_seconds", "must be > 0"));
        }
        if self.n_categories < self.n_latent_interests {
            return Err(Error::config(
                "n_categories",
                "must be >= n_latent_interests (every interest owns a category)",
            ));
        }
        if self.n_items < self.impression_size + 1 {
            return Err(Error::config("n_items", "must exceed impression_size"));
        }
        for (name, d) in [
            ("train_days", self.train_days),
            ("validation_days", self.validation_days),
            ("test_days", self.test_days),
        ] {
            if d <= 0 {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.query_rate) {
            return Err(Error::config("query_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn split_bounds(&self) -> SplitBounds {
        let start = self.history_window_seconds;
        let train_end = start + self.train_days * DAY;
        let validation_end = train_end + self.validation_days * DAY;
        SplitBounds {
            start,
            train_end,
            validation_end,
            end: validation_end + self.test_days * DAY,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        use crate::nn::params::parse;
        match key {
            "n_users" => self.n_users = parse(key, value)?,
            "n_items" => self.n_items = parse(key, value)?,
            "n_categories" => self.n_categories = parse(key, value)?,
            "n_latent_interests" => self.n_latent_interests = parse(key, value)?,
            "events_per_user_min" => self.events_per_user_range.0 = parse(key, value)?,
            "events_per_user_max" => self.events_per_user_range.1 = parse(key, value)?,
            "impressions_per_user" => self.impressions_per_user = parse(key, value)?,
            "history_window_seconds" => self.history_window_seconds = parse(key, value)?,
            "rng_seed" | "corpus_seed" => self.rng_seed = parse(key, value)?,
            "train_days" => self.train_days = parse(key, value)?,
            "validation_days" => self.validation_days = parse(key, value)?,
            "test_days" => self.test_days = parse(key, value)?,
            "impression_size" => self.impression_size = parse(key, value)?,
            "query_rate" => self.query_rate = parse(key, value)?,
            "last_interest_dominant" => self.last_interest_dominant = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
