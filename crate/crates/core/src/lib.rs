//! Embedding-based personalized recommendations.
//!
//! Items are embedded from content alone (title, aspects, category); users are
//! embedded from their recent item views and search queries. Both land on the
//! same unit sphere and are scored by a temperature-scaled dot product. Serving
//! runs a cluster-diversified KNN over the item embeddings and caches the
//! per-user results in a file-backed store.

pub mod binio;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod retrieval;
pub mod text;
pub mod towers;
pub mod training;

pub use error::{Error, Result};
