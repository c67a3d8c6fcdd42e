//! Content-based item tower and event-history user towers.

pub mod encode;
pub mod features;
pub mod table;

pub use encode::{
    encode_event, encode_history, encode_item, encode_user, encode_user_cboe,
    encode_user_recurrent, EncodedEvent, Embedding, MAX_HISTORY_EVENTS,
};
pub use features::{Featurizer, ItemFeatures, VocabConfig};
pub use table::{EmbeddingTable, EMBEDDINGS_MAGIC};
