//! Sampled-softmax training of both towers.

pub mod loss;
pub mod sampling;
pub mod train;

pub use loss::{batch_loss_and_grads, nll_loss, softmax_nll, SoftmaxNll};
pub use sampling::{
    apply_history_skip, prepare_examples, sample_in_batch_negatives, sample_observed_negatives,
    PrepareStats, TrainExample, OBSERVED_NEGATIVES,
};
pub use train::{
    metrics_jsonl, train, MetricsRecord, NegativeMode, TrainConfig, TrainCounters, TrainOutcome,
    TrainingData,
};
