use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::batch_loss_and_grads;
use super::sampling::{
    prepare_examples, sample_in_batch_negatives, sample_observed_negatives, PrepareStats,
    TrainExample, OBSERVED_NEGATIVES,
};
use crate::corpus::{Example, ItemRecord};
use crate::error::{Error, Result};
use crate::eval::{evaluate, CandidatePool, ModelScorer};
use crate::nn::optim::{adam_step, check_finite, clip_gradients};
use crate::nn::{save_checkpoint, HyperParams, ModelParams, Real, UserTower};
use crate::towers::{Featurizer, ItemFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NegativeMode {
    #[default]
    InBatch,
    ObservedUnclicked,
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeMode::InBatch => "in_batch",
            NegativeMode::ObservedUnclicked => "observed",
        })
    }
}

impl FromStr for NegativeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_batch" | "inbatch" => Ok(NegativeMode::InBatch),
            "observed" | "observed_unclicked" => Ok(NegativeMode::ObservedUnclicked),
            _ => Err(Error::config(
                "negative_mode",
                format!("expected in_batch or observed, got `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub user_tower: UserTower,
    pub negative_mode: NegativeMode,
    /// Most recent activity hidden from every training example.
    pub skip_window_seconds: i64,
    /// Save a checkpoint every this many epochs (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Sampled items added to each validation positive.
    pub validation_pool: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: HyperParams::default(),
            user_tower: UserTower::Recurrent,
            negative_mode: NegativeMode::InBatch,
            skip_window_seconds: 600,
            checkpoint_every: 0,
            checkpoint_dir: None,
            validation_pool: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.skip_window_seconds < 0 {
            return Err(Error::config("skip_window_seconds", "must be >= 0"));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub val_recall_at_20: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCounters {
    pub examples: usize,
    pub missing_events: usize,
    pub empty_histories: usize,
    pub skipped_batches: usize,
    pub examples_without_negatives: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation Recall@20.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<MetricsRecord>,
    pub counters: TrainCounters,
}

/// Everything training reads from the corpus.
pub struct TrainingData<'a> {
    pub featurizer: &'a Featurizer,
    pub items: &'a [ItemRecord],
    pub train: &'a [Example],
    pub validation: &'a [Example],
}

pub fn metrics_jsonl(log: &[MetricsRecord]) -> String {
    crate::corpus::io::to_jsonl(log)
}

fn validation_items<'a>(data: &TrainingData<'a>, size: usize, seed: u64) -> Vec<ItemRecord> {
    let mut keep: HashSet<&str> = data
        .validation
        .iter()
        .flat_map(|(_, imp)| imp.positive_item_ids.iter().map(String::as_str))
        .collect();
    let mut ids: Vec<&str> = data.items.iter().map(|i| i.item_id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a11);
    keep.extend(ids.choose_multiple(&mut rng, size.min(ids.len())).copied());
    data.items
        .iter()
        .filter(|i| keep.contains(i.item_id.as_str()))
        .cloned()
        .collect()
}

fn validation_recall(
    params: &ModelParams,
    data: &TrainingData,
    items: &HashMap<String, ItemFeatures>,
    pool_items: &[ItemRecord],
) -> Result<f64> {
    if data.validation.is_empty() {
        return Ok(f64::NAN);
    }
    let pool = CandidatePool::embed(params, data.featurizer, pool_items)?;
    let scorer = ModelScorer {
        params,
        featurizer: data.featurizer,
        items,
    };
    Ok(evaluate(&scorer, data.validation, &pool)?.recall(20))
}

/// Minibatch training with Adam on the summed-then-averaged softmax NLL.
pub fn train(data: &TrainingData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let hp = &cfg.hyper;
    let items = data.featurizer.items(data.items);
    let (examples, stats) =
        prepare_examples(data.train, data.featurizer, &items, cfg.skip_window_seconds)?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset("no usable training examples".into()));
    }
    let PrepareStats {
        missing_events,
        empty_histories,
        ..
    } = stats;
    let mut counters = TrainCounters {
        examples: examples.len(),
        missing_events,
        empty_histories,
        ..TrainCounters::default()
    };
    let mut params = ModelParams::<f32>::init(hp.clone(), data.featurizer.shape(), cfg.user_tower)?;
    let pool_items = validation_items(data, cfg.validation_pool, hp.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=hp.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<TrainExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (batch, negatives) = match cfg.negative_mode {
                NegativeMode::InBatch => {
                    if batch.len() < 2 {
                        counters.skipped_batches += 1;
                        continue;
                    }
                    match sample_in_batch_negatives(&batch, hp.negatives_per_positive, &mut rng) {
                        Ok(n) => (batch, n),
                        Err(Error::Sampling(_)) => {
                            counters.skipped_batches += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
                NegativeMode::ObservedUnclicked => {
                    let per = hp.negatives_per_positive.min(OBSERVED_NEGATIVES);
                    let mut kept = Vec::new();
                    let mut negs = Vec::new();
                    for ex in batch {
                        let n = sample_observed_negatives(&ex, per);
                        if n.is_empty() {
                            counters.examples_without_negatives += 1;
                        } else {
                            kept.push(ex);
                            negs.push(n);
                        }
                    }
                    if kept.is_empty() {
                        counters.skipped_batches += 1;
                        continue;
                    }
                    (kept, negs)
                }
            };
            let step = params.adam.step as usize + 1;
            let diverged = |params: &ModelParams| -> Error {
                let checkpoint = cfg.checkpoint_dir.as_ref().and_then(|d| {
                    let p = d.join("last_finite.ettw");
                    save_checkpoint(params, &p).ok().map(|_| p)
                });
                Error::Divergence {
                    epoch,
                    step,
                    checkpoint,
                }
            };
            let (loss, mut grads) = match batch_loss_and_grads(
                &params.weights,
                params.user_tower,
                hp.tau,
                &batch,
                &negatives,
            ) {
                Ok(r) => r,
                Err(Error::NonFinite { .. }) => return Err(diverged(&params)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || check_finite(&grads).is_err() {
                return Err(diverged(&params));
            }
            grads.scale(f32::of(1.0 / batch.len() as f64));
            clip_gradients(&mut grads, hp.grad_clip);
            adam_step(&mut params.weights, &grads, &mut params.adam, hp.learning_rate)?;
            loss_sum += loss;
            loss_n += batch.len();
        }
        let val = validation_recall(&params, data, &items, &pool_items)?;
        log.push(MetricsRecord {
            epoch,
            step: params.adam.step,
            train_loss: if loss_n == 0 { f64::NAN } else { loss_sum / loss_n as f64 },
            val_recall_at_20: val,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(&params, &dir.join(format!("epoch-{epoch}.ettw")))?;
            }
        }
        let better = match &best {
            None => true,
            Some((b, _, _)) => val > *b || (b.is_nan() && !val.is_nan()) || val.is_nan(),
        };
        if better {
            best = Some((val, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.unwrap_or((f64::NAN, 0, params));
    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        log,
        counters,
    })
}
