use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{Gru, Mlp};
use super::optim::AdamState;
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Width of the learned event-type vector appended to every event embedding.
pub const EVENT_TYPE_DIM: usize = 4;
/// Number of event types (item view, search query).
pub const EVENT_TYPES: usize = 2;

/// Model and optimizer hyperparameters. `Default` holds the production settings;
/// tests and the desk-scale corpus override most of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub dim: usize,
    pub text_dim: usize,
    pub category_dim: usize,
    pub hidden_layers: usize,
    pub hidden_dim: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            dim: 64,
            text_dim: 64,
            category_dim: 64,
            hidden_layers: 3,
            hidden_dim: 64,
            tau: 0.1,
            learning_rate: 0.01,
            grad_clip: 0.001,
            negatives_per_positive: 3000,
            batch_size: 600,
            epochs: 10,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// Small settings that train in well under a minute on the synthetic desk
    /// corpus. Many negatives matter more than a big batch here: they are what
    /// puts same-category items into the softmax.
    pub fn desk() -> Self {
        HyperParams {
            dim: 64,
            text_dim: 16,
            category_dim: 32,
            hidden_layers: 1,
            hidden_dim: 64,
            learning_rate: 0.003,
            negatives_per_positive: 500,
            batch_size: 64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("dim", self.dim),
            ("text_dim", self.text_dim),
            ("category_dim", self.category_dim),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("negatives_per_positive", self.negatives_per_positive),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.grad_clip > 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::config(
                "grad_clip",
                format!("must be > 0, got {}", self.grad_clip),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("must be >= 0, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dim", self.dim.to_string()),
            ("text_dim", self.text_dim.to_string()),
            ("category_dim", self.category_dim.to_string()),
            ("hidden_layers", self.hidden_layers.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("tau", self.tau.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("negatives_per_positive", self.negatives_per_positive.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one field from its textual form. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dim" => self.dim = parse(key, value)?,
            "text_dim" => self.text_dim = parse(key, value)?,
            "category_dim" => self.category_dim = parse(key, value)?,
            "hidden_layers" => self.hidden_layers = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "negatives_per_positive" => self.negatives_per_positive = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn add_item_diagonal<T: Real>(w: &mut Tensor<T>, n: usize) {
    let cols = w.cols();
    let d = w.data_mut();
    for i in 0..n {
        d[i * cols + i] += T::one();
    }
}

pub(crate) fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: V::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

/// Table sizes fixed by the vocabularies a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub title_vocab: usize,
    pub aspect_vocab: usize,
    /// Category rows, including the trailing UNKNOWN row.
    pub categories: usize,
}

impl ModelShape {
    pub fn unknown_category(&self) -> u32 {
        (self.categories - 1) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UserTower {
    /// Continuous bag of events: mean of event vectors, then an MLP.
    Cboe,
    /// GRU over events, mean of hidden states.
    #[default]
    Recurrent,
}

impl fmt::Display for UserTower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UserTower::Cboe => "cboe",
            UserTower::Recurrent => "recurrent",
        })
    }
}

impl FromStr for UserTower {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cboe" => Ok(UserTower::Cboe),
            "recurrent" | "gru" => Ok(UserTower::Recurrent),
            other => Err(Error::config(
                "user_tower",
                format!("expected cboe|recurrent, got `{other}`"),
            )),
        }
    }
}

/// All learnable tensors of both towers.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T = f32> {
    pub title_table: Tensor<T>,
    pub aspect_table: Tensor<T>,
    pub category_table: Tensor<T>,
    pub event_type_table: Tensor<T>,
    pub item_mlp: Mlp<T>,
    pub user_mlp: Mlp<T>,
    pub gru: Gru<T>,
}

impl<T: Real> Weights<T> {
    /// Embedding tables from N(0, 1); MLP and GRU weights scaled by fan-in.
    pub fn init(hp: &HyperParams, shape: &ModelShape) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let title_table = Tensor::randn(&[shape.title_vocab, hp.text_dim], 1.0, &mut rng);
        let aspect_table = Tensor::randn(&[shape.aspect_vocab, hp.text_dim], 1.0, &mut rng);
        let category_table = Tensor::randn(&[shape.categories, hp.category_dim], 1.0, &mut rng);
        let event_type_table = Tensor::randn(&[EVENT_TYPES, EVENT_TYPE_DIM], 1.0, &mut rng);
        let item_in = 2 * hp.text_dim + hp.category_dim;
        let event_dim = hp.dim + EVENT_TYPE_DIM;
        let item_mlp = Mlp::new(item_in, hp.hidden_dim, hp.hidden_layers, hp.dim, &mut rng);
        let mut user_mlp: Mlp<T> = Mlp::new(event_dim, hp.hidden_dim, hp.hidden_layers, hp.dim, &mut rng);
        let mut gru = Gru::new(event_dim, hp.dim, &mut rng);
        // Start the user side close to "average the item vectors": a unit
        // diagonal over the item slice of the event vector.
        add_item_diagonal(&mut gru.w_c, hp.dim);
        if let Some(last) = user_mlp.layers.last_mut() {
            if last.weight.cols() == event_dim {
                add_item_diagonal(&mut last.weight, hp.dim);
            }
        }
        Weights {
            title_table,
            aspect_table,
            category_table,
            event_type_table,
            item_mlp,
            user_mlp,
            gru,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<T>| Tensor::zeros(t.shape());
        Weights {
            title_table: z(&self.title_table),
            aspect_table: z(&self.aspect_table),
            category_table: z(&self.category_table),
            event_type_table: z(&self.event_type_table),
            item_mlp: self.item_mlp.zeros_like(),
            user_mlp: self.user_mlp.zeros_like(),
            gru: Gru::zeros(self.gru.input_dim(), self.gru.hidden_dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.gru.hidden_dim()
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("title_table".to_string(), &self.title_table),
            ("aspect_table".to_string(), &self.aspect_table),
            ("category_table".to_string(), &self.category_table),
            ("event_type_table".to_string(), &self.event_type_table),
        ];
        for (prefix, mlp) in [("item_mlp", &self.item_mlp), ("user_mlp", &self.user_mlp)] {
            for (i, l) in mlp.layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), &l.weight));
                out.push((format!("{prefix}.{i}.bias"), &l.bias));
            }
        }
        let g = &self.gru;
        for (n, t) in [
            ("w_r", &g.w_r),
            ("u_r", &g.u_r),
            ("w_u", &g.w_u),
            ("u_u", &g.u_u),
            ("w_c", &g.w_c),
            ("u_c", &g.u_c),
        ] {
            out.push((format!("gru.{n}"), t));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let Weights {
            title_table,
            aspect_table,
            category_table,
            event_type_table,
            item_mlp,
            user_mlp,
            gru,
        } = self;
        let mut out = vec![
            ("title_table".to_string(), title_table),
            ("aspect_table".to_string(), aspect_table),
            ("category_table".to_string(), category_table),
            ("event_type_table".to_string(), event_type_table),
        ];
        for (prefix, mlp) in [("item_mlp", item_mlp), ("user_mlp", user_mlp)] {
            for (i, l) in mlp.layers.iter_mut().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
                out.push((format!("{prefix}.{i}.bias"), &mut l.bias));
            }
        }
        let Gru {
            w_r,
            u_r,
            w_u,
            u_u,
            w_c,
            u_c,
        } = gru;
        for (n, t) in [
            ("w_r", w_r),
            ("u_r", u_r),
            ("w_u", w_u),
            ("u_u", u_u),
            ("w_c", w_c),
            ("u_c", u_c),
        ] {
            out.push((format!("gru.{n}"), t));
        }
        out
    }

    pub fn add_assign(&mut self, other: &Weights<T>) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for (_, t) in self.named_mut() {
            t.scale(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.named()
            .iter()
            .map(|(_, t)| t.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        let mut out = Weights::<U> {
            title_table: self.title_table.cast(),
            aspect_table: self.aspect_table.cast(),
            category_table: self.category_table.cast(),
            event_type_table: self.event_type_table.cast(),
            item_mlp: Mlp {
                layers: Vec::new(),
            },
            user_mlp: Mlp {
                layers: Vec::new(),
            },
            gru: Gru {
                w_r: self.gru.w_r.cast(),
                u_r: self.gru.u_r.cast(),
                w_u: self.gru.w_u.cast(),
                u_u: self.gru.u_u.cast(),
                w_c: self.gru.w_c.cast(),
                u_c: self.gru.u_c.cast(),
            },
        };
        for (src, dst) in [
            (&self.item_mlp, &mut out.item_mlp),
            (&self.user_mlp, &mut out.user_mlp),
        ] {
            dst.layers = src
                .layers
                .iter()
                .map(|l| super::ops::Linear {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect();
        }
        out
    }
}

/// Named flat parameter blocks, used by the finite-difference checker.
pub trait ParamBlocks<T> {
    fn blocks(&self) -> Vec<(String, &[T])>;
    fn blocks_mut(&mut self) -> Vec<(String, &mut [T])>;
}

impl<T: Real> ParamBlocks<T> for Weights<T> {
    fn blocks(&self) -> Vec<(String, &[T])> {
        self.named().into_iter().map(|(n, t)| (n, t.data())).collect()
    }
    fn blocks_mut(&mut self) -> Vec<(String, &mut [T])> {
        self.named_mut()
            .into_iter()
            .map(|(n, t)| (n, t.data_mut()))
            .collect()
    }
}

impl<T: Real> ParamBlocks<T> for Vec<T> {
    fn blocks(&self) -> Vec<(String, &[T])> {
        if self.is_empty() {
            Vec::new()
        } else {
            vec![("w".to_string(), self.as_slice())]
        }
    }
    fn blocks_mut(&mut self) -> Vec<(String, &mut [T])> {
        if self.is_empty() {
            Vec::new()
        } else {
            vec![("w".to_string(), self.as_mut_slice())]
        }
    }
}

/// A model: hyperparameters, table shapes, weights of both towers, optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub hyper: HyperParams,
    pub shape: ModelShape,
    pub user_tower: UserTower,
    pub weights: Weights<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn init(hyper: HyperParams, shape: ModelShape, user_tower: UserTower) -> Result<Self> {
        hyper.validate()?;
        if shape.title_vocab < 2 || shape.aspect_vocab < 2 || shape.categories < 1 {
            return Err(Error::config(
                "vocabulary",
                format!("table sizes too small: {shape:?}"),
            ));
        }
        let weights = Weights::init(&hyper, &shape);
        let adam = AdamState::new(&weights);
        Ok(ModelParams {
            hyper,
            shape,
            user_tower,
            weights,
            adam,
        })
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            hyper: self.hyper.clone(),
            shape: self.shape,
            user_tower: self.user_tower,
            weights: self.weights.cast(),
            adam: AdamState::new(&self.weights.cast()),
        }
    }
}
