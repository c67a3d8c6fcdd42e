//! Item and user towers, generic over the float type so gradients can be
//! checked in double precision.

use std::collections::HashMap;

use super::features::{Featurizer, ItemFeatures};
use crate::corpus::{EventType, UserEvent, UserHistory};
use crate::error::{Error, Result};
use crate::nn::ops::{cbow_mean, cbow_mean_backward, l2_normalize, l2_normalize_backward, GruStepTape, MlpTape};
use crate::nn::{ModelParams, Real, UserTower, Weights, EVENT_TYPE_DIM};

/// Longest history fed to a user tower; older events are dropped.
pub const MAX_HISTORY_EVENTS: usize = 200;

/// A unit-norm vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub const NORM_TOLERANCE: f64 = 1e-5;

    /// Wraps `values` after checking the unit-norm contract.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        let n = values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                block: "embedding".into(),
            });
        }
        if (n - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::DegenerateVector { norm: n });
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// `E(z) = concat(v_z, e_type)` for one history event.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedEvent {
    pub vector: Vec<f32>,
    pub timestamp: i64,
}

// ---------------------------------------------------------------- item tower

pub struct ItemTape<T> {
    mlp: MlpTape<T>,
    v: Vec<T>,
    norm: T,
}

pub fn item_forward<T: Real>(w: &Weights<T>, f: &ItemFeatures) -> Result<(Vec<T>, ItemTape<T>)> {
    let cats = w.category_table.rows();
    if f.category_id as usize >= cats {
        return Err(Error::Index {
            what: "category table",
            index: f.category_id as usize,
            len: cats,
        });
    }
    let mut z = cbow_mean(&w.title_table, &f.title_ids)?;
    z.extend(cbow_mean(&w.aspect_table, &f.aspect_ids)?);
    z.extend_from_slice(w.category_table.row(f.category_id as usize));
    let (y, mlp) = w.item_mlp.forward(&z)?;
    let (v, norm) = l2_normalize(&y)?;
    Ok((v.clone(), ItemTape { mlp, v, norm }))
}

pub fn item_backward<T: Real>(
    w: &Weights<T>,
    f: &ItemFeatures,
    tape: &ItemTape<T>,
    dv: &[T],
    grads: &mut Weights<T>,
) {
    let dy = l2_normalize_backward(&tape.v, tape.norm, dv);
    let dz = w.item_mlp.backward(&tape.mlp, &dy, &mut grads.item_mlp);
    let t = w.title_table.cols();
    cbow_mean_backward(&mut grads.title_table, &f.title_ids, &dz[..t]);
    cbow_mean_backward(&mut grads.aspect_table, &f.aspect_ids, &dz[t..2 * t]);
    let row = grads.category_table.row_mut(f.category_id as usize);
    for (g, d) in row.iter_mut().zip(&dz[2 * t..]) {
        *g += *d;
    }
}

// ---------------------------------------------------------------- user tower

pub enum UserTape<T> {
    Cboe {
        n: usize,
        mlp: MlpTape<T>,
        u: Vec<T>,
        norm: T,
    },
    Recurrent {
        steps: Vec<GruStepTape<T>>,
        u: Vec<T>,
        norm: T,
    },
}

/// Event vector `concat(v, event_type_table[kind])`.
pub fn event_vector<T: Real>(w: &Weights<T>, v: &[T], kind: EventType) -> Vec<T> {
    let mut x = v.to_vec();
    x.extend_from_slice(w.event_type_table.row(kind.index()));
    x
}

pub fn user_forward<T: Real>(
    w: &Weights<T>,
    tower: UserTower,
    xs: &[Vec<T>],
) -> Result<(Vec<T>, UserTape<T>)> {
    if xs.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let n = xs.len();
    let inv = T::one() / T::of(n as f64);
    match tower {
        UserTower::Cboe => {
            let mut mean = vec![T::zero(); xs[0].len()];
            for x in xs {
                if x.len() != mean.len() {
                    return Err(Error::Shape {
                        what: "event vector",
                        expected: vec![mean.len()],
                        got: vec![x.len()],
                    });
                }
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += *v;
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv);
            let (y, mlp) = w.user_mlp.forward(&mean)?;
            let (u, norm) = l2_normalize(&y)?;
            Ok((u.clone(), UserTape::Cboe { n, mlp, u, norm }))
        }
        UserTower::Recurrent => {
            let hd = w.gru.hidden_dim();
            let mut h = vec![T::zero(); hd];
            let mut mean = vec![T::zero(); hd];
            let mut steps = Vec::with_capacity(n);
            for x in xs {
                let (next, tape) = w.gru.step(x, &h)?;
                for (m, v) in mean.iter_mut().zip(&next) {
                    *m += *v;
                }
                steps.push(tape);
                h = next;
            }
            mean.iter_mut().for_each(|m| *m *= inv);
            let (u, norm) = l2_normalize(&mean)?;
            Ok((u.clone(), UserTape::Recurrent { steps, u, norm }))
        }
    }
}

/// Returns the gradient with respect to every event vector.
pub fn user_backward<T: Real>(
    w: &Weights<T>,
    tape: &UserTape<T>,
    du: &[T],
    grads: &mut Weights<T>,
) -> Vec<Vec<T>> {
    match tape {
        UserTape::Cboe { n, mlp, u, norm } => {
            let dy = l2_normalize_backward(u, *norm, du);
            let mut dmean = w.user_mlp.backward(mlp, &dy, &mut grads.user_mlp);
            let inv = T::one() / T::of(*n as f64);
            dmean.iter_mut().for_each(|d| *d *= inv);
            vec![dmean; *n]
        }
        UserTape::Recurrent { steps, u, norm } => {
            let n = steps.len();
            let mut dmean = l2_normalize_backward(u, *norm, du);
            let inv = T::one() / T::of(n as f64);
            dmean.iter_mut().for_each(|d| *d *= inv);
            let mut dxs = vec![Vec::new(); n];
            let mut carry = vec![T::zero(); dmean.len()];
            for t in (0..n).rev() {
                let dh: Vec<T> = carry.iter().zip(&dmean).map(|(c, m)| *c + *m).collect();
                let (dx, dh_prev) = w.gru.backward_step(&steps[t], &dh, &mut grads.gru);
                dxs[t] = dx;
                carry = dh_prev;
            }
            dxs
        }
    }
}

/// Routes an event-vector gradient into the event-type table and returns the
/// part belonging to the item embedding.
pub fn event_vector_backward<T: Real>(dx: &[T], kind: EventType, grads: &mut Weights<T>) -> Vec<T> {
    let d = dx.len() - EVENT_TYPE_DIM;
    let row = grads.event_type_table.row_mut(kind.index());
    for (g, v) in row.iter_mut().zip(&dx[d..]) {
        *g += *v;
    }
    dx[..d].to_vec()
}

// ------------------------------------------------------------- f32 inference

pub fn encode_item(params: &ModelParams, feats: &ItemFeatures) -> Result<Embedding> {
    let (v, _) = item_forward(&params.weights, feats)?;
    Ok(Embedding(v))
}

pub fn encode_event(
    params: &ModelParams,
    featurizer: &Featurizer,
    event: &UserEvent,
    items_by_id: &HashMap<String, ItemFeatures>,
) -> Result<EncodedEvent> {
    let f = featurizer.event(event, items_by_id)?;
    let v = encode_item(params, &f)?;
    Ok(EncodedEvent {
        vector: event_vector(&params.weights, v.values(), event.event_type),
        timestamp: event.timestamp,
    })
}

fn vectors(events: &[EncodedEvent]) -> Vec<Vec<f32>> {
    events.iter().map(|e| e.vector.clone()).collect()
}

pub fn encode_user_cboe(params: &ModelParams, events: &[EncodedEvent]) -> Result<Embedding> {
    let (u, _) = user_forward(&params.weights, UserTower::Cboe, &vectors(events))?;
    Ok(Embedding(u))
}

pub fn encode_user_recurrent(params: &ModelParams, events: &[EncodedEvent]) -> Result<Embedding> {
    let (u, _) = user_forward(&params.weights, UserTower::Recurrent, &vectors(events))?;
    Ok(Embedding(u))
}

/// Encodes the newest [`MAX_HISTORY_EVENTS`] events of a history, skipping
/// views of unknown items. Returns the encoded events and the skip count.
pub fn encode_history(
    params: &ModelParams,
    featurizer: &Featurizer,
    history: &UserHistory,
    items_by_id: &HashMap<String, ItemFeatures>,
) -> Result<(Vec<EncodedEvent>, usize)> {
    let start = history.events.len().saturating_sub(MAX_HISTORY_EVENTS);
    let mut out = Vec::new();
    let mut skipped = 0;
    for e in &history.events[start..] {
        match encode_event(params, featurizer, e, items_by_id) {
            Ok(x) => out.push(x),
            Err(Error::MissingItem(_)) => skipped += 1,
            Err(err) => return Err(err),
        }
    }
    Ok((out, skipped))
}

/// User embedding with the model's own user tower.
pub fn encode_user(
    params: &ModelParams,
    featurizer: &Featurizer,
    history: &UserHistory,
    items_by_id: &HashMap<String, ItemFeatures>,
) -> Result<Embedding> {
    let (events, _) = encode_history(params, featurizer, history, items_by_id)?;
    let (u, _) = user_forward(&params.weights, params.user_tower, &vectors(&events))?;
    Ok(Embedding(u))
}
