//! Softmax negative log-likelihood over a positive and sampled negatives, and
//! its gradient through both towers.

use std::collections::HashMap;

use rayon::prelude::*;

use super::sampling::TrainExample;
use crate::corpus::EventType;
use crate::error::{Error, Result};
use crate::nn::real::dot;
use crate::nn::{Real, UserTower, Weights};
use crate::towers::encode::{
    event_vector, event_vector_backward, item_backward, item_forward, user_backward, user_forward,
    ItemTape,
};
use crate::towers::ItemFeatures;

/// Loss and adjoints of `−log softmax(γ)[0]` with `γ_j = v_j·u/τ`, where
/// index 0 is the positive.
pub struct SoftmaxNll<T> {
    pub loss: T,
    pub du: Vec<T>,
    /// Gradient per candidate vector (positive first).
    pub dv: Vec<Vec<T>>,
}

pub fn softmax_nll<T: Real>(u: &[T], candidates: &[&[T]], tau: f64) -> Result<SoftmaxNll<T>> {
    if candidates.len() < 2 {
        return Err(Error::Parameter {
            name: "negatives",
            reason: "need at least one negative".into(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::Parameter {
            name: "tau",
            reason: format!("must be > 0, got {tau}"),
        });
    }
    let inv_tau = T::of(1.0 / tau);
    let scores: Vec<T> = candidates.iter().map(|v| dot(v, u) * inv_tau).collect();
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = scores.iter().map(|s| (*s - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = lse - scores[0];
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            block: "loss".into(),
        });
    }
    let mut du = vec![T::zero(); u.len()];
    let mut dv = Vec::with_capacity(candidates.len());
    for (j, (v, s)) in candidates.iter().zip(&scores).enumerate() {
        let mut g = (*s - lse).exp();
        if j == 0 {
            g -= T::one();
        }
        let g = g * inv_tau;
        for (d, x) in du.iter_mut().zip(v.iter()) {
            *d += g * *x;
        }
        dv.push(u.iter().map(|x| g * *x).collect());
    }
    Ok(SoftmaxNll { loss, du, dv })
}

/// Distinct item features of a batch, in first-appearance order.
struct Slots<'a> {
    feats: Vec<&'a ItemFeatures>,
    index: HashMap<&'a ItemFeatures, usize>,
}

impl<'a> Slots<'a> {
    fn new() -> Self {
        Slots {
            feats: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn add(&mut self, f: &'a ItemFeatures) -> usize {
        *self.index.entry(f).or_insert_with(|| {
            self.feats.push(f);
            self.feats.len() - 1
        })
    }
}

struct SlotExample {
    history: Vec<(usize, EventType)>,
    /// Positive first.
    candidates: Vec<usize>,
}

/// Parallel work is split into this many fixed chunks and reduced in order,
/// so results do not depend on the thread count.
const CHUNKS: usize = 16;

/// Summed loss over the batch and the gradient of that sum.
pub fn batch_loss_and_grads<T: Real>(
    w: &Weights<T>,
    tower: UserTower,
    tau: f64,
    batch: &[TrainExample],
    negatives: &[Vec<ItemFeatures>],
) -> Result<(f64, Weights<T>)> {
    if batch.len() != negatives.len() {
        return Err(Error::Shape {
            what: "negatives per example",
            expected: vec![batch.len()],
            got: vec![negatives.len()],
        });
    }
    let mut slots = Slots::new();
    let mut plan = Vec::with_capacity(batch.len());
    for (ex, negs) in batch.iter().zip(negatives) {
        let history = ex.history.iter().map(|(f, k)| (slots.add(f), *k)).collect();
        let mut candidates = vec![slots.add(&ex.positive)];
        candidates.extend(negs.iter().map(|f| slots.add(f)));
        plan.push(SlotExample {
            history,
            candidates,
        });
    }

    let forward: Vec<(Vec<T>, ItemTape<T>)> = slots
        .feats
        .par_iter()
        .map(|f| item_forward(w, f))
        .collect::<Result<_>>()?;
    let n_slots = forward.len();
    let dim = w.dim();

    let chunk = plan.len().div_ceil(CHUNKS).max(1);
    let partials: Vec<(f64, Weights<T>, Vec<Vec<T>>)> = plan
        .par_chunks(chunk)
        .map(|part| -> Result<_> {
            let mut grads = w.zeros_like();
            let mut dslot = vec![Vec::new(); n_slots];
            let mut loss = 0.0;
            for ex in part {
                let xs: Vec<Vec<T>> = ex
                    .history
                    .iter()
                    .map(|&(s, k)| event_vector(w, &forward[s].0, k))
                    .collect();
                let (u, tape) = user_forward(w, tower, &xs)?;
                let cands: Vec<&[T]> = ex.candidates.iter().map(|&s| forward[s].0.as_slice()).collect();
                let out = softmax_nll(&u, &cands, tau)?;
                loss += out.loss.f64();
                for (&s, g) in ex.candidates.iter().zip(&out.dv) {
                    accumulate(&mut dslot[s], g, dim);
                }
                let dxs = user_backward(w, &tape, &out.du, &mut grads);
                for (&(s, k), dx) in ex.history.iter().zip(&dxs) {
                    let dv = event_vector_backward(dx, k, &mut grads);
                    accumulate(&mut dslot[s], &dv, dim);
                }
            }
            Ok((loss, grads, dslot))
        })
        .collect::<Result<_>>()?;

    let mut loss = 0.0;
    let mut grads = w.zeros_like();
    let mut dslot: Vec<Vec<T>> = vec![Vec::new(); n_slots];
    for (l, g, d) in partials {
        loss += l;
        grads.add_assign(&g);
        for (acc, part) in dslot.iter_mut().zip(&d) {
            if !part.is_empty() {
                accumulate(acc, part, dim);
            }
        }
    }

    let idx: Vec<usize> = (0..n_slots).filter(|&s| !dslot[s].is_empty()).collect();
    let chunk = idx.len().div_ceil(CHUNKS).max(1);
    let item_grads: Vec<Weights<T>> = idx
        .par_chunks(chunk)
        .map(|part| {
            let mut g = w.zeros_like();
            for &s in part {
                item_backward(w, slots.feats[s], &forward[s].1, &dslot[s], &mut g);
            }
            g
        })
        .collect();
    for g in &item_grads {
        grads.add_assign(g);
    }
    Ok((loss, grads))
}

fn accumulate<T: Real>(acc: &mut Vec<T>, g: &[T], dim: usize) {
    if acc.is_empty() {
        acc.resize(dim, T::zero());
    }
    for (a, x) in acc.iter_mut().zip(g) {
        *a += *x;
    }
}

/// Loss of one example and its gradient with respect to every weight.
pub fn nll_loss<T: Real>(
    w: &Weights<T>,
    tower: UserTower,
    tau: f64,
    example: &TrainExample,
    negatives: &[ItemFeatures],
) -> Result<(T, Weights<T>)> {
    let (loss, grads) = batch_loss_and_grads(
        w,
        tower,
        tau,
        std::slice::from_ref(example),
        std::slice::from_ref(&negatives.to_vec()),
    )?;
    Ok((T::of(loss), grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_affinities_give_log_n_plus_one() {
        let u = [1.0f64, 0.0];
        let v = [0.0f64, 1.0];
        let out = softmax_nll(&u, &[&v, &v, &v, &v], 0.1).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_positive_has_tiny_loss() {
        let u = [1.0f64];
        let out = softmax_nll(&u, &[&[1.0], &[-1.0]], 0.1).unwrap();
        assert!(out.loss < 1e-8, "{}", out.loss);
        assert!(out.loss > 0.0);
    }

    #[test]
    fn gradient_of_scores_sums_to_zero() {
        let u = [0.3f64, -0.2, 0.9];
        let c: [[f64; 3]; 3] = [[0.1, 0.2, 0.3], [-0.5, 0.1, 0.0], [0.7, 0.7, 0.1]];
        let refs: Vec<&[f64]> = c.iter().map(|x| x.as_slice()).collect();
        let out = softmax_nll(&u, &refs, 0.5).unwrap();
        // dL/dv_j = g_j u, and Σ g_j = 0
        let total: f64 = out.dv.iter().map(|d| d[0] / u[0]).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn needs_a_negative() {
        assert!(softmax_nll(&[1.0f64], &[&[1.0]], 0.1).is_err());
    }
}
