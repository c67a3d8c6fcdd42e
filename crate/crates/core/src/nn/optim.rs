use super::params::Weights;
use super::real::Real;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Weights<T>,
    pub v: Weights<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(like: &Weights<T>) -> Self {
        AdamState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }
}

/// Fails on the first gradient block holding a NaN or infinity.
pub fn check_finite<T: Real>(grads: &Weights<T>) -> Result<()> {
    for (name, t) in grads.named() {
        if !t.all_finite() {
            return Err(Error::NonFinite { block: name });
        }
    }
    Ok(())
}

/// Global-norm clipping: if ‖g‖₂ over all blocks exceeds `clip_norm`, every
/// gradient is scaled by `clip_norm / ‖g‖₂`. Returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut Weights<T>, clip_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(T::of(clip_norm / norm));
    }
    norm
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(
    weights: &mut Weights<T>,
    grads: &Weights<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    check_finite(grads)?;
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(ADAM_BETA1);
    let b2 = T::of(ADAM_BETA2);
    let one = T::one();
    let bc1 = T::of(1.0 - ADAM_BETA1.powi(t));
    let bc2 = T::of(1.0 - ADAM_BETA2.powi(t));
    let lr = T::of(lr);
    let eps = T::of(ADAM_EPS);
    let ws = weights.named_mut();
    let gs = grads.named();
    let ms = state.m.named_mut();
    let vs = state.v.named_mut();
    for (((w, g), m), v) in ws.into_iter().zip(gs).zip(ms).zip(vs) {
        let (w, g, m, v) = (w.1.data_mut(), g.1.data(), m.1.data_mut(), v.1.data_mut());
        for i in 0..w.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
