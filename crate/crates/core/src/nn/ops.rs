//! Forward operators and their reverse-mode adjoints.
//!
//! Each differentiable op returns a small tape holding exactly what its backward
//! pass needs. Backward functions accumulate parameter gradients in place and
//! return the gradient with respect to the op input.

use rand::Rng;

use super::real::{axpy, dot, sigmoid, Real};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Norms at or below this are treated as zero vectors.
pub const NORM_EPS: f64 = 1e-12;

/// Mean of the looked-up rows; an empty id list falls back to row 0 (PAD).
pub fn cbow_mean<T: Real>(table: &Tensor<T>, ids: &[u32]) -> Result<Vec<T>> {
    let rows = table.rows();
    let dim = table.cols();
    if ids.is_empty() {
        if rows == 0 {
            return Err(Error::Index {
                what: "embedding table",
                index: 0,
                len: 0,
            });
        }
        return Ok(table.row(0).to_vec());
    }
    let mut out = vec![T::zero(); dim];
    for &id in ids {
        let id = id as usize;
        if id >= rows {
            return Err(Error::Index {
                what: "embedding table",
                index: id,
                len: rows,
            });
        }
        for (o, v) in out.iter_mut().zip(table.row(id)) {
            *o += *v;
        }
    }
    let inv = T::one() / T::of(ids.len() as f64);
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

/// Adjoint of [`cbow_mean`]: scatters `grad / n` into every looked-up row.
pub fn cbow_mean_backward<T: Real>(grad_table: &mut Tensor<T>, ids: &[u32], grad: &[T]) {
    if ids.is_empty() {
        axpy(T::one(), grad, grad_table.row_mut(0));
        return;
    }
    let inv = T::one() / T::of(ids.len() as f64);
    for &id in ids {
        axpy(inv, grad, grad_table.row_mut(id as usize));
    }
}

/// `x / ‖x‖`, returned together with the norm.
pub fn l2_normalize<T: Real>(x: &[T]) -> Result<(Vec<T>, T)> {
    let norm_sq: f64 = x.iter().map(|v| v.f64() * v.f64()).sum();
    let norm = norm_sq.sqrt();
    if !(norm > NORM_EPS) {
        return Err(Error::DegenerateVector { norm });
    }
    let n = T::of(norm);
    Ok((x.iter().map(|v| *v / n).collect(), n))
}

/// Gradient through `v = x / ‖x‖`: `(dv − v (v·dv)) / ‖x‖`.
pub fn l2_normalize_backward<T: Real>(v: &[T], norm: T, dv: &[T]) -> Vec<T> {
    let proj = dot(v, dv);
    v.iter()
        .zip(dv)
        .map(|(vi, gi)| (*gi - *vi * proj) / norm)
        .collect()
}

/// Temperature-scaled dot product `v·u / τ`.
pub fn affinity<T: Real>(v: &[T], u: &[T], tau: f64) -> Result<T> {
    if !(tau > 0.0) {
        return Err(Error::Parameter {
            name: "tau",
            reason: format!("must be > 0, got {tau}"),
        });
    }
    if v.len() != u.len() {
        return Err(Error::Shape {
            what: "affinity operands",
            expected: vec![v.len()],
            got: vec![u.len()],
        });
    }
    Ok(dot(v, u) / T::of(tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f32> {
    /// Shape `[out, in]`.
    pub weight: Tensor<T>,
    /// Shape `[out]`.
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.output_dim()];
        self.weight.matvec(x, &mut y);
        for (yi, b) in y.iter_mut().zip(self.bias.data()) {
            *yi += *b;
        }
        y
    }
}

/// Stack of linear layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T = f32> {
    pub layers: Vec<Linear<T>>,
}

/// Inputs seen by each layer during the forward pass (post-ReLU for hidden layers).
#[derive(Debug, Clone)]
pub struct MlpTape<T> {
    inputs: Vec<Vec<T>>,
}

impl<T: Real> Mlp<T> {
    /// `hidden_layers` ReLU layers of width `hidden`, then a linear map to `output`.
    /// Weights are He-normal, biases zero.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        hidden_layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(hidden).take(hidden_layers));
        dims.push(output);
        let layers = dims
            .windows(2)
            .map(|w| Linear {
                weight: Tensor::randn(&[w[1], w[0]], (2.0 / w[0] as f64).sqrt(), rng),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(Linear::input_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::output_dim).unwrap_or(0)
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, MlpTape<T>)> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                what: "mlp input",
                expected: vec![self.input_dim()],
                got: vec![x.len()],
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.apply(&cur);
            if i < last {
                y.iter_mut().for_each(|v| {
                    if *v < T::zero() {
                        *v = T::zero()
                    }
                });
            }
            inputs.push(std::mem::replace(&mut cur, y));
        }
        Ok((cur, MlpTape { inputs }))
    }

    /// Accumulates parameter gradients into `grads`; returns d(loss)/d(input).
    pub fn backward(&self, tape: &MlpTape<T>, dy: &[T], grads: &mut Mlp<T>) -> Vec<T> {
        let mut g = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &tape.inputs[i];
            let gl = &mut grads.layers[i];
            gl.weight.add_outer(&g, x);
            axpy(T::one(), &g, gl.bias.data_mut());
            let mut dx = vec![T::zero(); layer.input_dim()];
            layer.weight.matvec_t_acc(&g, &mut dx);
            if i > 0 {
                for (d, xi) in dx.iter_mut().zip(x) {
                    if *xi <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            g = dx;
        }
        g
    }
}

pub fn mlp_forward<T: Real>(mlp: &Mlp<T>, x: &[T]) -> Result<Vec<T>> {
    mlp.forward(x).map(|(y, _)| y)
}

/// Gated recurrent cell with the reset gate applied inside both the update gate
/// and the candidate:
///
/// ```text
/// r = σ(W_r x + U_r h)
/// u = σ(W_u x + U_u (r ⊙ h))
/// c = tanh(W x + U (r ⊙ h))
/// h' = (1 − u) ⊙ h + u ⊙ c
/// ```
///
/// No bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<T = f32> {
    pub w_r: Tensor<T>,
    pub u_r: Tensor<T>,
    pub w_u: Tensor<T>,
    pub u_u: Tensor<T>,
    pub w_c: Tensor<T>,
    pub u_c: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct GruStepTape<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    r: Vec<T>,
    s: Vec<T>,
    u: Vec<T>,
    c: Vec<T>,
}

impl<T: Real> Gru<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let sx = (1.0 / input as f64).sqrt();
        let sh = (1.0 / hidden as f64).sqrt();
        Gru {
            w_r: Tensor::randn(&[hidden, input], sx, rng),
            u_r: Tensor::randn(&[hidden, hidden], sh, rng),
            w_u: Tensor::randn(&[hidden, input], sx, rng),
            u_u: Tensor::randn(&[hidden, hidden], sh, rng),
            w_c: Tensor::randn(&[hidden, input], sx, rng),
            u_c: Tensor::randn(&[hidden, hidden], sh, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Gru {
            w_r: Tensor::zeros(&[hidden, input]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            w_u: Tensor::zeros(&[hidden, input]),
            u_u: Tensor::zeros(&[hidden, hidden]),
            w_c: Tensor::zeros(&[hidden, input]),
            u_c: Tensor::zeros(&[hidden, hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn step(&self, x: &[T], h_prev: &[T]) -> Result<(Vec<T>, GruStepTape<T>)> {
        let hd = self.hidden_dim();
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                what: "gru input",
                expected: vec![self.input_dim()],
                got: vec![x.len()],
            });
        }
        if h_prev.len() != hd {
            return Err(Error::Shape {
                what: "gru hidden state",
                expected: vec![hd],
                got: vec![h_prev.len()],
            });
        }
        let mut a = vec![T::zero(); hd];
        let mut b = vec![T::zero(); hd];

        self.w_r.matvec(x, &mut a);
        self.u_r.matvec(h_prev, &mut b);
        let r: Vec<T> = a.iter().zip(&b).map(|(p, q)| sigmoid(*p + *q)).collect();
        let s: Vec<T> = r.iter().zip(h_prev).map(|(ri, hi)| *ri * *hi).collect();

        self.w_u.matvec(x, &mut a);
        self.u_u.matvec(&s, &mut b);
        let u: Vec<T> = a.iter().zip(&b).map(|(p, q)| sigmoid(*p + *q)).collect();

        self.w_c.matvec(x, &mut a);
        self.u_c.matvec(&s, &mut b);
        let c: Vec<T> = a.iter().zip(&b).map(|(p, q)| (*p + *q).tanh()).collect();

        let h: Vec<T> = (0..hd)
            .map(|i| (T::one() - u[i]) * h_prev[i] + u[i] * c[i])
            .collect();
        let tape = GruStepTape {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            s,
            u,
            c,
        };
        Ok((h, tape))
    }

    /// Adjoint of one step. Returns `(dx, dh_prev)`.
    pub fn backward_step(
        &self,
        tape: &GruStepTape<T>,
        dh: &[T],
        grads: &mut Gru<T>,
    ) -> (Vec<T>, Vec<T>) {
        let hd = self.hidden_dim();
        let one = T::one();
        let mut dh_prev = vec![T::zero(); hd];
        let mut da_u = vec![T::zero(); hd];
        let mut da_c = vec![T::zero(); hd];
        for i in 0..hd {
            let (u, c, h) = (tape.u[i], tape.c[i], tape.h_prev[i]);
            dh_prev[i] = dh[i] * (one - u);
            da_u[i] = dh[i] * (c - h) * u * (one - u);
            da_c[i] = dh[i] * u * (one - c * c);
        }
        grads.w_u.add_outer(&da_u, &tape.x);
        grads.u_u.add_outer(&da_u, &tape.s);
        grads.w_c.add_outer(&da_c, &tape.x);
        grads.u_c.add_outer(&da_c, &tape.s);

        let mut ds = vec![T::zero(); hd];
        self.u_u.matvec_t_acc(&da_u, &mut ds);
        self.u_c.matvec_t_acc(&da_c, &mut ds);

        let mut dx = vec![T::zero(); self.input_dim()];
        self.w_u.matvec_t_acc(&da_u, &mut dx);
        self.w_c.matvec_t_acc(&da_c, &mut dx);

        let mut da_r = vec![T::zero(); hd];
        for i in 0..hd {
            let r = tape.r[i];
            dh_prev[i] += ds[i] * r;
            da_r[i] = ds[i] * tape.h_prev[i] * r * (one - r);
        }
        grads.w_r.add_outer(&da_r, &tape.x);
        grads.u_r.add_outer(&da_r, &tape.h_prev);
        self.w_r.matvec_t_acc(&da_r, &mut dx);
        self.u_r.matvec_t_acc(&da_r, &mut dh_prev);
        (dx, dh_prev)
    }
}

pub fn gru_step<T: Real>(gru: &Gru<T>, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    gru.step(x, h_prev).map(|(h, _)| h)
}
