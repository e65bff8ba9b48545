//! Tied-weight auto-encoder with one hidden layer and linear decoding.
//!
//! Hidden unit `j` owns row `W_j` of the `m x n` weight matrix. A batch `X`
//! (samples in rows) is encoded as `H = act(X W^T + b_e)` and decoded as
//! `Y = H W + b_d`; the residual is `R = X - Y`. The reconstruction loss is
//! the squared residual summed over input dimensions and averaged over the
//! batch.
//!
//! Shape mismatches are programmer errors and panic.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::numerics::{glorot_init, Matrix, Rng, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `m x n`, tied between encoder and decoder.
    pub w: Matrix,
    /// Encoder bias, length `m`.
    pub b_e: Vector,
    /// Decoder bias, length `n`.
    pub b_d: Vector,
}

impl ModelParams {
    /// Glorot-initialized weights, zero biases.
    pub fn init(m: usize, n: usize, rng: &mut Rng) -> Self {
        Self {
            w: glorot_init(m, n, rng),
            b_e: Vector::zeros(m),
            b_d: Vector::zeros(n),
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.w.len() + self.b_e.len() + self.b_d.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Everything the backward passes and the instrumentation need from a forward
/// pass: pre-activations `a`, hidden codes `h`, reconstructions `y`, residuals
/// `r`. All are `batch x dim` with samples in rows.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub a: Matrix,
    pub h: Matrix,
    pub y: Matrix,
    pub r: Matrix,
}

pub fn forward(x: &Matrix, params: &ModelParams, kind: ActivationKind) -> ForwardCache {
    assert_eq!(
        x.ncols(),
        params.input_dim(),
        "input dimension does not match weight columns"
    );
    assert_eq!(params.b_e.len(), params.hidden_units());
    assert_eq!(params.b_d.len(), params.input_dim());
    let a = x.dot(&params.w.t()) + &params.b_e;
    let h = a.mapv(|v| kind.act(v));
    let y = h.dot(&params.w) + &params.b_d;
    let r = x - &y;
    ForwardCache { a, h, y, r }
}

/// Mean over the batch of the squared residual norm.
pub fn ae_loss(cache: &ForwardCache) -> f64 {
    let batch = cache.r.nrows() as f64;
    cache.r.iter().map(|v| v * v).sum::<f64>() / batch
}

/// Gradient container shaped like [`ModelParams`]. Doubles as the optimizer's
/// velocity state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub w: Matrix,
    pub b_e: Vector,
    pub b_d: Vector,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            w: Matrix::zeros(params.w.raw_dim()),
            b_e: Vector::zeros(params.b_e.len()),
            b_d: Vector::zeros(params.b_d.len()),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.w.mapv_inplace(|v| v * s);
        self.b_e.mapv_inplace(|v| v * s);
        self.b_d.mapv_inplace(|v| v * s);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Gradients) {
        self.w.scaled_add(alpha, &other.w);
        self.b_e.scaled_add(alpha, &other.b_e);
        self.b_d.scaled_add(alpha, &other.b_d);
    }

    /// Largest absolute entry, across all three blocks.
    pub fn max_abs(&self) -> f64 {
        let m = |it: &mut dyn Iterator<Item = &f64>| it.fold(0.0_f64, |acc, v| acc.max(v.abs()));
        m(&mut self.w.iter())
            .max(m(&mut self.b_e.iter()))
            .max(m(&mut self.b_d.iter()))
    }
}

/// Gradients of [`ae_loss`] with respect to all parameters.
///
/// With `G_a = -2 (R W^T) .* act_d1(A) / batch`:
/// * `b_e` gets the column sums of `G_a`, i.e. entry `j` is the batch mean of
///   `-2 act_d1(a_j) (r^T W_j)`;
/// * `W` gets the encoder path `G_a^T X` plus the decoder path `H^T (-2 R) / batch`;
/// * `b_d` gets the batch mean of `-2 r`.
pub fn ae_grads(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> Gradients {
    recon_grads(x, cache, params, kind)
}

/// Backward pass for a reconstruction term. `cache` must be the forward pass
/// of `x_enc`, but its residual may be taken against a different target:
/// corrupted objectives encode the corrupted input while reconstructing the
/// clean one. `ae_grads` is the plain `x_enc == target` case.
pub(crate) fn recon_grads(
    x_enc: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> Gradients {
    let batch = x_enc.nrows() as f64;
    let d1 = cache.a.mapv(|v| kind.act_d1(v));
    // dL/dY = -2 R / batch
    let g_y = cache.r.mapv(|v| -2.0 * v / batch);
    // dL/dA = (dL/dY W^T) .* d1
    let g_a = g_y.dot(&params.w.t()) * &d1;
    let b_e = g_a.sum_axis(Axis(0));
    let b_d = g_y.sum_axis(Axis(0));
    let w = g_a.t().dot(x_enc) + cache.h.t().dot(&g_y);
    Gradients { w, b_e, b_d }
}
