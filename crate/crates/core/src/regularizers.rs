//! The regularized objectives and their hand-derived gradients.
//!
//! Every function here returns the value of its term together with exact
//! gradients for all three parameter blocks. Penalty terms (`reg_*`) are
//! coefficient-free: the caller scales them. The two corruption-based
//! objectives (`dae_loss`, `edae_loss`) return the full objective including
//! the reconstruction part, because their stochastic term cannot be separated
//! from the draw of corruption noise.
//!
//! Notation used in the derivations below, all per sample: `a = W x + b_e`,
//! `h = act(a)`, `y = W^T h + b_d`, `r = x - y`, `d1/d2` the element-wise
//! activation derivatives at `a`, and `sq_j = ||W_j||^2` for hidden unit `j`.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::model::{ae_loss, ae_grads, forward, recon_grads, ForwardCache, Gradients, ModelParams};
use crate::numerics::{row_norms, Matrix, Rng, Vector};

/// Monotone increasing wrappers available for the mean-activation penalty
/// family `R = sum_j f(mean_i h_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneFn {
    /// `f(v) = v`.
    Identity,
    /// `f(v) = -ln(1 - v)`; requires `v < 1`.
    NegLogOneMinus,
}

/// Which objective to train, with its structural knobs. The regularization
/// coefficient lives in [`ObjectiveSpec`] because every kind shares one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Plain reconstruction, no regularizer.
    Ae,
    /// Reconstruct the clean sample from additively corrupted input,
    /// averaging `samples` corruption draws per example. The coefficient is
    /// the corruption variance.
    Dae { samples: usize },
    /// Penalize the squared Frobenius norm of the encoder Jacobian, which for
    /// tied weights and element-wise activations is `sum_j d1_j^2 ||W_j||^2`.
    Cae,
    /// Marginalized corruption penalty `sum_j d1_j^2 ||W_j||^4`.
    Mdae,
    /// KL divergence between a target mean activation `rho` and the batch
    /// mean activation of each unit; `rho = 0` reduces to
    /// `-sum_j ln(1 - mean_i h_j)`.
    Sae { rho: f64 },
    /// Reconstruction plus the sampled first-order corruption term
    /// `(x~ - x)^T grad_x l`, averaging `samples` draws. The coefficient is
    /// the corruption variance.
    Edae { samples: usize },
    /// Derivative-times-length family `mean_i sum_j d1^q ||W_j||^p`.
    GenericC1 { q: u32, p: u32 },
    /// Mean-activation family `sum_j f(mean_i h_j)`.
    GenericC2 { f: MonotoneFn },
}

impl ObjectiveKind {
    /// Parse a compact tag as used in sweep configs and result tables:
    /// `ae`, `dae`, `cae`, `mdae`, `sae`, `edae`, `c1:<q>,<p>`,
    /// `c2:identity`, `c2:neg_log_one_minus`. `dae_samples` and `sae_rho`
    /// supply the knobs that the tag itself does not carry.
    pub fn parse_tag(tag: &str, dae_samples: usize, sae_rho: f64) -> Result<Self> {
        let bad = |msg: String| Error::Config(msg);
        match tag {
            "ae" => Ok(ObjectiveKind::Ae),
            "dae" => Ok(ObjectiveKind::Dae {
                samples: dae_samples,
            }),
            "cae" => Ok(ObjectiveKind::Cae),
            "mdae" => Ok(ObjectiveKind::Mdae),
            "sae" => Ok(ObjectiveKind::Sae { rho: sae_rho }),
            "edae" => Ok(ObjectiveKind::Edae {
                samples: dae_samples,
            }),
            _ => {
                if let Some(rest) = tag.strip_prefix("c1:") {
                    let mut parts = rest.splitn(2, ',');
                    let q = parts
                        .next()
                        .and_then(|v| v.trim().parse::<u32>().ok())
                        .ok_or_else(|| bad(format!("bad c1 exponents in {tag:?}")))?;
                    let p = parts
                        .next()
                        .and_then(|v| v.trim().parse::<u32>().ok())
                        .ok_or_else(|| bad(format!("bad c1 exponents in {tag:?}")))?;
                    if q == 0 {
                        return Err(bad("c1 requires q >= 1".into()));
                    }
                    Ok(ObjectiveKind::GenericC1 { q, p })
                } else if let Some(rest) = tag.strip_prefix("c2:") {
                    match rest {
                        "identity" => Ok(ObjectiveKind::GenericC2 {
                            f: MonotoneFn::Identity,
                        }),
                        "neg_log_one_minus" => Ok(ObjectiveKind::GenericC2 {
                            f: MonotoneFn::NegLogOneMinus,
                        }),
                        _ => Err(bad(format!("unknown c2 wrapper {rest:?}"))),
                    }
                } else {
                    Err(bad(format!(
                        "unknown model tag {tag:?}; expected ae, dae, cae, mdae, sae, edae, c1:<q>,<p> or c2:<f>"
                    )))
                }
            }
        }
    }

    /// Compact tag, inverse of [`ObjectiveKind::parse_tag`] up to knob values.
    pub fn tag(&self) -> String {
        match self {
            ObjectiveKind::Ae => "ae".into(),
            ObjectiveKind::Dae { .. } => "dae".into(),
            ObjectiveKind::Cae => "cae".into(),
            ObjectiveKind::Mdae => "mdae".into(),
            ObjectiveKind::Sae { .. } => "sae".into(),
            ObjectiveKind::Edae { .. } => "edae".into(),
            ObjectiveKind::GenericC1 { q, p } => format!("c1:{q},{p}"),
            ObjectiveKind::GenericC2 { f } => match f {
                MonotoneFn::Identity => "c2:identity".into(),
                MonotoneFn::NegLogOneMinus => "c2:neg_log_one_minus".into(),
            },
        }
    }
}

/// An objective kind together with its regularization coefficient: `lambda`
/// for the penalty kinds, the corruption variance `sigma^2` for `Dae` and
/// `Edae`, ignored for `Ae`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub coeff: f64,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, coeff: f64) -> Self {
        Self { kind, coeff }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coeff.is_finite() || self.coeff < 0.0 {
            return Err(Error::Config(format!(
                "regularization coefficient must be finite and >= 0, got {}",
                self.coeff
            )));
        }
        match self.kind {
            ObjectiveKind::Dae { samples } | ObjectiveKind::Edae { samples } => {
                if samples == 0 {
                    return Err(Error::Config("corruption draws must be >= 1".into()));
                }
            }
            ObjectiveKind::Sae { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::Config(format!(
                        "sae target activation must lie in [0, 1), got {rho}"
                    )));
                }
            }
            ObjectiveKind::GenericC1 { q: 0, .. } => {
                return Err(Error::Config("c1 requires q >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Contractive penalty `mean_i sum_j d1_ij^2 sq_j`, equal to the squared
/// Frobenius norm of the encoder Jacobian averaged over the batch.
///
/// Gradients: `d/db_ej = mean_i 2 d1 d2 sq_j`; each weight row gets the
/// encoder path `(2 sq_j / N) sum_i d1 d2 x_i` plus the length path
/// `(2 / N) (sum_i d1^2) W_j`.
pub fn reg_cae(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> (f64, Gradients) {
    let sq = row_norms(&params.w).mapv(|v| v * v);
    penalty_d1_pow_norms(x, cache, params, kind, 2, &sq, 2.0)
}

/// Marginalized-corruption penalty `mean_i sum_j d1_ij^2 sq_j^2`.
pub fn reg_mdae(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> (f64, Gradients) {
    let sq2 = row_norms(&params.w).mapv(|v| v.powi(4));
    penalty_d1_pow_norms(x, cache, params, kind, 2, &sq2, 4.0)
}

/// General derivative-times-length penalty `mean_i sum_j d1^q ||W_j||^p` with
/// `q >= 1`, `p >= 0`. `0^0` counts as 1 for both the zero-derivative and the
/// zero-row case, so `p = 0` reduces to `mean_i sum_j d1^q`.
pub fn reg_generic_c1(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
    q: u32,
    p: u32,
) -> (f64, Gradients) {
    assert!(q >= 1, "c1 requires q >= 1");
    let norms = row_norms(&params.w);
    let np = norms.mapv(|v| v.powi(p as i32));
    penalty_d1_pow_norms(x, cache, params, kind, q, &np, p as f64)
}

/// Shared body of the `d1^q * norm-power` penalties. `np_j` is the norm power
/// `||W_j||^p` and `p` its exponent, so the length path of the gradient is
/// `p ||W_j||^(p-2) W_jk`.
fn penalty_d1_pow_norms(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
    q: u32,
    np: &Vector,
    p: f64,
) -> (f64, Gradients) {
    let batch = x.nrows() as f64;
    let d1 = cache.a.mapv(|v| kind.act_d1(v));
    let d2 = cache.a.mapv(|v| kind.act_d2(v));
    let d1q = d1.mapv(|v| v.powi(q as i32));
    // powi(0.0, 0) == 1.0, which is exactly the 0^0 = 1 convention needed at
    // q = 1 for kink-flat activations.
    let d1qm1_d2 = d1.mapv(|v| v.powi(q as i32 - 1)) * &d2;

    let d1q_colsum = d1q.sum_axis(Axis(0));
    let value = d1q_colsum.dot(np) / batch;

    let chain_colsum = d1qm1_d2.sum_axis(Axis(0));
    let b_e = (q as f64) / batch * &chain_colsum * np;

    // Encoder path: row j accumulates (q np_j / N) sum_i (d1^{q-1} d2)_ij x_i.
    let mut w = d1qm1_d2.t().dot(x);
    let norms = row_norms(&params.w);
    for (j, mut row) in w.rows_mut().into_iter().enumerate() {
        let scale = (q as f64) * np[j] / batch;
        row.mapv_inplace(|v| v * scale);
        // Length path: (p ||W_j||^{p-2} / N) (sum_i d1^q) W_j. Zero rows have
        // no length gradient (and p = 0 has no length path at all).
        if p > 0.0 && norms[j] > 0.0 {
            let c = p * norms[j].powi(p as i32 - 2) * d1q_colsum[j] / batch;
            row.scaled_add(c, &params.w.row(j));
        }
    }

    let b_d = Vector::zeros(params.input_dim());
    (value, Gradients { w, b_e, b_d })
}

/// KL sparsity penalty against target mean activation `rho`, using the batch
/// mean `rho_hat_j = mean_i h_ij`:
/// `sum_j [rho ln(rho/rho_hat) + (1-rho) ln((1-rho)/(1-rho_hat))]`,
/// which for `rho = 0` reduces to `-sum_j ln(1 - rho_hat_j)`.
///
/// The gradient flows through `rho_hat`: with
/// `g_j = d/d rho_hat_j = (1-rho)/(1-rho_hat_j) - rho/rho_hat_j`,
/// `d/db_ej = g_j mean_i d1` and row `j` of the weight gradient is
/// `g_j mean_i d1 x_i`.
///
/// Errors when a unit's mean activation leaves the KL domain: `rho_hat >= 1`
/// always, additionally `rho_hat <= 0` when `rho > 0`.
pub fn reg_sae(
    rho: f64,
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> Result<(f64, Gradients)> {
    assert!((0.0..1.0).contains(&rho), "rho must lie in [0, 1)");
    let batch = x.nrows() as f64;
    let rho_hat = cache.h.mean_axis(Axis(0)).expect("non-empty batch");

    let mut value = 0.0;
    let mut g = Vector::zeros(rho_hat.len());
    for (j, &rh) in rho_hat.iter().enumerate() {
        if rh >= 1.0 {
            return Err(Error::Domain {
                unit: j,
                msg: format!("mean activation {rh} >= 1 leaves the KL domain"),
            });
        }
        if rho > 0.0 {
            if rh <= 0.0 {
                return Err(Error::Domain {
                    unit: j,
                    msg: format!("mean activation {rh} <= 0 leaves the KL domain for rho > 0"),
                });
            }
            value += rho * (rho / rh).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rh)).ln();
            g[j] = (1.0 - rho) / (1.0 - rh) - rho / rh;
        } else {
            value += -(1.0 - rh).ln();
            g[j] = 1.0 / (1.0 - rh);
        }
    }

    let d1 = cache.a.mapv(|v| kind.act_d1(v));
    let d1_colmean = d1.mean_axis(Axis(0)).expect("non-empty batch");
    let b_e = &g * &d1_colmean;

    let mut w = d1.t().dot(x);
    for (j, mut row) in w.rows_mut().into_iter().enumerate() {
        let scale = g[j] / batch;
        row.mapv_inplace(|v| v * scale);
    }

    let b_d = Vector::zeros(params.input_dim());
    Ok((value, Gradients { w, b_e, b_d }))
}

/// Mean-activation penalty `sum_j f(mean_i h_j)` for a monotone increasing
/// `f`. `Identity` gives `d/db_ej = mean_i d1`, always non-negative for the
/// non-decreasing activations in this crate; `NegLogOneMinus` is the `rho = 0`
/// KL penalty and shares its domain requirements.
pub fn reg_generic_c2(
    f: MonotoneFn,
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> Result<(f64, Gradients)> {
    match f {
        MonotoneFn::NegLogOneMinus => reg_sae(0.0, x, cache, params, kind),
        MonotoneFn::Identity => {
            let batch = x.nrows() as f64;
            let value = cache.h.mean_axis(Axis(0)).expect("non-empty batch").sum();
            let d1 = cache.a.mapv(|v| kind.act_d1(v));
            let b_e = d1.mean_axis(Axis(0)).expect("non-empty batch");
            let mut w = d1.t().dot(x);
            w.mapv_inplace(|v| v / batch);
            let b_d = Vector::zeros(params.input_dim());
            Ok((value, Gradients { w, b_e, b_d }))
        }
    }
}

/// Denoising objective: reconstruct the clean batch from additively corrupted
/// inputs, `x~ = x + sigma * eps` with `eps ~ N(0, I)`, averaged over
/// `k_draws` corruption draws per example.
///
/// Draw order: one `batch x n` standard-normal matrix per corruption draw,
/// row-major, consumed sequentially from `rng`. Re-seeding the generator
/// reproduces the corruption exactly, which is what makes finite-difference
/// checks of this objective meaningful (common random numbers).
///
/// With `sigma2 = 0` and `k_draws = 1` the value equals [`ae_loss`] bitwise.
pub fn dae_loss(
    x: &Matrix,
    params: &ModelParams,
    kind: ActivationKind,
    sigma2: f64,
    k_draws: usize,
    rng: &mut Rng,
) -> (f64, Gradients) {
    assert!(k_draws >= 1, "need at least one corruption draw");
    assert!(sigma2 >= 0.0, "corruption variance must be >= 0");
    let sigma = sigma2.sqrt();
    let k = k_draws as f64;

    let mut value = 0.0;
    let mut grads = Gradients::zeros_like(params);
    for _ in 0..k_draws {
        let eps = rng.normal_matrix(x.nrows(), x.ncols());
        let xt = x + &(sigma * eps);
        let mut cache = forward(&xt, params, kind);
        // The residual targets the clean batch.
        cache.r = x - &cache.y;
        value += ae_loss(&cache) / k;
        let g = recon_grads(&xt, &cache, params, kind);
        grads.axpy(1.0 / k, &g);
    }
    (value, grads)
}

/// Second-order closed form of the denoising objective around the clean
/// input: reconstruction loss plus `sigma^2` times the batch mean of
///
/// ```text
///   sum_j d1_j^2 ||W_j||^4
/// + sum_{j != k} d1_j d1_k (W_j^T W_k)^2
/// + sum_i (b_d + W^T h - x)^T W^T (d2 .* W^i .* W^i)
/// ```
///
/// where `W^i` is the `i`-th column of `W`. The three terms are evaluated
/// exactly as written (the first two are jointly equal to
/// `tr(D1 W W^T D1 W W^T)`, which the verification suite cross-checks). Used
/// as an oracle against the sampled objective; not itself trained on, so no
/// gradient is provided.
pub fn dae_taylor_value(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
    sigma2: f64,
) -> f64 {
    let batch = x.nrows();
    let m = params.hidden_units();
    let n = params.input_dim();
    let gram = params.w.dot(&params.w.t());

    let mut reg = 0.0;
    for i in 0..batch {
        let d1: Vec<f64> = (0..m).map(|j| kind.act_d1(cache.a[[i, j]])).collect();
        let d2: Vec<f64> = (0..m).map(|j| kind.act_d2(cache.a[[i, j]])).collect();

        let mut diag = 0.0;
        for j in 0..m {
            diag += d1[j] * d1[j] * gram[[j, j]] * gram[[j, j]];
        }
        let mut cross = 0.0;
        for j in 0..m {
            for kk in 0..m {
                if kk != j {
                    cross += d1[j] * d1[kk] * gram[[j, kk]] * gram[[j, kk]];
                }
            }
        }

        // u = W (b_d + W^T h - x) = -W r, evaluated once; the i-th column
        // enters through its squared entries.
        let mut u = vec![0.0; m];
        for (j, u_j) in u.iter_mut().enumerate() {
            *u_j = -params.w.row(j).dot(&cache.r.row(i));
        }
        let mut third = 0.0;
        for col in 0..n {
            let mut summand = 0.0;
            for j in 0..m {
                let wji = params.w[[j, col]];
                summand += u[j] * d2[j] * wji * wji;
            }
            third += summand;
        }

        reg += diag + cross + third;
    }

    ae_loss(cache) + sigma2 * reg / batch as f64
}

/// Explicitly corrupted first-order objective: reconstruction loss plus the
/// batch mean of `(x~ - x)^T grad_x l` with the input gradient taken at the
/// clean point, averaged over `k_draws` corruption draws. Corruption draw
/// order matches [`dae_loss`].
///
/// Writing `c = W eps_scaled`, `v = W r`, `s = d1 .* c` per sample, the
/// first-order term is `T = -2 sum_j d1_j v_j c_j` and its gradients are
///
/// ```text
/// dT/db_e  = -2 ( d2 .* c .* v  -  d1 .* (W W^T s) )
/// dT/db_d  =  2 W^T s
/// dT/dW    = -2 ( (d2 .* v .* c) x^T + (d1 .* v) eps^T + (d1 .* c) r^T
///                 - h (W^T s)^T - (d1 .* (W W^T s)) x^T )
/// ```
///
/// For ReLU `d2 = 0` kills the curvature entries but the `d1 .* (W W^T s)`
/// path survives, which is what generates a bias gradient under explicit
/// corruption even though the marginalized penalty has none.
pub fn edae_loss(
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
    sigma2: f64,
    k_draws: usize,
    rng: &mut Rng,
) -> (f64, Gradients) {
    assert!(k_draws >= 1, "need at least one corruption draw");
    assert!(sigma2 >= 0.0, "corruption variance must be >= 0");
    let batch = x.nrows() as f64;
    let sigma = sigma2.sqrt();
    let k = k_draws as f64;

    let mut value = ae_loss(cache);
    let mut grads = ae_grads(x, cache, params, kind);

    let d1 = cache.a.mapv(|v| kind.act_d1(v));
    let d2 = cache.a.mapv(|v| kind.act_d2(v));
    let v = cache.r.dot(&params.w.t());

    for _ in 0..k_draws {
        let eps = sigma * rng.normal_matrix(x.nrows(), x.ncols());
        let c = eps.dot(&params.w.t());
        let s = &d1 * &c;
        let tn = s.dot(&params.w); // rows are W^T s per sample
        let phi = tn.dot(&params.w.t()); // rows are W W^T s per sample

        let scale = -2.0 / (batch * k);
        value += scale * (&d1 * &v * &c).sum();

        let b_e_term = (&d2 * &c * &v - &d1 * &phi).sum_axis(Axis(0));
        grads.b_e.scaled_add(scale, &b_e_term);

        let b_d_term = tn.sum_axis(Axis(0));
        grads.b_d.scaled_add(-scale, &b_d_term);

        let mut w_term = (&d2 * &v * &c).t().dot(x);
        w_term += &(&d1 * &v).t().dot(&eps);
        w_term += &(&d1 * &c).t().dot(&cache.r);
        w_term -= &cache.h.t().dot(&tn);
        w_term -= &(&d1 * &phi).t().dot(x);
        grads.w.scaled_add(scale, &w_term);
    }
    (value, grads)
}

/// Gradient of the closed-form regularizer alone with respect to the encoder
/// bias, coefficient-free. This is the quantity whose sign decides whether
/// the regularizer pushes mean pre-activations down. Errors for the kinds
/// whose regularization exists only through sampled corruption.
pub fn bias_reg_gradient(
    spec: &ObjectiveSpec,
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> Result<Vector> {
    match spec.kind {
        ObjectiveKind::Cae => Ok(reg_cae(x, cache, params, kind).1.b_e),
        ObjectiveKind::Mdae => Ok(reg_mdae(x, cache, params, kind).1.b_e),
        ObjectiveKind::GenericC1 { q, p } => {
            Ok(reg_generic_c1(x, cache, params, kind, q, p).1.b_e)
        }
        ObjectiveKind::GenericC2 { f } => Ok(reg_generic_c2(f, x, cache, params, kind)?.1.b_e),
        ObjectiveKind::Sae { rho } => Ok(reg_sae(rho, x, cache, params, kind)?.1.b_e),
        ObjectiveKind::Ae | ObjectiveKind::Dae { .. } | ObjectiveKind::Edae { .. } => {
            Err(Error::Config(format!(
                "objective {:?} has no closed-form regularizer term",
                spec.kind.tag()
            )))
        }
    }
}

/// Value and gradients of the full training objective on one batch.
///
/// Penalty kinds assemble `ae_loss + coeff * reg`; a zero coefficient
/// short-circuits to the plain reconstruction objective so that cells with
/// `coeff = 0` are exactly the unregularized model (and cannot trip domain
/// errors in a penalty that is switched off). The corrupted kinds consume
/// noise from `rng`; everything else leaves it untouched.
pub fn eval_objective(
    spec: &ObjectiveSpec,
    x: &Matrix,
    params: &ModelParams,
    kind: ActivationKind,
    rng: &mut Rng,
) -> Result<(f64, Gradients)> {
    spec.validate()?;
    if let ObjectiveKind::Dae { samples } = spec.kind {
        return Ok(dae_loss(x, params, kind, spec.coeff, samples, rng));
    }

    let cache = forward(x, params, kind);
    match spec.kind {
        ObjectiveKind::Ae => Ok((ae_loss(&cache), ae_grads(x, &cache, params, kind))),
        ObjectiveKind::Edae { samples } => Ok(edae_loss(
            x, &cache, params, kind, spec.coeff, samples, rng,
        )),
        ObjectiveKind::Dae { .. } => unreachable!("handled above"),
        _ => {
            let mut value = ae_loss(&cache);
            let mut grads = ae_grads(x, &cache, params, kind);
            if spec.coeff != 0.0 {
                let (reg_value, reg_grads) = match spec.kind {
                    ObjectiveKind::Cae => reg_cae(x, &cache, params, kind),
                    ObjectiveKind::Mdae => reg_mdae(x, &cache, params, kind),
                    ObjectiveKind::Sae { rho } => reg_sae(rho, x, &cache, params, kind)?,
                    ObjectiveKind::GenericC1 { q, p } => {
                        reg_generic_c1(x, &cache, params, kind, q, p)
                    }
                    ObjectiveKind::GenericC2 { f } => {
                        reg_generic_c2(f, x, &cache, params, kind)?
                    }
                    _ => unreachable!(),
                };
                value += spec.coeff * reg_value;
                grads.axpy(spec.coeff, &reg_grads);
            }
            Ok((value, grads))
        }
    }
}

/// Value of the closed-form regularizer alone (coefficient-free), for
/// instrumentation. Zero for the kinds without one.
pub fn reg_value(
    spec: &ObjectiveSpec,
    x: &Matrix,
    cache: &ForwardCache,
    params: &ModelParams,
    kind: ActivationKind,
) -> Result<f64> {
    match spec.kind {
        ObjectiveKind::Cae => Ok(reg_cae(x, cache, params, kind).0),
        ObjectiveKind::Mdae => Ok(reg_mdae(x, cache, params, kind).0),
        ObjectiveKind::Sae { rho } => Ok(reg_sae(rho, x, cache, params, kind)?.0),
        ObjectiveKind::GenericC1 { q, p } => Ok(reg_generic_c1(x, cache, params, kind, q, p).0),
        ObjectiveKind::GenericC2 { f } => Ok(reg_generic_c2(f, x, cache, params, kind)?.0),
        ObjectiveKind::Ae | ObjectiveKind::Dae { .. } | ObjectiveKind::Edae { .. } => Ok(0.0),
    }
}
