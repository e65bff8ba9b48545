//! Minibatch SGD with classical momentum, plus the run history records that
//! the sweep and inspection tooling consume.
//!
//! Randomness is split into three decoupled streams per run seed: 0 seeds the
//! parameter initialization, 1 the per-epoch shuffles, 2 the corruption noise
//! of the sampled objectives. Changing the corruption draws therefore never
//! perturbs the initialization or the batch order.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::metrics::{sparsity_report, SparsityReport};
use crate::model::{ae_loss, forward, Gradients, ModelParams};
use crate::numerics::{project_rows, ConstraintKind, Matrix, Rng};
use crate::regularizers::{eval_objective, reg_value, ObjectiveSpec};

/// Everything that defines a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    pub activation: ActivationKind,
    pub hidden_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub constraint: ConstraintKind,
    pub seed: u64,
}

impl TrainConfig {
    /// A config with the protocol defaults (15 epochs, batches of 50,
    /// learning rate 0.003, momentum 0.9, unconstrained, seed 0).
    pub fn new(objective: ObjectiveSpec, activation: ActivationKind, hidden_units: usize) -> Self {
        Self {
            objective,
            activation,
            hidden_units,
            epochs: 15,
            batch_size: 50,
            learning_rate: 0.003,
            momentum: 0.9,
            constraint: ConstraintKind::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.hidden_units == 0 {
            return bad("hidden_units must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }
}

/// End-of-epoch measurements, all on the full training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Reconstruction loss alone, regardless of the training objective.
    pub recon_loss: f64,
    /// Closed-form regularizer value, coefficient-free; 0 for the plain and
    /// corruption-sampled objectives, which have no closed-form term.
    pub reg_value: f64,
    pub act_fraction: f64,
    pub dead_fraction: f64,
    /// Mean pre-activation pooled over units and samples.
    pub mean_pre_activation: f64,
    pub per_unit_mean_a: Vec<f64>,
    pub per_unit_var_a: Vec<f64>,
}

/// A finished (or aborted-and-propagated) run: the config that produced it,
/// one record per epoch, and the final parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub config: TrainConfig,
    pub records: Vec<EpochRecord>,
    pub final_params: ModelParams,
}

impl TrainHistory {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One momentum step: `v <- mu v - lr g`, `theta <- theta + v`, then the
/// weight rows are projected onto the constraint set. The velocity is not
/// projected, so momentum keeps pointing where the unconstrained update was
/// headed.
pub fn sgd_momentum_step(
    params: &mut ModelParams,
    grads: &Gradients,
    velocity: &mut Gradients,
    learning_rate: f64,
    momentum: f64,
    constraint: ConstraintKind,
) {
    velocity.scale(momentum);
    velocity.axpy(-learning_rate, grads);
    params.w += &velocity.w;
    params.b_e += &velocity.b_e;
    params.b_d += &velocity.b_d;
    project_rows(&mut params.w, constraint);
}

/// Train on `x` (samples in rows). The last batch of an epoch keeps its
/// stragglers, so every sample is visited exactly once per epoch. Aborts with
/// a structured error the moment the objective stops being finite.
pub fn train(config: &TrainConfig, x: &Matrix) -> Result<TrainHistory> {
    config.validate()?;
    let (num, n) = x.dim();
    if num == 0 || n == 0 {
        return Err(Error::Config("training data must be non-empty".into()));
    }

    let mut init_rng = Rng::stream(config.seed, 0);
    let mut shuffle_rng = Rng::stream(config.seed, 1);
    let mut noise_rng = Rng::stream(config.seed, 2);

    let mut params = ModelParams::init(config.hidden_units, n, &mut init_rng);
    // Start feasible so constrained runs never see an infeasible iterate.
    project_rows(&mut params.w, config.constraint);
    let mut velocity = Gradients::zeros_like(&params);

    let mut indices: Vec<usize> = (0..num).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut indices);
        for (batch_idx, chunk) in indices.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let (value, grads) =
                eval_objective(&config.objective, &xb, &params, config.activation, &mut noise_rng)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            sgd_momentum_step(
                &mut params,
                &grads,
                &mut velocity,
                config.learning_rate,
                config.momentum,
                config.constraint,
            );
        }
        records.push(epoch_record(epoch, config, x, &params)?);
    }

    Ok(TrainHistory {
        config: config.clone(),
        records,
        final_params: params,
    })
}

fn epoch_record(
    epoch: usize,
    config: &TrainConfig,
    x: &Matrix,
    params: &ModelParams,
) -> Result<EpochRecord> {
    let cache = forward(x, params, config.activation);
    let recon_loss = ae_loss(&cache);
    let reg = if config.objective.coeff == 0.0 {
        0.0
    } else {
        reg_value(&config.objective, x, &cache, params, config.activation)?
    };
    let report: SparsityReport =
        sparsity_report(&cache.a, config.activation, config.activation.delta_min());
    let mean_pre = report.per_unit_mean_a.iter().sum::<f64>() / report.per_unit_mean_a.len() as f64;
    Ok(EpochRecord {
        epoch,
        recon_loss,
        reg_value: reg,
        act_fraction: report.avg_activation_fraction,
        dead_fraction: report.dead_fraction,
        mean_pre_activation: mean_pre,
        per_unit_mean_a: report.per_unit_mean_a,
        per_unit_var_a: report.per_unit_var_a,
    })
}
