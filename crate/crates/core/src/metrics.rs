//! Sparsity instrumentation and the scalar statistics used by the
//! certification suite: activation fractions, dead units, the Chebyshev
//! sparsity bound, the reconstruction-gradient bound, and Spearman rank
//! correlation for trend checks.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::model::ForwardCache;
use crate::numerics::{row_norms, Matrix, Vector};

/// Per-dataset sparsity summary. A unit counts as active on a sample when its
/// activation strictly exceeds the threshold `delta`; a unit is dead when it
/// is active on no sample at all. Pre-activation moments use the population
/// convention (divide by N), so on exactly whitened data the variance of unit
/// `j` is exactly `||W_j||^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Fraction of (sample, unit) pairs with activation above threshold.
    pub avg_activation_fraction: f64,
    /// Fraction of units active on no sample.
    pub dead_fraction: f64,
    /// Per-unit fraction of samples on which the unit is active.
    pub per_unit_fraction: Vec<f64>,
    /// Per-unit mean pre-activation.
    pub per_unit_mean_a: Vec<f64>,
    /// Per-unit population variance of the pre-activation.
    pub per_unit_var_a: Vec<f64>,
}

/// Compute a [`SparsityReport`] from the pre-activation matrix (samples in
/// rows, hidden units in columns).
pub fn sparsity_report(a: &Matrix, kind: ActivationKind, delta: f64) -> SparsityReport {
    let (num, m) = a.dim();
    assert!(num > 0 && m > 0, "need a non-empty pre-activation matrix");
    let n_f = num as f64;

    let mut active = vec![0usize; m];
    for row in a.rows() {
        for (j, &aij) in row.iter().enumerate() {
            if kind.act(aij) > delta {
                active[j] += 1;
            }
        }
    }

    let mean = a.mean_axis(Axis(0)).expect("non-empty batch");
    let mut var = Vector::zeros(m);
    for row in a.rows() {
        for j in 0..m {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.mapv_inplace(|v| v / n_f);

    let per_unit_fraction: Vec<f64> = active.iter().map(|&c| c as f64 / n_f).collect();
    let dead = active.iter().filter(|&&c| c == 0).count();
    let total_active: usize = active.iter().sum();

    SparsityReport {
        avg_activation_fraction: total_active as f64 / (n_f * m as f64),
        dead_fraction: dead as f64 / m as f64,
        per_unit_fraction,
        per_unit_mean_a: mean.to_vec(),
        per_unit_var_a: var.to_vec(),
    }
}

/// The pre-activation level below which a unit's activation stays at or under
/// the threshold `delta`: the solution of `act(a) = delta`. Returns `-inf`
/// when every pre-activation clears the threshold and `+inf` when none can.
/// Errors when `delta` lies outside the activation's range.
pub fn a_min_for(kind: ActivationKind, delta: f64) -> Result<f64> {
    let out_of_range = |msg: String| Error::Config(msg);
    match kind {
        ActivationKind::ReLU => {
            if delta < 0.0 {
                Err(out_of_range(format!("relu thresholds must be >= 0, got {delta}")))
            } else {
                Ok(delta)
            }
        }
        ActivationKind::Sigmoid => {
            if !(0.0..=1.0).contains(&delta) {
                Err(out_of_range(format!(
                    "sigmoid thresholds must lie in [0, 1], got {delta}"
                )))
            } else if delta == 0.0 {
                Ok(f64::NEG_INFINITY)
            } else if delta == 1.0 {
                Ok(f64::INFINITY)
            } else {
                Ok((delta / (1.0 - delta)).ln())
            }
        }
        ActivationKind::Softplus => {
            if delta < 0.0 {
                Err(out_of_range(format!(
                    "softplus thresholds must be >= 0, got {delta}"
                )))
            } else if delta == 0.0 {
                Ok(f64::NEG_INFINITY)
            } else {
                Ok(delta.exp_m1().ln())
            }
        }
        ActivationKind::Tanh => {
            if !(-1.0..=1.0).contains(&delta) {
                Err(out_of_range(format!(
                    "tanh thresholds must lie in [-1, 1], got {delta}"
                )))
            } else if delta == -1.0 {
                Ok(f64::NEG_INFINITY)
            } else if delta == 1.0 {
                Ok(f64::INFINITY)
            } else {
                Ok(delta.atanh())
            }
        }
    }
}

/// One-sided Chebyshev lower bound on the probability that a unit's
/// activation stays at or below the threshold whose pre-activation level is
/// `a_min`: `1 - var / (a_min - mean)^2`, clamped to `[0, 1]`. `None` when
/// the bound does not apply because the mean pre-activation already reaches
/// `a_min`.
pub fn chebyshev_sparsity_bound(mean_a: f64, var_a: f64, a_min: f64) -> Option<f64> {
    // NaN means falls through to None as well.
    if mean_a.is_nan() || mean_a >= a_min {
        return None;
    }
    let gap = a_min - mean_a;
    let bound = 1.0 - var_a / (gap * gap);
    Some(bound.clamp(0.0, 1.0))
}

/// Per-unit bound on the magnitude of the reconstruction gradient with
/// respect to the encoder bias: `2 sigma_r sqrt(n) ||W_j||`, where `sigma_r`
/// is the pooled residual standard deviation and `n` the input width.
pub fn bias_gradient_bound(sigma_r: f64, n: usize, w: &Matrix) -> Vector {
    row_norms(w).mapv(|norm| 2.0 * sigma_r * (n as f64).sqrt() * norm)
}

/// Pooled residual standard deviation: the root mean square over all
/// (sample, dimension) residual entries. `sqrt(n) * residual_std` equals the
/// root mean squared residual norm that the gradient bound needs.
pub fn residual_std(cache: &ForwardCache) -> f64 {
    let total = cache.r.len() as f64;
    (cache.r.iter().map(|v| v * v).sum::<f64>() / total).sqrt()
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant (no monotone association can be measured), and
/// panics on length mismatch or fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "rank correlation needs paired samples");
    assert!(xs.len() >= 2, "rank correlation needs at least two pairs");
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("non-NaN values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j hold one tie group; ranks are 1-based.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, ModelParams};
    use crate::numerics::Rng;
    use ndarray::array;

    #[test]
    fn report_counts_strictly_above_threshold() {
        // Two samples, two units. Unit 0 never activates, unit 1 once.
        let a = array![[0.0, 1.0], [0.0, 0.0]];
        let report = sparsity_report(&a, ActivationKind::ReLU, 0.0);
        assert_eq!(report.avg_activation_fraction, 0.25);
        assert_eq!(report.dead_fraction, 0.5);
        assert_eq!(report.per_unit_fraction, vec![0.0, 0.5]);
        assert_eq!(report.per_unit_mean_a, vec![0.0, 0.5]);
        assert_eq!(report.per_unit_var_a, vec![0.0, 0.25]);
    }

    #[test]
    fn report_uses_population_variance() {
        let a = array![[1.0], [3.0]];
        let report = sparsity_report(&a, ActivationKind::ReLU, 0.0);
        // Population variance of {1, 3} is 1, not the sample value 2.
        assert_eq!(report.per_unit_var_a, vec![1.0]);
    }

    #[test]
    fn threshold_inversion_round_trips() {
        for kind in ActivationKind::all() {
            let delta = kind.delta_min();
            let a_min = a_min_for(kind, delta).unwrap();
            if a_min.is_finite() {
                assert!(
                    (kind.act(a_min) - delta).abs() < 1e-12,
                    "{kind}: act({a_min}) != {delta}"
                );
            }
        }
        assert!((a_min_for(ActivationKind::Sigmoid, 0.1).unwrap() - (1.0f64 / 9.0).ln()).abs() < 1e-15);
        assert!((a_min_for(ActivationKind::Tanh, 0.1).unwrap() - 0.100_335_347_731_075_58).abs() < 1e-15);
        assert_eq!(a_min_for(ActivationKind::ReLU, 0.0).unwrap(), 0.0);
        assert_eq!(
            a_min_for(ActivationKind::Sigmoid, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(a_min_for(ActivationKind::Sigmoid, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(
            a_min_for(ActivationKind::Softplus, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(a_min_for(ActivationKind::ReLU, -0.5).is_err());
        assert!(a_min_for(ActivationKind::Sigmoid, 1.5).is_err());
        assert!(a_min_for(ActivationKind::Tanh, -2.0).is_err());
    }

    #[test]
    fn chebyshev_bound_basics() {
        // Mean at or past the threshold level: bound does not apply.
        assert_eq!(chebyshev_sparsity_bound(0.0, 1.0, 0.0), None);
        assert_eq!(chebyshev_sparsity_bound(1.0, 1.0, 0.0), None);
        // Zero variance below the level: certain sparsity.
        assert_eq!(chebyshev_sparsity_bound(-1.0, 0.0, 0.0), Some(1.0));
        // Large variance clamps at zero rather than going negative.
        assert_eq!(chebyshev_sparsity_bound(-1.0, 9.0, 0.0), Some(0.0));
        // var = gap^2 / 2 gives exactly 1/2.
        assert_eq!(chebyshev_sparsity_bound(-2.0, 2.0, 0.0), Some(0.5));
        // Infinite levels behave as limits.
        assert_eq!(chebyshev_sparsity_bound(0.0, 1.0, f64::INFINITY), Some(1.0));
        assert_eq!(chebyshev_sparsity_bound(0.0, 1.0, f64::NEG_INFINITY), None);
    }

    #[test]
    fn gradient_bound_holds_on_random_instances() {
        // The reconstruction bias gradient obeys 2 sigma_r sqrt(n) ||W_j||
        // with d1 <= 1 activations; check it sample by sample.
        let mut rng = Rng::seeded(31);
        for kind in ActivationKind::all() {
            for _ in 0..20 {
                let x = rng.normal_matrix(12, 5);
                let params = ModelParams::init(4, 5, &mut rng);
                let cache = forward(&x, &params, kind);
                let grads = crate::model::ae_grads(&x, &cache, &params, kind);
                let bound = bias_gradient_bound(residual_std(&cache), 5, &params.w);
                for j in 0..4 {
                    assert!(
                        grads.b_e[j].abs() <= bound[j] * (1.0 + 1e-12) + 1e-15,
                        "{kind}: |{}| > {}",
                        grads.b_e[j],
                        bound[j]
                    );
                }
            }
        }
    }

    #[test]
    fn residual_std_pools_all_entries() {
        let mut rng = Rng::seeded(32);
        let x = rng.normal_matrix(3, 2);
        let params = ModelParams::init(2, 2, &mut rng);
        let mut cache = forward(&x, &params, ActivationKind::Tanh);
        cache.r.fill(2.0);
        assert_eq!(residual_std(&cache), 2.0);
    }

    #[test]
    fn spearman_recovers_monotone_trends() {
        // Equal up to sqrt rounding in the normalizer.
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0));
        assert!(close(spearman(&[1.0, 2.0, 3.0], &[5.0, 0.0, -5.0]), -1.0));
        // Monotone but nonlinear is still a perfect rank correlation.
        assert!(close(
            spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 256.0]),
            1.0
        ));
        // Constant input has no measurable trend.
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn spearman_averages_tied_ranks() {
        // xs ranks: [1, 2.5, 2.5, 4]; correlation against ys ranks [1,2,3,4]
        // is cov/sqrt(vx*vy) = 4.5/sqrt(4.5*5) ~ 0.9486832980505138.
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!((r - 0.948_683_298_050_513_8).abs() < 1e-15);
    }

    #[test]
    fn report_survives_serialization() {
        let a = array![[0.2, -0.4], [0.0, 1.0], [0.3, 0.3]];
        let report = sparsity_report(&a, ActivationKind::Sigmoid, 0.1);
        let json = serde_json::to_string(&report).unwrap();
        let back: SparsityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report.avg_activation_fraction, back.avg_activation_fraction);
        assert_eq!(report.per_unit_var_a, back.per_unit_var_a);
    }
}
