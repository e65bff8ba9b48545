//! Element-wise encoder activations with first and second derivatives.
//!
//! All four functions are non-decreasing with derivative in [0, 1], which is
//! what the bias-drift analysis in `verify` relies on. ReLU is the only
//! non-smooth member; its derivative at the kink is defined as 0 and its
//! second derivative is identically 0, so smooth-only identities must either
//! avoid the kink or account for the missing curvature term.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[serde(rename = "relu")]
    ReLU,
    Sigmoid,
    Softplus,
    Tanh,
}

impl ActivationKind {
    pub fn all() -> [ActivationKind; 4] {
        [
            ActivationKind::ReLU,
            ActivationKind::Sigmoid,
            ActivationKind::Softplus,
            ActivationKind::Tanh,
        ]
    }

    pub fn act(self, a: f64) -> f64 {
        match self {
            ActivationKind::ReLU => a.max(0.0),
            ActivationKind::Sigmoid => sigmoid(a),
            // max(a, 0) + ln(1 + exp(-|a|)) never overflows and agrees with
            // ln(1 + exp(a)) in exact arithmetic.
            ActivationKind::Softplus => a.max(0.0) + (-a.abs()).exp().ln_1p(),
            ActivationKind::Tanh => a.tanh(),
        }
    }

    /// First derivative. ReLU takes the value 0 at its kink.
    pub fn act_d1(self, a: f64) -> f64 {
        match self {
            ActivationKind::ReLU => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
            ActivationKind::Softplus => sigmoid(a),
            ActivationKind::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
        }
    }

    /// Second derivative. Identically 0 for ReLU.
    pub fn act_d2(self, a: f64) -> f64 {
        match self {
            ActivationKind::ReLU => 0.0,
            ActivationKind::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            ActivationKind::Softplus => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = a.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    /// Activation threshold below which a unit counts as inactive when
    /// measuring sparsity: 0 for ReLU (exact zeros), 0.1 for the saturating
    /// kinds whose output never reaches zero.
    pub fn delta_min(self) -> f64 {
        match self {
            ActivationKind::ReLU => 0.0,
            ActivationKind::Sigmoid | ActivationKind::Softplus | ActivationKind::Tanh => 0.1,
        }
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ActivationKind::ReLU => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Tanh => "tanh",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relu" => Ok(ActivationKind::ReLU),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "softplus" => Ok(ActivationKind::Softplus),
            "tanh" => Ok(ActivationKind::Tanh),
            _ => Err(format!(
                "unknown activation {s:?}; expected relu, sigmoid, softplus or tanh"
            )),
        }
    }
}

fn sigmoid(a: f64) -> f64 {
    // Branch on sign so the exponential argument is always non-positive.
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let z = a.exp();
        z / (1.0 + z)
    }
}
