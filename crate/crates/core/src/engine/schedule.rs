use serde::Serialize;

use super::EngineError;

/// How the step sizes decay relative to themselves, which selects the form
/// of the asymptotic covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRegime {
    /// `log(γ_k / γ_{k+1}) = o(γ_k)`: polynomial decay slower than `1/n`.
    Subcritical,
    /// `log(γ_k / γ_{k+1}) ∼ γ_k / γ★`: `γ_n = γ★ / n`.
    Critical { gamma_star: f64 },
}

/// `γ_n = γ_0 / n^ξ` with `ξ ∈ (1/2, 1]`, so that `Σγ_n = ∞` and `Σγ_n² < ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSchedule {
    gamma0: f64,
    xi: f64,
}

impl StepSchedule {
    pub fn new(gamma0: f64, xi: f64) -> Result<Self, EngineError> {
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(EngineError::Argument(format!("gamma0 must be positive, got {gamma0}")));
        }
        if !(xi > 0.5 && xi <= 1.0) {
            return Err(EngineError::Argument(format!("xi must lie in (1/2, 1], got {xi}")));
        }
        Ok(Self { gamma0, xi })
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Step size at step `n ≥ 1`.
    pub fn gamma(&self, n: u64) -> f64 {
        if self.xi == 1.0 {
            self.gamma0 / n as f64
        } else {
            self.gamma0 / (n as f64).powf(self.xi)
        }
    }

    pub fn regime(&self) -> StepRegime {
        if self.xi == 1.0 {
            StepRegime::Critical {
                gamma_star: self.gamma0,
            }
        } else {
            StepRegime::Subcritical
        }
    }
}
