//! Random communication matrices: graphs, gossip schemes, and the exact
//! quantities that decide whether a scheme mixes (mean column sums and the
//! contraction coefficient ρ).

mod graph;
mod matrix;
mod scheme;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

pub use graph::{connectivity_radius, NetworkGraph};
pub use matrix::{GossipMatrix, STOCHASTIC_TOL};
pub use scheme::{vanishing_probability, GossipScheme, SchemeKind};

use crate::linalg;

#[derive(Debug, Error)]
pub enum GossipError {
    #[error("invalid gossip configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid gossip matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: expected {expected} nodes, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Exact `E(W_n)` by enumerating the activation distribution.
pub fn expected_matrix(scheme: &GossipScheme, step: u64) -> Result<DMatrix<f64>, GossipError> {
    let n = scheme.node_count();
    let support = scheme.support(step)?;
    Ok(support
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, (p, w)| acc + w.as_matrix() * *p))
}

/// `Wᵀ K W` with `K = I − 𝟙𝟙ᵀ/N`, computed as `WᵀW − (𝟙ᵀW)ᵀ(𝟙ᵀW)/N`.
pub fn disagreement_gram(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows() as f64;
    let col_sums = w.row_sum(); // 1 × N row vector 𝟙ᵀW
    w.tr_mul(w) - col_sums.transpose() * &col_sums / n
}

/// `E(Wᵀ K W)` over the exact support.
pub fn expected_disagreement_gram(scheme: &GossipScheme, step: u64) -> Result<DMatrix<f64>, GossipError> {
    let n = scheme.node_count();
    let support = scheme.support(step)?;
    Ok(support.iter().fold(DMatrix::zeros(n, n), |acc, (p, w)| {
        acc + disagreement_gram(w.as_matrix()) * *p
    }))
}

/// Contraction coefficient ρ_n: spectral norm (largest eigenvalue, the matrix
/// being symmetric PSD) of `E(W_nᵀ K W_n)`, clamped to `[0, 1]`.
pub fn contraction_coefficient(scheme: &GossipScheme, step: u64) -> Result<f64, GossipError> {
    let m = expected_disagreement_gram(scheme, step)?;
    Ok(linalg::max_symmetric_eigenvalue(&m).clamp(0.0, 1.0))
}

/// Outcome of checking a scheme against the row/column stochasticity and
/// mixing conditions. Violations are recorded here, never raised.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub step: u64,
    pub support_size: usize,
    pub tolerance: f64,
    pub entries_in_unit_interval: bool,
    pub max_row_sum_error: f64,
    pub row_stochastic: bool,
    pub max_expected_column_sum_error: f64,
    pub column_stochastic_in_mean: bool,
    pub doubly_stochastic: bool,
    pub rho: f64,
    pub mixing: bool,
    pub connected: bool,
}

impl ValidationReport {
    /// Row stochastic, column stochastic in mean, and ρ < 1.
    pub fn satisfies_mixing_conditions(&self) -> bool {
        self.entries_in_unit_interval && self.row_stochastic && self.column_stochastic_in_mean && self.mixing
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.entries_in_unit_interval {
            out.push("gossip matrix entries outside [0, 1]".to_string());
        }
        if !self.row_stochastic {
            out.push(format!("row sums deviate from 1 by {:e}", self.max_row_sum_error));
        }
        if !self.column_stochastic_in_mean {
            out.push(format!(
                "E(W) column sums deviate from 1 by {:e}",
                self.max_expected_column_sum_error
            ));
        }
        if !self.mixing {
            out.push(format!(
                "gossip does not contract disagreement: rho = {} (need rho < 1)",
                self.rho
            ));
        }
        out
    }
}

pub fn validate_scheme(scheme: &GossipScheme, tolerance: f64) -> Result<ValidationReport, GossipError> {
    validate_scheme_at(scheme, 1, tolerance)
}

/// [`validate_scheme`] at an arbitrary step (relevant for vanishing-rate schemes).
pub fn validate_scheme_at(scheme: &GossipScheme, step: u64, tolerance: f64) -> Result<ValidationReport, GossipError> {
    let support = scheme.support(step)?;
    let n = scheme.node_count();
    let mut expected = DMatrix::zeros(n, n);
    let mut gram = DMatrix::zeros(n, n);
    let mut max_row = 0.0_f64;
    let mut in_unit = true;
    let mut doubly = true;
    for (p, w) in &support {
        let m = w.as_matrix();
        in_unit &= m.iter().all(|x| (0.0..=1.0).contains(x));
        max_row = max_row.max(w.row_sum_error());
        doubly &= w.column_sum_error() <= tolerance;
        expected += m * *p;
        gram += disagreement_gram(m) * *p;
    }
    let col_err = matrix::column_sum_error(&expected);
    let rho = linalg::max_symmetric_eigenvalue(&gram).clamp(0.0, 1.0);
    Ok(ValidationReport {
        step,
        support_size: support.len(),
        tolerance,
        entries_in_unit_interval: in_unit,
        max_row_sum_error: max_row,
        row_stochastic: max_row <= tolerance,
        max_expected_column_sum_error: col_err,
        column_stochastic_in_mean: col_err <= tolerance,
        doubly_stochastic: doubly && max_row <= tolerance,
        rho,
        mixing: rho < 1.0 - tolerance,
        connected: scheme.graph().is_connected(),
    })
}

/// Parameter check for a vanishing communication rate `1 − ρ_n = a / n^η`
/// combined with steps `γ_n = γ_0 / n^ξ`.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub eta: f64,
    pub xi: f64,
    pub alpha: f64,
    /// `0 ≤ η < ξ − 1/2 ≤ 1/2`.
    pub feasible: bool,
    /// `n^α γ_n → 0`, i.e. `α < ξ`.
    pub step_decay_dominates: bool,
    /// `n^{1+α} γ_n → ∞`, i.e. `1 + α > ξ`.
    pub step_not_too_small: bool,
    /// `liminf (1 − ρ_n) / (n^α γ_n) > 0`, i.e. `ξ − α − η ≥ 0`.
    pub communication_keeps_up: bool,
    /// An exponent in `(1/2, ξ − η]` satisfying all three limits, when one exists.
    pub witness_alpha: Option<f64>,
    pub limits: Vec<String>,
}

pub fn vanishing_rate_feasibility(eta: f64, xi: f64, alpha: f64) -> Result<FeasibilityReport, GossipError> {
    if !(alpha > 0.5) {
        return Err(GossipError::Argument(format!("alpha must exceed 1/2, got {alpha}")));
    }
    if !(eta >= 0.0) {
        return Err(GossipError::Argument(format!("eta must be non-negative, got {eta}")));
    }
    if !(xi > 0.0) {
        return Err(GossipError::Argument(format!("xi must be positive, got {xi}")));
    }
    let feasible = eta < xi - 0.5 && xi - 0.5 <= 0.5;
    let step_decay_dominates = alpha < xi;
    let step_not_too_small = 1.0 + alpha > xi;
    let communication_keeps_up = xi - alpha - eta >= 0.0;
    let witness_alpha = feasible.then_some(0.5 + 0.5 * (xi - eta - 0.5));
    let limits = vec![
        format!(
            "n^{alpha} * gamma_n ~ n^({}) -> {}",
            alpha - xi,
            if step_decay_dominates { "0" } else { "not 0" }
        ),
        format!(
            "n^(1+{alpha}) * gamma_n ~ n^({}) -> {}",
            1.0 + alpha - xi,
            if step_not_too_small { "infinity" } else { "finite" }
        ),
        format!(
            "(1 - rho_n) / (n^{alpha} * gamma_n) ~ n^({}) : liminf {}",
            xi - alpha - eta,
            if communication_keeps_up { "> 0" } else { "= 0" }
        ),
    ];
    Ok(FeasibilityReport {
        eta,
        xi,
        alpha,
        feasible,
        step_decay_dominates,
        step_not_too_small,
        communication_keeps_up,
        witness_alpha,
        limits,
    })
}
