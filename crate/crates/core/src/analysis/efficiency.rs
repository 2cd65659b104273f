//! Departure from asymptotic efficiency of the critical-step recursion on the
//! localization problem.
//!
//! With `∇h(θ★) = −F/N` and `Υ = F/N²`, the averaged iterates reach the
//! Cramér-Rao covariance `F⁻¹`, while the critical step `γ★/n` gives
//!
//! ```text
//! Σ = γ★² N⁻² F (2γ★N⁻¹F − I)⁻¹
//! Σ − F⁻¹ = F⁻¹ (2γ★N⁻¹F − I)⁻¹ (γ★N⁻¹F − I)²
//! ```

use nalgebra::DMatrix;
use serde::Serialize;

use super::lyapunov::{solve_lyapunov_critical, PSD_TOL, SINGULAR_CONDITION};
use super::AnalysisError;
use crate::linalg::{self, serialize_matrix};
use crate::problems::{LocalizationProblem, ProblemModel};

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub n_agents: usize,
    pub gamma_star: f64,
    /// `N / (2 λ_min(F))`; `γ★` must exceed it.
    pub gamma_star_min: f64,
    #[serde(serialize_with = "serialize_matrix")]
    pub fisher: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub fisher_inverse: DMatrix<f64>,
    /// Covariance of `√n(θ_n − θ★)` from the Lyapunov solver.
    #[serde(serialize_with = "serialize_matrix")]
    pub sigma: DMatrix<f64>,
    /// The same covariance from the closed form.
    #[serde(serialize_with = "serialize_matrix")]
    pub sigma_closed_form: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub difference: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub factorization: DMatrix<f64>,
    pub closed_form_error: f64,
    pub factorization_error: f64,
    pub min_eigenvalue: f64,
    pub psd: bool,
}

/// Efficiency gap for a Fisher matrix `F`, `N` agents and step constant `γ★`.
pub fn efficiency_gap(
    fisher: &DMatrix<f64>,
    n_agents: usize,
    gamma_star: f64,
) -> Result<EfficiencyReport, AnalysisError> {
    let d = fisher.nrows();
    if d == 0 || fisher.ncols() != d {
        return Err(AnalysisError::Argument(
            "Fisher matrix must be square and non-empty".into(),
        ));
    }
    if n_agents == 0 {
        return Err(AnalysisError::Argument("need at least one agent".into()));
    }
    if !(gamma_star > 0.0 && gamma_star.is_finite()) {
        return Err(AnalysisError::Argument(format!(
            "gamma_star must be positive, got {gamma_star}"
        )));
    }
    let f = linalg::symmetrize(fisher);
    let lambda_min = linalg::min_symmetric_eigenvalue(&f);
    if !(lambda_min > 0.0) || !(linalg::condition_number(&f) < SINGULAR_CONDITION) {
        return Err(AnalysisError::Argument("Fisher matrix must be full rank".into()));
    }
    let nf = n_agents as f64;
    let gamma_star_min = nf / (2.0 * lambda_min);
    if gamma_star <= gamma_star_min {
        return Err(AnalysisError::Argument(format!(
            "gamma_star = {gamma_star} must exceed N / (2 lambda_min(F)) = {gamma_star_min}"
        )));
    }

    let eye = DMatrix::<f64>::identity(d, d);
    let fisher_inverse = linalg::symmetrize(
        &f.clone()
            .try_inverse()
            .ok_or_else(|| AnalysisError::Singular("Fisher matrix".into()))?,
    );
    let h = &f * (-1.0 / nf);
    let upsilon = &f / (nf * nf);
    let sigma = solve_lyapunov_critical(&h, &upsilon, gamma_star)?;

    let scaled = &f * (gamma_star / nf);
    let shifted_inv = (&scaled * 2.0 - &eye)
        .try_inverse()
        .ok_or_else(|| AnalysisError::Singular("2 gamma_star F / N - I".into()))?;
    let sigma_closed_form = linalg::symmetrize(&(&f * (gamma_star * gamma_star / (nf * nf)) * &shifted_inv));
    let gap = &scaled - &eye;
    let factorization = linalg::symmetrize(&(&fisher_inverse * &shifted_inv * &gap * &gap));
    let difference = &sigma - &fisher_inverse;

    let closed_form_error = (&sigma - &sigma_closed_form).amax();
    let factorization_error = (&difference - &factorization).amax();
    let min_eigenvalue = linalg::min_symmetric_eigenvalue(&difference);
    Ok(EfficiencyReport {
        n_agents,
        gamma_star,
        gamma_star_min,
        fisher: f,
        fisher_inverse,
        sigma,
        sigma_closed_form,
        difference,
        factorization,
        closed_form_error,
        factorization_error,
        min_eigenvalue,
        psd: min_eigenvalue >= -PSD_TOL,
    })
}

/// [`efficiency_gap`] for the Fisher information of `problem` at its source.
pub fn efficiency_report(problem: &LocalizationProblem, gamma_star: f64) -> Result<EfficiencyReport, AnalysisError> {
    let source = problem.source();
    let f = problem.fisher_information(&source)?;
    efficiency_gap(&f, problem.n_agents(), gamma_star)
}
