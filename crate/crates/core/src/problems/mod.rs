//! Observation models `μ_θ`: how each agent's increment `Y_{n,i}` is drawn
//! given its current estimate, together with the mean field `h`, a Lyapunov
//! function `V`, and the local data needed by the central limit theorems.

mod localization;
mod quadratic;

use nalgebra::DMatrix;
use rand::RngCore;
use thiserror::Error;

pub use localization::{LocalizationProblem, SensorLayout, DEFAULT_OBS_VARIANCE, SIGNAL_GAIN};
pub use quadratic::QuadraticGaussianProblem;

/// Minimum distance between an evaluation point and a sensor.
pub const SINGULARITY_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("agent {agent} is within {distance:e} of sensor {sensor}")]
    Singularity { agent: usize, sensor: usize, distance: f64 },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

/// Local linearization at the equilibrium: the Jacobian `∇h(θ★)` and the
/// covariance `Υ` of the averaged increment `⟨Y⟩` at `𝟙 ⊗ θ★`.
#[derive(Debug, Clone, PartialEq)]
pub struct CltData {
    pub jacobian: DMatrix<f64>,
    pub upsilon: DMatrix<f64>,
}

/// A family of observation laws indexed by the stacked state.
///
/// Implementations have product structure: agent `i`'s increment depends only
/// on agent `i`'s block of `θ`.
pub trait ProblemModel: Send + Sync {
    fn dim(&self) -> usize;

    fn n_agents(&self) -> usize;

    /// Draws `Y ~ μ_θ` into `out` (length `dN`).
    fn sample_observations(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ProblemError>;

    /// `h(θ) = ∫ ⟨y⟩ μ_{𝟙⊗θ}(dy)` for `θ ∈ R^d`.
    fn mean_field(&self, theta: &[f64]) -> Result<Vec<f64>, ProblemError>;

    fn lyapunov(&self, theta: &[f64]) -> Result<f64, ProblemError>;

    fn equilibrium(&self) -> Option<&[f64]>;

    fn clt_data(&self) -> Result<CltData, ProblemError>;

    /// Planar positions attached to agents, if the model has any.
    fn agent_positions(&self) -> Option<&[[f64; 2]]> {
        None
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), ProblemError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProblemError::Dimension { expected, got })
    }
}

/// Central finite-difference Jacobian of `f: R^d → R^d`.
pub fn finite_difference_jacobian<F>(f: F, at: &[f64], step: f64) -> Result<DMatrix<f64>, ProblemError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ProblemError>,
{
    let d = at.len();
    let mut jac = DMatrix::zeros(d, d);
    let mut x = at.to_vec();
    for j in 0..d {
        x[j] = at[j] + step;
        let plus = f(&x)?;
        x[j] = at[j] - step;
        let minus = f(&x)?;
        x[j] = at[j];
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Central finite-difference gradient of a scalar function.
pub fn finite_difference_gradient<F>(f: F, at: &[f64], step: f64) -> Result<Vec<f64>, ProblemError>
where
    F: Fn(&[f64]) -> Result<f64, ProblemError>,
{
    let mut x = at.to_vec();
    (0..at.len())
        .map(|j| {
            x[j] = at[j] + step;
            let plus = f(&x)?;
            x[j] = at[j] - step;
            let minus = f(&x)?;
            x[j] = at[j];
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}
