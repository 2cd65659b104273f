//! Asymptotic covariances and the Monte-Carlo checks built on them.
//!
//! - [`lyapunov`]: Lyapunov solvers for the subcritical, critical and averaged
//!   regimes, and the optimal gain;
//! - [`clt`]: predicted and empirical covariances of the normalized errors;
//! - [`rate`]: second moment of the disagreement vector;
//! - [`efficiency`]: the gap between the critical-step covariance and `F⁻¹`.

pub mod clt;
pub mod covariance;
pub mod efficiency;
pub mod lyapunov;
pub mod rate;

use thiserror::Error;

pub use clt::{
    clt_check, init_near, predict_clt, write_component_csv, CltOptions, CltPrediction, CltReport, CltSample,
};
pub use covariance::{empirical_covariance, CovarianceEstimate};
pub use efficiency::{efficiency_gap, efficiency_report, EfficiencyReport};
pub use lyapunov::{
    averaged_covariance, critical_covariance_with_gain, lyapunov_residual, optimal_gain, solve_lyapunov,
    solve_lyapunov_critical, OptimalGain, PSD_TOL,
};
pub use rate::{disagreement_rate_check, MomentReport, RateOptions};

use crate::engine::EngineError;
use crate::gossip::GossipError;
use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("drift matrix is not Hurwitz (spectral abscissa {0})")]
    NotHurwitz(f64),
    #[error("gamma_star = {gamma_star} must exceed {required} for the critical regime")]
    StabilityMargin { gamma_star: f64, required: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Gossip(#[from] GossipError),
}
