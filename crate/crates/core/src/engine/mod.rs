//! The distributed stochastic-approximation recursion
//!
//! ```text
//! θ_n = (W_n ⊗ I_d)(θ_{n−1} + γ_n Y_n),        Y_n ~ μ_{θ_{n−1}}
//! θ̄_n = θ̄_{n−1} + (θ_n − θ̄_{n−1}) / n
//! ```
//!
//! together with the consensus / disagreement split `θ = 𝟙 ⊗ ⟨θ⟩ + θ_⊥`.

mod record;
mod run;
mod schedule;
mod state;

use thiserror::Error;

pub use record::{RecordOptions, RecordRow, RunRecord, RunRecorder, SamplingPlan};
pub use run::{
    iterate, iterate_with_gain, run_replicas, run_trajectory, Gain, Observer, RunOptions, RunOutcome, StepView,
    DIVERGENCE_THRESHOLD, GAIN_CONDITION_LIMIT,
};
pub use schedule::{StepRegime, StepSchedule};
pub use state::{consensus_mean, disagreement, StackedState};

use crate::gossip::GossipError;
use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("trajectory diverged at step {step} (|theta| = {norm:e})")]
    Diverged { step: u64, norm: f64 },
    #[error(transparent)]
    Gossip(#[from] GossipError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl EngineError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, EngineError::Diverged { .. })
    }
}
