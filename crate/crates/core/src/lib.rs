//! Distributed stochastic approximation over randomized gossip networks.
//!
//! Each of `N` agents holds an estimate in `R^d`. At every step the agents
//! take a local stochastic-approximation step with their own observation and
//! then mix their temporary estimates through a random row-stochastic gossip
//! matrix `W_n`:
//!
//! ```text
//! θ_n = (W_n ⊗ I_d) (θ_{n-1} + γ_n Y_n)
//! ```
//!
//! The crate is organized as
//!
//! - [`gossip`]: graphs, gossip schemes, exact `E(W_n)` and contraction coefficient ρ;
//! - [`engine`]: stacked states, step schedules, the recursion and its Polyak average;
//! - [`problems`]: observation models (a linear-Gaussian test problem and
//!   source localization by a sensor network);
//! - [`analysis`]: Lyapunov-equation solvers, asymptotic covariances and the
//!   Monte-Carlo checks that compare them with simulation;
//! - [`seeding`]: the deterministic split of a root seed into per-replica streams.
//!
//! The `book/` directory at the repository root walks through the concepts
//! with runnable snippets; those snippets are compiled as doctests of this crate.

pub mod analysis;
pub mod engine;
pub mod gossip;
pub mod linalg;
pub mod problems;
pub mod seeding;

#[cfg(doctest)]
mod book;
