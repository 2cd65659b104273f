use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{EngineError, StackedState, StepSchedule};
use crate::gossip::{GossipMatrix, GossipScheme};
use crate::linalg;
use crate::problems::ProblemModel;
use crate::seeding::RunStreams;

/// A run is declared divergent once any coordinate is non-finite or
/// `|θ_n|` exceeds this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Gains whose 2-norm condition number reaches this are treated as singular.
pub const GAIN_CONDITION_LIMIT: f64 = 1e12;

/// Invertible `d × d` matrix applied to every agent's increment.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain(DMatrix<f64>);

impl Gain {
    pub fn new(m: DMatrix<f64>) -> Result<Self, EngineError> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(EngineError::Argument(format!(
                "gain must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let cond = linalg::condition_number(&m);
        if !(cond < GAIN_CONDITION_LIMIT) {
            return Err(EngineError::Argument(format!(
                "gain matrix is singular (condition number {cond:e})"
            )));
        }
        Ok(Self(m))
    }

    pub fn scalar(g: f64) -> Result<Self, EngineError> {
        Self::new(DMatrix::from_element(1, 1, g))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// `(W ⊗ I_d)(θ + γY)`, computed block by block.
pub fn iterate(state: &StackedState, w: &GossipMatrix, y: &[f64], gamma: f64) -> Result<StackedState, EngineError> {
    step_impl(state, w, y, gamma, None)
}

/// [`iterate`] with every agent's increment replaced by `γ Γ Y_i`.
pub fn iterate_with_gain(
    state: &StackedState,
    w: &GossipMatrix,
    y: &[f64],
    gamma: f64,
    gain: &Gain,
) -> Result<StackedState, EngineError> {
    step_impl(state, w, y, gamma, Some(gain))
}

fn step_impl(
    state: &StackedState,
    w: &GossipMatrix,
    y: &[f64],
    gamma: f64,
    gain: Option<&Gain>,
) -> Result<StackedState, EngineError> {
    check_shapes(state, w, y, gain)?;
    let mut local = state.as_slice().to_vec();
    local_step(&mut local, y, gamma, gain, state.dim());
    let mut out = vec![0.0; local.len()];
    mix(w, &local, &mut out, state.dim());
    StackedState::new(out, state.n_agents(), state.dim())
}

fn check_shapes(state: &StackedState, w: &GossipMatrix, y: &[f64], gain: Option<&Gain>) -> Result<(), EngineError> {
    if w.size() != state.n_agents() {
        return Err(EngineError::Dimension {
            expected: state.n_agents(),
            got: w.size(),
        });
    }
    if y.len() != state.as_slice().len() {
        return Err(EngineError::Dimension {
            expected: state.as_slice().len(),
            got: y.len(),
        });
    }
    if let Some(g) = gain {
        if g.dim() != state.dim() {
            return Err(EngineError::Dimension {
                expected: state.dim(),
                got: g.dim(),
            });
        }
    }
    Ok(())
}

/// `θ ← θ + γ Y` (or `θ_i ← θ_i + γ Γ Y_i`).
fn local_step(theta: &mut [f64], y: &[f64], gamma: f64, gain: Option<&Gain>, dim: usize) {
    match gain {
        None => {
            for (t, v) in theta.iter_mut().zip(y) {
                *t += gamma * v;
            }
        }
        Some(g) => {
            let m = g.matrix();
            for (t, v) in theta.chunks_exact_mut(dim).zip(y.chunks_exact(dim)) {
                for r in 0..dim {
                    let inc: f64 = (0..dim).map(|c| m[(r, c)] * v[c]).sum();
                    t[r] += gamma * inc;
                }
            }
        }
    }
}

/// `out = (W ⊗ I_d) x` without forming the Kronecker product.
fn mix(w: &GossipMatrix, x: &[f64], out: &mut [f64], dim: usize) {
    out.fill(0.0);
    let m = w.as_matrix();
    // column-major storage: walk columns, skip the (many) zero entries
    for (j, col) in m.column_iter().enumerate() {
        let src = &x[j * dim..(j + 1) * dim];
        for (i, &wij) in col.iter().enumerate() {
            if wij != 0.0 {
                let dst = &mut out[i * dim..(i + 1) * dim];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += wij * s;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub averaging: bool,
    pub gain: Option<Gain>,
    pub divergence_threshold: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            averaging: false,
            gain: None,
            divergence_threshold: DIVERGENCE_THRESHOLD,
        }
    }
}

/// What an [`Observer`] sees after step `step` has been applied.
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: u64,
    pub gamma: f64,
    pub state: &'a StackedState,
    pub average: Option<&'a StackedState>,
    /// The increments `Y_step` used in this step.
    pub observations: &'a [f64],
}

/// Per-step hook used to collect diagnostics without storing trajectories.
pub trait Observer {
    fn observe(&mut self, view: &StepView<'_>) -> Result<(), EngineError>;
}

impl Observer for () {
    fn observe(&mut self, _: &StepView<'_>) -> Result<(), EngineError> {
        Ok(())
    }
}

impl<F: FnMut(&StepView<'_>) -> Result<(), EngineError>> Observer for F {
    fn observe(&mut self, view: &StepView<'_>) -> Result<(), EngineError> {
        self(view)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: StackedState,
    pub final_average: Option<StackedState>,
    pub steps: u64,
}

/// Runs `n_steps` iterations from `init`. Per step: draw `Y_n` from the
/// observation stream, draw `W_n` from the gossip stream, apply the local step
/// and the gossip step, update the running average, notify `observer`.
pub fn run_trajectory<P, O>(
    problem: &P,
    scheme: &GossipScheme,
    schedule: &StepSchedule,
    n_steps: u64,
    init: StackedState,
    streams: &mut RunStreams,
    options: &RunOptions,
    observer: &mut O,
) -> Result<RunOutcome, EngineError>
where
    P: ProblemModel + ?Sized,
    O: Observer + ?Sized,
{
    let n = problem.n_agents();
    let d = problem.dim();
    if init.n_agents() != n || init.dim() != d {
        return Err(EngineError::Dimension {
            expected: n * d,
            got: init.as_slice().len(),
        });
    }
    if scheme.node_count() != n {
        return Err(EngineError::Dimension {
            expected: n,
            got: scheme.node_count(),
        });
    }
    if let Some(g) = &options.gain {
        if g.dim() != d {
            return Err(EngineError::Dimension {
                expected: d,
                got: g.dim(),
            });
        }
    }

    let mut state = init;
    let mut average = options.averaging.then(|| state.clone());
    let mut y = vec![0.0; n * d];
    let mut local = vec![0.0; n * d];
    let mut w = GossipMatrix::identity(n);

    for step in 1..=n_steps {
        let gamma = schedule.gamma(step);
        problem.sample_observations(state.as_slice(), &mut streams.observations, &mut y)?;
        scheme.sample_into(step, &mut streams.gossip, &mut w)?;

        local.copy_from_slice(state.as_slice());
        local_step(&mut local, &y, gamma, options.gain.as_ref(), d);
        mix(&w, &local, state.as_mut_slice(), d);

        let norm = state.norm();
        if !norm.is_finite() || norm > options.divergence_threshold {
            return Err(EngineError::Diverged { step, norm });
        }

        if let Some(avg) = average.as_mut() {
            let inv = 1.0 / step as f64;
            for (a, t) in avg.as_mut_slice().iter_mut().zip(state.as_slice()) {
                *a += (t - *a) * inv;
            }
        }

        observer.observe(&StepView {
            step,
            gamma,
            state: &state,
            average: average.as_ref(),
            observations: &y,
        })?;
    }

    Ok(RunOutcome {
        final_state: state,
        final_average: average,
        steps: n_steps,
    })
}

/// Runs `job(replica, streams)` for every replica in parallel on the current
/// rayon pool. Results come back in replica order and do not depend on the
/// number of threads.
pub fn run_replicas<T, F>(n_runs: u64, root_seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, RunStreams) -> T + Sync + Send,
{
    (0..n_runs)
        .into_par_iter()
        .map(|r| job(r, RunStreams::for_replica(root_seed, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::NetworkGraph;
    use crate::problems::QuadraticGaussianProblem;

    fn st(v: &[f64], n: usize, d: usize) -> StackedState {
        StackedState::new(v.to_vec(), n, d).unwrap()
    }

    #[test]
    fn identity_gossip_local_step() {
        let out = iterate(&StackedState::zeros(3, 1), &GossipMatrix::identity(3), &[1.0; 3], 0.1).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn one_step_averaging() {
        let w = GossipMatrix::pairwise(2, 0, 1);
        let out = iterate(&st(&[0.0, 4.0], 2, 1), &w, &[0.0; 2], 0.3).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn pairwise_edge_average() {
        let w = GossipMatrix::pairwise(3, 0, 1);
        let out = iterate(&st(&[0.0, 2.0, 6.0], 3, 1), &w, &[0.0; 3], 0.5).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 1.0, 6.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let s = StackedState::zeros(3, 1);
        assert!(iterate(&s, &GossipMatrix::identity(2), &[0.0; 3], 0.1).is_err());
        assert!(iterate(&s, &GossipMatrix::identity(3), &[0.0; 2], 0.1).is_err());
    }

    #[test]
    fn gain_scales_increment() {
        let g = Gain::scalar(2.0).unwrap();
        let out = iterate_with_gain(
            &StackedState::zeros(2, 1),
            &GossipMatrix::identity(2),
            &[1.0; 2],
            0.1,
            &g,
        )
        .unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let id = Gain::new(DMatrix::identity(2, 2)).unwrap();
        let s = st(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        let w = GossipMatrix::pairwise(2, 0, 1);
        let y = [0.5, -1.0, 2.0, 0.25];
        assert_eq!(
            iterate_with_gain(&s, &w, &y, 0.2, &id).unwrap(),
            iterate(&s, &w, &y, 0.2).unwrap()
        );
    }

    #[test]
    fn singular_gain_rejected() {
        assert!(Gain::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).is_err());
        assert!(Gain::scalar(0.0).is_err());
    }

    #[test]
    fn full_step_reaches_root() {
        // N = 1, no noise, gamma_1 = 1: θ_1 = θ_0 + (θ★ − θ_0) = θ★.
        let p = QuadraticGaussianProblem::scalar(1.0, 3.0, 0.0, 1).unwrap();
        let scheme = GossipScheme::identity(1).unwrap();
        let schedule = StepSchedule::new(1.0, 1.0).unwrap();
        let mut streams = RunStreams::for_replica(0, 0);
        let out = run_trajectory(
            &p,
            &scheme,
            &schedule,
            1,
            st(&[-5.0], 1, 1),
            &mut streams,
            &RunOptions::default(),
            &mut (),
        )
        .unwrap();
        assert_eq!(out.final_state.as_slice(), &[3.0]);
    }

    #[test]
    fn running_average_matches_direct_mean() {
        let p = QuadraticGaussianProblem::scalar(1.0, 0.0, 1.0, 3).unwrap();
        let scheme = GossipScheme::pairwise(NetworkGraph::complete(3).unwrap()).unwrap();
        let schedule = StepSchedule::new(0.5, 0.7).unwrap();
        let mut sum = vec![0.0; 3];
        let mut collect = |v: &StepView<'_>| {
            for (s, t) in sum.iter_mut().zip(v.state.as_slice()) {
                *s += t;
            }
            Ok(())
        };
        let opts = RunOptions {
            averaging: true,
            ..Default::default()
        };
        let mut streams = RunStreams::for_replica(5, 2);
        let out = run_trajectory(
            &p,
            &scheme,
            &schedule,
            1000,
            st(&[1.0, 2.0, 3.0], 3, 1),
            &mut streams,
            &opts,
            &mut collect,
        )
        .unwrap();
        let avg = out.final_average.unwrap();
        for (a, s) in avg.as_slice().iter().zip(&sum) {
            assert!((a - s / 1000.0).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_is_reported() {
        // gamma_n * a far above 2: the deterministic recursion explodes geometrically.
        let p = QuadraticGaussianProblem::scalar(1.0, 0.0, 0.0, 1).unwrap();
        let scheme = GossipScheme::identity(1).unwrap();
        let schedule = StepSchedule::new(1e4, 0.51).unwrap();
        let mut streams = RunStreams::for_replica(0, 0);
        let err = run_trajectory(
            &p,
            &scheme,
            &schedule,
            10_000,
            st(&[1.0], 1, 1),
            &mut streams,
            &RunOptions::default(),
            &mut (),
        )
        .unwrap_err();
        assert!(err.is_divergence(), "{err}");
    }
}
