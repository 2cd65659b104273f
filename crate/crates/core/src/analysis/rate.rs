//! Monte-Carlo estimate of the second moment of the disagreement vector and
//! comparison with the bound `ρ C / (1 − √ρ)²` on `γ_n^{-2} E|θ_⊥,n|²`.

use rand::Rng;
use serde::Serialize;

use super::clt::median;
use super::AnalysisError;
use crate::engine::{run_replicas, run_trajectory, RunOptions, SamplingPlan, StackedState, StepSchedule, StepView};
use crate::gossip::{validate_scheme, GossipScheme, STOCHASTIC_TOL};
use crate::problems::ProblemModel;

#[derive(Debug, Clone)]
pub struct RateOptions {
    pub per_decade: u32,
    /// Agents start independently uniform in `θ★ ± init_half_width` (or
    /// around the origin when the problem has no designated equilibrium).
    pub init_half_width: f64,
    /// Slack of the bound in units of the standard error.
    pub slack_sigmas: f64,
    /// Number of largest recorded steps checked against the bound.
    pub tail_points: usize,
    /// The flatness window starts here.
    pub flat_from: u64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            per_decade: 10,
            init_half_width: 1.0,
            slack_sigmas: 3.0,
            tail_points: 5,
            flat_from: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub n_steps: u64,
    pub n_runs: u64,
    pub n_failed: u64,
    pub rho: f64,
    pub steps: Vec<u64>,
    /// `γ_n^{-2} Ê|θ_⊥,n|²` per recorded step.
    pub normalized_disagreement: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Median over replicas of `|θ_⊥,n|`.
    pub median_disagreement: Vec<f64>,
    /// `Ê|Y_⊥,n|²` per recorded step.
    pub mean_sq_observation_disagreement: Vec<f64>,
    /// Max of `Ê|Y_⊥,n|²` over the recorded steps in the second half of the run.
    pub c_estimate: f64,
    pub bound: f64,
    pub slack_sigmas: f64,
    pub bound_ok: bool,
    /// Last normalized value over the median on `[flat_from, n_steps]`.
    pub flatness_ratio: Option<f64>,
    pub flat: Option<bool>,
    pub degenerate: bool,
    pub passed: bool,
    pub notes: Vec<String>,
}

struct Trace {
    theta_perp_sq: Vec<f64>,
    y_perp_sq: Vec<f64>,
}

fn perp_sq(x: &[f64], n: usize, d: usize) -> f64 {
    let s = StackedState::new(x.to_vec(), n, d).expect("sizes come from the problem");
    let v = s.disagreement_norm();
    v * v
}

/// Runs `n_runs` replicas and records `|θ_⊥,n|²` and `|Y_⊥,n|²` at
/// logarithmically spaced steps.
///
/// Requires `ρ < 1` for the scheme at step 1.
pub fn disagreement_rate_check<P: ProblemModel + ?Sized>(
    problem: &P,
    scheme: &GossipScheme,
    schedule: &StepSchedule,
    n_steps: u64,
    n_runs: u64,
    root_seed: u64,
    options: &RateOptions,
) -> Result<MomentReport, AnalysisError> {
    let validation = validate_scheme(scheme, STOCHASTIC_TOL)?;
    if !validation.mixing {
        return Err(AnalysisError::Precondition(format!(
            "rho<1 required, got rho = {}",
            validation.rho
        )));
    }
    if scheme.node_count() != problem.n_agents() {
        return Err(AnalysisError::Argument(format!(
            "scheme has {} nodes but the problem has {} agents",
            scheme.node_count(),
            problem.n_agents()
        )));
    }
    if n_runs < 2 || n_steps == 0 {
        return Err(AnalysisError::Argument("need at least 2 runs and 1 step".into()));
    }
    let rho = validation.rho;
    let n = problem.n_agents();
    let d = problem.dim();
    let center = problem
        .equilibrium()
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; d]);
    let steps = SamplingPlan::LogSpaced {
        per_decade: options.per_decade,
    }
    .steps(n_steps);
    let run_opts = RunOptions {
        averaging: false,
        ..Default::default()
    };

    let results = run_replicas(n_runs, root_seed, |_, mut streams| {
        let mut theta = center.repeat(n);
        let w = options.init_half_width;
        if w > 0.0 {
            for t in &mut theta {
                *t += streams.init.random_range(-w..=w);
            }
        }
        let init = StackedState::new(theta, n, d)?;
        let mut trace = Trace {
            theta_perp_sq: Vec::new(),
            y_perp_sq: Vec::new(),
        };
        let mut cursor = 0;
        let mut observer = |view: &StepView<'_>| {
            if steps.get(cursor) == Some(&view.step) {
                cursor += 1;
                trace.theta_perp_sq.push(perp_sq(view.state.as_slice(), n, d));
                trace.y_perp_sq.push(perp_sq(view.observations, n, d));
            }
            Ok(())
        };
        run_trajectory(
            problem,
            scheme,
            schedule,
            n_steps,
            init,
            &mut streams,
            &run_opts,
            &mut observer,
        )?;
        Ok::<_, AnalysisError>(trace)
    });

    let traces: Vec<Trace> = results.into_iter().filter_map(Result::ok).collect();
    let n_failed = n_runs - traces.len() as u64;
    if traces.len() < 2 {
        return Err(AnalysisError::Precondition(format!(
            "{n_failed} of {n_runs} replicas failed"
        )));
    }
    let r = traces.len() as f64;

    let mut normalized_disagreement = Vec::with_capacity(steps.len());
    let mut standard_errors = Vec::with_capacity(steps.len());
    let mut median_disagreement = Vec::with_capacity(steps.len());
    let mut mean_sq_observation_disagreement = Vec::with_capacity(steps.len());
    for (k, &step) in steps.iter().enumerate() {
        let scale = schedule.gamma(step).powi(-2);
        let vals: Vec<f64> = traces.iter().map(|t| t.theta_perp_sq[k] * scale).collect();
        let mean = vals.iter().sum::<f64>() / r;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
        normalized_disagreement.push(mean);
        standard_errors.push((var / r).sqrt());
        let mut norms: Vec<f64> = traces.iter().map(|t| t.theta_perp_sq[k].sqrt()).collect();
        median_disagreement.push(median(&mut norms));
        mean_sq_observation_disagreement.push(traces.iter().map(|t| t.y_perp_sq[k]).sum::<f64>() / r);
    }

    let c_estimate = steps
        .iter()
        .zip(&mean_sq_observation_disagreement)
        .filter(|(&s, _)| 2 * s >= n_steps)
        .map(|(_, &c)| c)
        .fold(0.0, f64::max);
    let bound = rho * c_estimate / (1.0 - rho.sqrt()).powi(2);

    let tail_start = steps.len().saturating_sub(options.tail_points);
    let bound_ok = (tail_start..steps.len())
        .all(|k| normalized_disagreement[k] <= bound + options.slack_sigmas * standard_errors[k]);

    let mut window: Vec<f64> = steps
        .iter()
        .zip(&normalized_disagreement)
        .filter(|(&s, _)| s >= options.flat_from)
        .map(|(_, &v)| v)
        .collect();
    let (flatness_ratio, flat) = if window.len() >= 2 {
        let last = *window.last().expect("non-empty");
        let med = median(&mut window);
        let ratio = last / med;
        (Some(ratio), Some(last <= 2.0 * med))
    } else {
        (None, None)
    };

    let degenerate = rho <= STOCHASTIC_TOL;
    let mut notes = Vec::new();
    if degenerate {
        notes.push(
            "rho = 0: the bound vanishes and the normalized disagreement is governed by within-step noise".into(),
        );
    }
    let passed = if degenerate {
        flat.unwrap_or(true)
    } else {
        bound_ok && flat.unwrap_or(true)
    };

    Ok(MomentReport {
        n_steps,
        n_runs,
        n_failed,
        rho,
        steps,
        normalized_disagreement,
        standard_errors,
        median_disagreement,
        mean_sq_observation_disagreement,
        c_estimate,
        bound,
        slack_sigmas: options.slack_sigmas,
        bound_ok,
        flatness_ratio,
        flat,
        degenerate,
        passed,
        notes,
    })
}
