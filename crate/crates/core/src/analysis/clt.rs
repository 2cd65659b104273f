//! Central-limit predictions for the consensus and averaged iterates, and the
//! Monte-Carlo ensemble that checks them.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::covariance::{empirical_covariance, CovarianceEstimate};
use super::lyapunov::{averaged_covariance, optimal_gain, solve_lyapunov, solve_lyapunov_critical};
use super::AnalysisError;
use crate::engine::{run_replicas, run_trajectory, Gain, RunOptions, StackedState, StepRegime, StepSchedule};
use crate::gossip::{validate_scheme, GossipScheme, STOCHASTIC_TOL};
use crate::linalg::{self, serialize_matrix, serialize_opt_matrix};
use crate::problems::{CltData, ProblemModel};

/// Asymptotic covariances for one step regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltPrediction {
    pub regime: StepRegime,
    /// Covariance of `γ_n^{-1/2}(⟨θ_n⟩ − θ★)`.
    #[serde(serialize_with = "serialize_matrix")]
    pub sigma: DMatrix<f64>,
    /// Covariance of `√n(θ̄_n − θ★)`; only defined for the subcritical regime.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub sigma_avg: Option<DMatrix<f64>>,
    /// Critical regime only: `Γ★ = −γ★⁻¹ ∇h(θ★)⁻¹`.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub optimal_gain: Option<DMatrix<f64>>,
    /// Critical regime only: covariance reached with `Γ★`.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub sigma_star: Option<DMatrix<f64>>,
}

/// Predicted covariances from the local data `(∇h(θ★), Υ)`. The number of
/// agents and the gossip scheme do not enter: a network of `N` agents has the
/// same prediction as a single centralized agent with the same `(h, Υ)`.
///
/// With a gain `Γ` the drift becomes `Γ∇h(θ★)` and the noise `ΓΥΓᵀ`.
pub fn predict_clt(data: &CltData, regime: StepRegime, gain: Option<&Gain>) -> Result<CltPrediction, AnalysisError> {
    let (h, upsilon) = match gain {
        Some(g) => {
            let gm = g.matrix();
            (
                gm * &data.jacobian,
                linalg::symmetrize(&(gm * &data.upsilon * gm.transpose())),
            )
        }
        None => (data.jacobian.clone(), data.upsilon.clone()),
    };
    match regime {
        StepRegime::Subcritical => Ok(CltPrediction {
            regime,
            sigma: solve_lyapunov(&h, &upsilon)?,
            sigma_avg: Some(averaged_covariance(&h, &upsilon)?),
            optimal_gain: None,
            sigma_star: None,
        }),
        StepRegime::Critical { gamma_star } => {
            let opt = optimal_gain(&data.jacobian, &data.upsilon, gamma_star)?;
            Ok(CltPrediction {
                regime,
                sigma: solve_lyapunov_critical(&h, &upsilon, gamma_star)? / gamma_star,
                sigma_avg: None,
                optimal_gain: Some(opt.gain),
                sigma_star: Some(opt.sigma_star),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct CltOptions {
    pub averaging: bool,
    pub gain: Option<Gain>,
    /// Initial agents are drawn within `init_spread · √γ_1` of `θ★`.
    pub init_spread: f64,
    /// Maximum relative Frobenius error `|Σ̂ − Σ|_F / |Σ|_F`.
    pub relative_tolerance: f64,
    /// The synchrony median must stay below `synchrony_factor · √|Σ|_2`.
    pub synchrony_factor: f64,
    pub max_failure_fraction: f64,
}

impl Default for CltOptions {
    fn default() -> Self {
        Self {
            averaging: true,
            gain: None,
            init_spread: 0.1,
            relative_tolerance: 0.2,
            synchrony_factor: 0.1,
            max_failure_fraction: 0.01,
        }
    }
}

/// Final-step samples of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct CltSample {
    pub replica: u64,
    /// `γ_n^{-1/2}(⟨θ_n⟩ − θ★)`.
    pub normalized_error: Vec<f64>,
    /// `√n(⟨θ̄_n⟩ − θ★)`.
    pub normalized_avg_error: Option<Vec<f64>>,
    /// `max_i γ_n^{-1/2} |θ_{n,i} − ⟨θ_n⟩|`.
    pub synchrony: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub n_steps: u64,
    pub n_runs: u64,
    pub n_failed: u64,
    pub failure_fraction: f64,
    pub prediction: CltPrediction,
    pub empirical: CovarianceEstimate,
    pub relative_error: f64,
    pub frobenius_ratio: f64,
    pub empirical_avg: Option<CovarianceEstimate>,
    pub relative_error_avg: Option<f64>,
    pub frobenius_ratio_avg: Option<f64>,
    pub synchrony_median: f64,
    pub synchrony_threshold: f64,
    pub relative_tolerance: f64,
    pub covariance_ok: bool,
    pub averaged_ok: Option<bool>,
    pub synchrony_ok: bool,
    pub failures_ok: bool,
    pub passed: bool,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub samples: Vec<CltSample>,
}

impl CltReport {
    /// `run_id, comp_1, …, comp_d` rows of normalized errors.
    pub fn write_normalized_errors_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let rows: Vec<(u64, Vec<f64>)> = self
            .samples
            .iter()
            .map(|s| (s.replica, s.normalized_error.clone()))
            .collect();
        write_component_csv(&rows, out)
    }
}

pub fn write_component_csv<W: std::io::Write>(rows: &[(u64, Vec<f64>)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let d = rows.first().map_or(0, |r| r.1.len());
    let mut header = vec!["run_id".to_string()];
    header.extend((1..=d).map(|k| format!("comp_{k}")));
    w.write_record(&header)?;
    for (id, v) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(v.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `θ★ + U[−s, s]^{dN}` with `s = spread · √γ_1 / √d`, so every agent starts
/// within `spread · √γ_1` of the equilibrium.
pub fn init_near<R: Rng + ?Sized>(
    star: &[f64],
    n_agents: usize,
    spread: f64,
    gamma1: f64,
    rng: &mut R,
) -> StackedState {
    let d = star.len();
    let s = spread * gamma1.sqrt() / (d as f64).sqrt();
    let mut theta = star.repeat(n_agents);
    if s > 0.0 {
        for t in &mut theta {
            *t += rng.random_range(-s..=s);
        }
    }
    StackedState::new(theta, n_agents, d).expect("dimensions derived from the problem")
}

fn relative_frobenius(est: &DMatrix<f64>, pred: &DMatrix<f64>) -> (f64, f64) {
    let p = pred.norm();
    ((est - pred).norm() / p, est.norm() / p)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Runs `n_runs` replicas started near `θ★` and compares the final-step
/// normalized errors against [`predict_clt`].
///
/// Requires every gossip matrix in the support to be doubly stochastic.
pub fn clt_check<P: ProblemModel + ?Sized>(
    problem: &P,
    scheme: &GossipScheme,
    schedule: &StepSchedule,
    n_steps: u64,
    n_runs: u64,
    root_seed: u64,
    options: &CltOptions,
) -> Result<CltReport, AnalysisError> {
    let validation = validate_scheme(scheme, STOCHASTIC_TOL)?;
    if !validation.doubly_stochastic {
        return Err(AnalysisError::Precondition(
            "doubly stochastic gossip required (1ᵀW = 1ᵀ almost surely)".into(),
        ));
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
    let star = problem
        .equilibrium()
        .ok_or_else(|| AnalysisError::Precondition("problem has no designated equilibrium".into()))?
        .to_vec();
    let data = problem.clt_data()?;
    let prediction = predict_clt(&data, schedule.regime(), options.gain.as_ref())?;

    let run_opts = RunOptions {
        averaging: options.averaging,
        gain: options.gain.clone(),
        ..Default::default()
    };
    let gamma_n = schedule.gamma(n_steps);
    let scale = gamma_n.powf(-0.5);
    let sqrt_n = (n_steps as f64).sqrt();
    let n = problem.n_agents();

    let results = run_replicas(n_runs, root_seed, |replica, mut streams| {
        let init = init_near(&star, n, options.init_spread, schedule.gamma(1), &mut streams.init);
        let out = run_trajectory(
            problem,
            scheme,
            schedule,
            n_steps,
            init,
            &mut streams,
            &run_opts,
            &mut (),
        )?;
        let mean = out.final_state.consensus_mean();
        let normalized_error: Vec<f64> = mean.iter().zip(&star).map(|(m, s)| scale * (m - s)).collect();
        let normalized_avg_error = out.final_average.map(|avg| {
            avg.consensus_mean()
                .iter()
                .zip(&star)
                .map(|(m, s)| sqrt_n * (m - s))
                .collect()
        });
        let synchrony = out
            .final_state
            .agents()
            .map(|a| scale * a.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok::<_, AnalysisError>(CltSample {
            replica,
            normalized_error,
            normalized_avg_error,
            synchrony,
        })
    });

    let mut samples = Vec::new();
    let mut n_failed = 0u64;
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(_) => n_failed += 1,
        }
    }
    let failure_fraction = n_failed as f64 / n_runs as f64;
    if samples.len() < 2 {
        return Err(AnalysisError::Precondition(format!(
            "{n_failed} of {n_runs} replicas failed"
        )));
    }

    let errors: Vec<Vec<f64>> = samples.iter().map(|s| s.normalized_error.clone()).collect();
    let empirical = empirical_covariance(&errors)?;
    let (relative_error, frobenius_ratio) = relative_frobenius(&empirical.cov, &prediction.sigma);

    let (empirical_avg, relative_error_avg, frobenius_ratio_avg) = match &prediction.sigma_avg {
        Some(pred) if options.averaging => {
            let avg: Vec<Vec<f64>> = samples.iter().filter_map(|s| s.normalized_avg_error.clone()).collect();
            let est = empirical_covariance(&avg)?;
            let (e, r) = relative_frobenius(&est.cov, pred);
            (Some(est), Some(e), Some(r))
        }
        _ => (None, None, None),
    };

    let mut sync: Vec<f64> = samples.iter().map(|s| s.synchrony).collect();
    let synchrony_median = median(&mut sync);
    let synchrony_threshold = options.synchrony_factor * linalg::max_symmetric_eigenvalue(&prediction.sigma).sqrt();

    let covariance_ok = relative_error <= options.relative_tolerance;
    let averaged_ok = relative_error_avg.map(|e| e <= options.relative_tolerance);
    let synchrony_ok = synchrony_median < synchrony_threshold;
    let failures_ok = failure_fraction <= options.max_failure_fraction;
    let passed = covariance_ok && averaged_ok.unwrap_or(true) && synchrony_ok && failures_ok;

    let mut notes = Vec::new();
    if let StepRegime::Critical { gamma_star } = prediction.regime {
        notes.push(format!(
            "critical regime: sigma solves (2g*H + I)S + S(2g*H + I)^T = -2g* U with g* = {gamma_star}; \
             the covariance of sqrt(n)(theta_n - theta*) is g* times sigma"
        ));
    }

    Ok(CltReport {
        n_steps,
        n_runs,
        n_failed,
        failure_fraction,
        prediction,
        empirical,
        relative_error,
        frobenius_ratio,
        empirical_avg,
        relative_error_avg,
        frobenius_ratio_avg,
        synchrony_median,
        synchrony_threshold,
        relative_tolerance: options.relative_tolerance,
        covariance_ok,
        averaged_ok,
        synchrony_ok,
        failures_ok,
        passed,
        notes,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::NetworkGraph;
    use crate::problems::QuadraticGaussianProblem;

    #[test]
    fn scalar_predictions() {
        let p = QuadraticGaussianProblem::scalar(1.0, 0.0, 5.0, 5).unwrap();
        let pred = predict_clt(&p.clt_data().unwrap(), StepRegime::Subcritical, None).unwrap();
        assert!((pred.sigma[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((pred.sigma_avg.unwrap()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_prediction_uses_gamma_scale() {
        let data = CltData {
            jacobian: DMatrix::from_element(1, 1, -1.0),
            upsilon: DMatrix::from_element(1, 1, 1.0),
        };
        let pred = predict_clt(&data, StepRegime::Critical { gamma_star: 2.0 }, None).unwrap();
        // √n-scale: 4·1/(4−1) = 4/3; divided by γ★ = 2
        assert!((pred.sigma[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!(pred.sigma_avg.is_none());
        assert_eq!(pred.optimal_gain.unwrap()[(0, 0)], 0.5);
    }

    #[test]
    fn broadcast_is_rejected() {
        let p = QuadraticGaussianProblem::scalar(1.0, 0.0, 1.0, 3).unwrap();
        let scheme = GossipScheme::broadcast(NetworkGraph::path(3).unwrap(), 0.5).unwrap();
        let schedule = StepSchedule::new(0.5, 0.7).unwrap();
        let err = clt_check(&p, &scheme, &schedule, 10, 4, 0, &CltOptions::default()).unwrap_err();
        assert!(matches!(err, AnalysisError::Precondition(_)));
        assert!(err.to_string().contains("doubly stochastic"));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
