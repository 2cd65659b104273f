use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gossip_sa::analysis::{
    clt_check, disagreement_rate_check, efficiency_report, empirical_covariance, init_near, predict_clt,
    write_component_csv, CltPrediction, CovarianceEstimate,
};
use gossip_sa::engine::{
    run_replicas, run_trajectory, RecordOptions, RunOptions, RunRecord, RunRecorder, StackedState, StepRegime,
};
use gossip_sa::gossip::{validate_scheme, ValidationReport, STOCHASTIC_TOL};
use gossip_sa::seeding::RunStreams;
use rand::Rng;
use serde::Serialize;

use crate::config::{Experiment, Init, Problem};
use crate::error::CliError;

fn output_path(exp: &Experiment, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&exp.out_dir).map_err(|e| CliError::Output {
        path: exp.out_dir.clone(),
        message: e.to_string(),
    })?;
    Ok(exp.out_dir.join(name))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Output {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(exp: &Experiment, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = output_path(exp, name)?;
    let fail = |message: String| CliError::Output {
        path: path.clone(),
        message,
    };
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| fail(e.to_string()))?;
    Ok(path)
}

fn write_with<F>(exp: &Experiment, name: &str, f: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), csv::Error>,
{
    let path = output_path(exp, name)?;
    let mut out = create(&path)?;
    f(&mut out).map_err(|e| CliError::Output {
        path: path.clone(),
        message: e.to_string(),
    })?;
    out.flush().map_err(|e| CliError::Output {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(path)
}

fn initial_state(exp: &Experiment, streams: &mut RunStreams) -> StackedState {
    let model = exp.problem.model();
    let (n, d) = (model.n_agents(), model.dim());
    match &exp.init {
        Init::Uniform { lo, hi } => {
            let theta = (0..n * d).map(|_| streams.init.random_range(*lo..*hi)).collect();
            StackedState::new(theta, n, d).expect("sizes come from the problem")
        }
        Init::Near { spread } => {
            let star = model.equilibrium().expect("checked when the config was validated");
            init_near(star, n, *spread, exp.schedule.gamma(1), &mut streams.init)
        }
        Init::Explicit(v) if v.len() == d => StackedState::consensus(v, n),
        Init::Explicit(v) => StackedState::new(v.clone(), n, d).expect("length checked when the config was validated"),
    }
}

fn run_options(exp: &Experiment) -> RunOptions {
    RunOptions {
        averaging: exp.averaging,
        gain: exp.gain.clone(),
        ..Default::default()
    }
}

#[derive(Serialize)]
struct RhoOutput<'a> {
    validation: &'a ValidationReport,
    warnings: Vec<String>,
}

pub fn rho(exp: &Experiment) -> Result<(), CliError> {
    let report = validate_scheme(&exp.scheme, STOCHASTIC_TOL)?;
    let warnings = report.warnings();
    let path = write_json(
        exp,
        "rho.json",
        &RhoOutput {
            validation: &report,
            warnings: warnings.clone(),
        },
    )?;
    println!("rho = {}", report.rho);
    println!(
        "doubly stochastic: {}, connected: {}",
        report.doubly_stochastic, report.connected
    );
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("wrote {}", path.display());
    if report.satisfies_mixing_conditions() {
        Ok(())
    } else {
        Err(CliError::Validation(warnings.join("; ")))
    }
}

fn write_snapshots(exp: &Experiment, record: &RunRecord) -> Result<PathBuf, CliError> {
    let d = record.dim;
    write_with(exp, "snapshots.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "agent".to_string()];
        header.extend((1..=d).map(|k| format!("theta_{k}")));
        w.write_record(&header)?;
        for row in &record.rows {
            let Some(snap) = &row.snapshot else { continue };
            for (agent, block) in snap.chunks_exact(d).enumerate() {
                let mut rec = vec![row.step.to_string(), agent.to_string()];
                rec.extend(block.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

pub fn simulate(exp: &Experiment) -> Result<(), CliError> {
    let model = exp.problem.model();
    let options = RecordOptions {
        lyapunov: true,
        averaged: exp.averaging,
        sq_error: true,
        full_state: exp.snapshots,
    };
    let mut recorder = RunRecorder::new(model, &exp.plan, exp.n_steps, options);
    let mut streams = RunStreams::for_replica(exp.root_seed, 0);
    let init = initial_state(exp, &mut streams);
    let result = run_trajectory(
        model,
        &exp.scheme,
        &exp.schedule,
        exp.n_steps,
        init,
        &mut streams,
        &run_options(exp),
        &mut recorder,
    );
    let record = recorder.finish();
    let path = write_with(exp, "trajectory.csv", |out| record.write_csv(out))?;
    eprintln!("wrote {}", path.display());
    if exp.snapshots {
        eprintln!("wrote {}", write_snapshots(exp, &record)?.display());
    }
    result?;
    if let Some(last) = record.rows.last() {
        println!("step {}: disagreement {:e}", last.step, last.disagreement_norm);
        if let Some(e) = last.sq_error_per_node {
            println!("square error per node {e:e}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Failure {
    replica: u64,
    message: String,
}

#[derive(Serialize)]
struct StepSummary {
    mean: f64,
    median: f64,
}

#[derive(Serialize)]
struct MonteCarloSummary {
    n_steps: u64,
    n_runs: u64,
    root_seed: u64,
    n_completed: u64,
    n_failed: u64,
    failures: Vec<Failure>,
    final_sq_error: Option<StepSummary>,
    final_disagreement: Option<StepSummary>,
    /// `γ_n^{-1/2}(⟨θ_n⟩ − θ★)` over completed replicas.
    normalized_error: Option<CovarianceEstimate>,
    /// `√n(θ̄_n − θ★)` when averaging is on.
    normalized_avg_error: Option<CovarianceEstimate>,
    prediction: Option<CltPrediction>,
}

fn mean_median(values: &[f64]) -> Option<StepSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    let median = if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    };
    Some(StepSummary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median,
    })
}

/// Equal-width bins over the observed range of each component.
fn write_histogram<W: Write>(samples: &[(u64, Vec<f64>)], bins: usize, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["component", "bin", "lower", "upper", "count"])?;
    let d = samples.first().map_or(0, |s| s.1.len());
    for k in 0..d {
        let vals: Vec<f64> = samples.iter().map(|s| s.1[k]).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0u64; bins];
        for v in vals {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            let lower = lo + b as f64 * width;
            w.write_record([
                (k + 1).to_string(),
                b.to_string(),
                lower.to_string(),
                (lower + width).to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

type ReplicaResult = (RunRecord, Result<(Vec<f64>, Option<Vec<f64>>), String>);

pub fn montecarlo(exp: &Experiment) -> Result<(), CliError> {
    if exp.n_runs < 2 {
        return Err(CliError::Config(format!(
            "montecarlo needs run.n_runs >= 2, got {}",
            exp.n_runs
        )));
    }
    let model = exp.problem.model();
    let d = model.dim();
    let star = model.equilibrium().map(<[f64]>::to_vec);
    let options = RecordOptions {
        lyapunov: false,
        averaged: false,
        sq_error: true,
        full_state: false,
    };
    let run_opts = run_options(exp);
    eprintln!(
        "running {} replicas of {} steps on {} threads",
        exp.n_runs,
        exp.n_steps,
        rayon::current_num_threads()
    );

    let results: Vec<ReplicaResult> = run_replicas(exp.n_runs, exp.root_seed, |_, mut streams| {
        let mut recorder = RunRecorder::new(model, &exp.plan, exp.n_steps, options);
        let init = initial_state(exp, &mut streams);
        let out = run_trajectory(
            model,
            &exp.scheme,
            &exp.schedule,
            exp.n_steps,
            init,
            &mut streams,
            &run_opts,
            &mut recorder,
        );
        let out = out
            .map(|o| {
                (
                    o.final_state.consensus_mean(),
                    o.final_average.map(|a| a.consensus_mean()),
                )
            })
            .map_err(|e| e.to_string());
        (recorder.finish(), out)
    });

    let mut failures = Vec::new();
    let mut per_run = Vec::new();
    let mut normalized = Vec::new();
    let mut normalized_avg = Vec::new();
    let scale = exp.schedule.gamma(exp.n_steps.max(1)).powf(-0.5);
    let avg_scale = (exp.n_steps as f64).sqrt();
    for (replica, (record, out)) in (0u64..).zip(&results) {
        match out {
            Err(message) => {
                eprintln!("replica {replica} failed: {message}");
                failures.push(Failure {
                    replica,
                    message: message.clone(),
                });
            }
            Ok((mean, avg)) => {
                per_run.push((replica, record, mean, avg));
                if let Some(star) = &star {
                    normalized.push((replica, mean.iter().zip(star).map(|(m, s)| scale * (m - s)).collect()));
                    if let Some(avg) = avg {
                        normalized_avg.push(avg.iter().zip(star).map(|(m, s)| avg_scale * (m - s)).collect());
                    }
                }
            }
        }
    }

    let runs_path = write_with(exp, "montecarlo_runs.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["run_id".to_string(), "status".to_string()];
        header.extend((1..=d).map(|k| format!("mean_{k}")));
        header.extend((1..=d).map(|k| format!("avg_mean_{k}")));
        header.push("disagreement_norm".into());
        header.push("sq_error_per_node".into());
        w.write_record(&header)?;
        for (replica, (record, out)) in (0u64..).zip(&results) {
            let mut rec = vec![replica.to_string()];
            match out {
                Err(_) => {
                    rec.push("failed".into());
                    rec.extend(std::iter::repeat_n(String::new(), 2 * d + 2));
                }
                Ok((mean, avg)) => {
                    rec.push("ok".into());
                    rec.extend(mean.iter().map(f64::to_string));
                    match avg {
                        Some(a) => rec.extend(a.iter().map(f64::to_string)),
                        None => rec.extend(std::iter::repeat_n(String::new(), d)),
                    }
                    let last = record.rows.last();
                    rec.push(last.map(|r| r.disagreement_norm.to_string()).unwrap_or_default());
                    rec.push(
                        last.and_then(|r| r.sq_error_per_node)
                            .map(|e| e.to_string())
                            .unwrap_or_default(),
                    );
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;

    let steps = exp.plan.steps(exp.n_steps);
    let aggregate_path = write_with(exp, "montecarlo_aggregate.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "runs",
            "mean_sq_error",
            "median_sq_error",
            "mean_disagreement",
            "median_disagreement",
        ])?;
        for (k, step) in steps.iter().enumerate() {
            let rows: Vec<_> = per_run.iter().filter_map(|(_, r, _, _)| r.rows.get(k)).collect();
            let sq: Vec<f64> = rows.iter().filter_map(|r| r.sq_error_per_node).collect();
            let dis: Vec<f64> = rows.iter().map(|r| r.disagreement_norm).collect();
            let fmt = |s: Option<StepSummary>| match s {
                Some(s) => [s.mean.to_string(), s.median.to_string()],
                None => [String::new(), String::new()],
            };
            let [sq_mean, sq_median] = fmt(mean_median(&sq));
            let [d_mean, d_median] = fmt(mean_median(&dis));
            w.write_record([
                step.to_string(),
                rows.len().to_string(),
                sq_mean,
                sq_median,
                d_mean,
                d_median,
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let mut written = vec![runs_path, aggregate_path];
    if !normalized.is_empty() {
        written.push(write_with(exp, "normalized_errors.csv", |out| {
            write_component_csv(&normalized, out)
        })?);
        written.push(write_with(exp, "histogram.csv", |out| {
            write_histogram(&normalized, exp.histogram_bins, out)
        })?);
    }

    let last_rows: Vec<_> = per_run.iter().filter_map(|(_, r, _, _)| r.rows.last()).collect();
    let sq: Vec<f64> = last_rows.iter().filter_map(|r| r.sq_error_per_node).collect();
    let dis: Vec<f64> = last_rows.iter().map(|r| r.disagreement_norm).collect();
    let covariance = |s: &[Vec<f64>]| {
        if s.len() >= 2 {
            empirical_covariance(s).ok()
        } else {
            None
        }
    };
    let samples: Vec<Vec<f64>> = normalized.iter().map(|(_, v)| v.clone()).collect();
    let prediction = model
        .clt_data()
        .ok()
        .and_then(|data| predict_clt(&data, exp.schedule.regime(), exp.gain.as_ref()).ok());
    let summary = MonteCarloSummary {
        n_steps: exp.n_steps,
        n_runs: exp.n_runs,
        root_seed: exp.root_seed,
        n_completed: per_run.len() as u64,
        n_failed: failures.len() as u64,
        failures,
        final_sq_error: mean_median(&sq),
        final_disagreement: mean_median(&dis),
        normalized_error: covariance(&samples),
        normalized_avg_error: covariance(&normalized_avg),
        prediction,
    };
    written.push(write_json(exp, "montecarlo_summary.json", &summary)?);
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    println!("{} of {} replicas completed", summary.n_completed, summary.n_runs);
    if let Some(s) = &summary.final_sq_error {
        println!("final square error per node: mean {:e}, median {:e}", s.mean, s.median);
    }
    if per_run.len() < 2 {
        return Err(CliError::Divergence(format!(
            "only {} of {} replicas completed",
            per_run.len(),
            exp.n_runs
        )));
    }
    Ok(())
}

pub fn clt(exp: &Experiment) -> Result<(), CliError> {
    let model = exp.problem.model();
    eprintln!(
        "running {} replicas of {} steps on {} threads",
        exp.n_runs,
        exp.n_steps,
        rayon::current_num_threads()
    );
    let report = clt_check(
        model,
        &exp.scheme,
        &exp.schedule,
        exp.n_steps,
        exp.n_runs,
        exp.root_seed,
        &exp.clt_options(),
    )?;
    let json = write_json(exp, "clt_report.json", &report)?;
    let csv = write_with(exp, "normalized_errors.csv", |out| {
        report.write_normalized_errors_csv(out)
    })?;
    eprintln!("wrote {}\nwrote {}", json.display(), csv.display());
    println!(
        "relative error {:.4} (tolerance {}), Frobenius ratio {:.4}",
        report.relative_error, report.relative_tolerance, report.frobenius_ratio
    );
    if let (Some(e), Some(r)) = (report.relative_error_avg, report.frobenius_ratio_avg) {
        println!("averaged iterates: relative error {e:.4}, Frobenius ratio {r:.4}");
    }
    println!(
        "synchrony median {:.4e} (threshold {:.4e})",
        report.synchrony_median, report.synchrony_threshold
    );
    println!("failed replicas {} of {}", report.n_failed, report.n_runs);
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    let synchrony_ok = report.synchrony_ok || !exp.analysis.require_synchrony;
    let passed = report.covariance_ok && report.averaged_ok.unwrap_or(true) && report.failures_ok && synchrony_ok;
    if passed {
        Ok(())
    } else {
        let mut failed = Vec::new();
        if !report.covariance_ok {
            failed.push("covariance");
        }
        if report.averaged_ok == Some(false) {
            failed.push("averaged covariance");
        }
        if !synchrony_ok {
            failed.push("synchrony");
        }
        if !report.failures_ok {
            failed.push("failure fraction");
        }
        Err(CliError::Tolerance(format!("clt check: {}", failed.join(", "))))
    }
}

pub fn rate(exp: &Experiment) -> Result<(), CliError> {
    let model = exp.problem.model();
    let report = disagreement_rate_check(
        model,
        &exp.scheme,
        &exp.schedule,
        exp.n_steps,
        exp.n_runs,
        exp.root_seed,
        &exp.rate_options(),
    )?;
    let json = write_json(exp, "rate_report.json", &report)?;
    let csv = write_with(exp, "rate_moments.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "normalized_disagreement",
            "standard_error",
            "median_disagreement",
            "mean_sq_observation_disagreement",
        ])?;
        for k in 0..report.steps.len() {
            w.write_record([
                report.steps[k].to_string(),
                report.normalized_disagreement[k].to_string(),
                report.standard_errors[k].to_string(),
                report.median_disagreement[k].to_string(),
                report.mean_sq_observation_disagreement[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    eprintln!("wrote {}\nwrote {}", json.display(), csv.display());
    println!(
        "rho {:.6}, C {:.4}, bound {:.4}",
        report.rho, report.c_estimate, report.bound
    );
    if let Some(last) = report.normalized_disagreement.last() {
        println!("final normalized disagreement {last:.4}");
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!(
            "rate check: bound_ok = {}, flat = {:?}",
            report.bound_ok, report.flat
        )))
    }
}

pub fn efficiency(exp: &Experiment) -> Result<(), CliError> {
    let Problem::Localization(problem) = &exp.problem else {
        return Err(CliError::Config(
            "efficiency needs problem.kind = \"localization\"".into(),
        ));
    };
    let gamma_star = match (exp.analysis.gamma_star, exp.schedule.regime()) {
        (Some(g), _) => g,
        (None, StepRegime::Critical { gamma_star }) => gamma_star,
        (None, _) => {
            return Err(CliError::Config(
                "set analysis.gamma_star or use the critical schedule xi = 1".into(),
            ));
        }
    };
    let report = efficiency_report(problem, gamma_star)?;
    let path = write_json(exp, "efficiency.json", &report)?;
    eprintln!("wrote {}", path.display());
    println!("gamma_star {gamma_star} (minimum {})", report.gamma_star_min);
    println!("min eigenvalue of the gap {:e}", report.min_eigenvalue);
    println!("factorization error {:e}", report.factorization_error);
    let tol = exp.analysis.efficiency_tolerance * report.sigma.amax().max(1.0);
    if report.psd && report.factorization_error <= tol && report.closed_form_error <= tol {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!(
            "efficiency: psd = {}, factorization error {:e}",
            report.psd, report.factorization_error
        )))
    }
}
