use std::io;

use super::{EngineError, Observer, StepView};
use crate::problems::ProblemModel;

/// Which steps a [`RunRecorder`] keeps. The final step is always included.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPlan {
    Every(u64),
    /// `round(10^(k / per_decade))` for `k = 0, 1, …`, deduplicated.
    LogSpaced {
        per_decade: u32,
    },
    Steps(Vec<u64>),
    FinalOnly,
}

impl SamplingPlan {
    /// Sorted, deduplicated steps in `1..=n_steps`.
    pub fn steps(&self, n_steps: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            SamplingPlan::Every(k) => {
                let k = (*k).max(1);
                (1..=n_steps / k).map(|m| m * k).collect()
            }
            SamplingPlan::LogSpaced { per_decade } => {
                let per = (*per_decade).max(1) as f64;
                let mut v = Vec::new();
                let mut k = 0u32;
                loop {
                    let s = 10f64.powf(k as f64 / per).round() as u64;
                    if s > n_steps {
                        break;
                    }
                    v.push(s);
                    k += 1;
                }
                v
            }
            SamplingPlan::Steps(v) => v.iter().copied().filter(|&s| s >= 1 && s <= n_steps).collect(),
            SamplingPlan::FinalOnly => Vec::new(),
        };
        if n_steps > 0 {
            out.push(n_steps);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOptions {
    pub lyapunov: bool,
    pub averaged: bool,
    /// Keep `N⁻¹ Σ_i |θ_{n,i} − θ★|²` when the problem has an equilibrium.
    pub sq_error: bool,
    pub full_state: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            lyapunov: true,
            averaged: false,
            sq_error: true,
            full_state: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub step: u64,
    pub mean: Vec<f64>,
    pub disagreement_norm: f64,
    pub lyapunov: Option<f64>,
    pub averaged_mean: Option<Vec<f64>>,
    pub sq_error_per_node: Option<f64>,
    pub snapshot: Option<Vec<f64>>,
}

/// Diagnostics of one trajectory at the sampled steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dim: usize,
    pub rows: Vec<RecordRow>,
    pub has_sq_error: bool,
}

impl RunRecord {
    pub fn steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(|r| r.step)
    }

    /// Header: `step, mean_1..mean_d, disagreement_norm, lyapunov,
    /// avg_mean_1..avg_mean_d` and, when an equilibrium was known,
    /// `sq_error_per_node`. Disabled optional values are written empty.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string()];
        h.extend((1..=self.dim).map(|k| format!("mean_{k}")));
        h.push("disagreement_norm".into());
        h.push("lyapunov".into());
        h.extend((1..=self.dim).map(|k| format!("avg_mean_{k}")));
        if self.has_sq_error {
            h.push("sq_error_per_node".into());
        }
        h
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![row.step.to_string()];
            rec.extend(row.mean.iter().map(f64::to_string));
            rec.push(row.disagreement_norm.to_string());
            rec.push(opt(row.lyapunov));
            match &row.averaged_mean {
                Some(a) => rec.extend(a.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), self.dim)),
            }
            if self.has_sq_error {
                rec.push(opt(row.sq_error_per_node));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// An [`Observer`] that fills a [`RunRecord`] at the steps of a sampling plan.
pub struct RunRecorder<'a> {
    problem: &'a dyn ProblemModel,
    steps: Vec<u64>,
    cursor: usize,
    options: RecordOptions,
    record: RunRecord,
}

impl<'a> RunRecorder<'a> {
    pub fn new(problem: &'a dyn ProblemModel, plan: &SamplingPlan, n_steps: u64, options: RecordOptions) -> Self {
        let has_sq_error = options.sq_error && problem.equilibrium().is_some();
        Self {
            problem,
            steps: plan.steps(n_steps),
            cursor: 0,
            options,
            record: RunRecord {
                dim: problem.dim(),
                rows: Vec::new(),
                has_sq_error,
            },
        }
    }

    pub fn finish(self) -> RunRecord {
        self.record
    }
}

impl Observer for RunRecorder<'_> {
    fn observe(&mut self, view: &StepView<'_>) -> Result<(), EngineError> {
        if self.steps.get(self.cursor) != Some(&view.step) {
            return Ok(());
        }
        self.cursor += 1;
        let mean = view.state.consensus_mean();
        let lyapunov = if self.options.lyapunov {
            Some(self.problem.lyapunov(&mean)?)
        } else {
            None
        };
        let averaged_mean = match (self.options.averaged, view.average) {
            (true, Some(avg)) => Some(avg.consensus_mean()),
            _ => None,
        };
        let sq_error_per_node = match (self.record.has_sq_error, self.problem.equilibrium()) {
            (true, Some(star)) => {
                let total: f64 = view
                    .state
                    .agents()
                    .map(|a| a.iter().zip(star).map(|(x, s)| (x - s) * (x - s)).sum::<f64>())
                    .sum();
                Some(total / view.state.n_agents() as f64)
            }
            _ => None,
        };
        self.record.rows.push(RecordRow {
            step: view.step,
            mean,
            disagreement_norm: view.state.disagreement_norm(),
            lyapunov,
            averaged_mean,
            sq_error_per_node,
            snapshot: self.options.full_state.then(|| view.state.as_slice().to_vec()),
        });
        Ok(())
    }
}
