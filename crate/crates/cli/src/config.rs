//! Experiment configuration: a TOML file with the blocks `[problem]`,
//! `[scheme]`, `[schedule]`, `[run]`, `[output]` and `[analysis]`.
//!
//! Every key has a default, and the defaults describe the sensor-network
//! localization experiment. The only mandatory value is `run.root_seed`,
//! which may also come from `--seed`.

use std::path::PathBuf;

use gossip_sa::analysis::{optimal_gain, CltOptions, RateOptions};
use gossip_sa::engine::{Gain, SamplingPlan, StepRegime, StepSchedule};
use gossip_sa::gossip::{connectivity_radius, GossipScheme, NetworkGraph};
use gossip_sa::problems::{
    LocalizationProblem, ProblemModel, QuadraticGaussianProblem, SensorLayout, DEFAULT_OBS_VARIANCE,
};
use gossip_sa::seeding::setup_stream;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::CliError;

/// Geometric graphs default to this multiple of the smallest radius that
/// connects the points.
pub const AUTO_RADIUS_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Quadratic(QuadraticConfig),
    Localization(LocalizationConfig),
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Localization(LocalizationConfig::default())
    }
}

/// A number (scalar problem) or a list of rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>, CliError> {
        match self {
            MatrixSpec::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
            MatrixSpec::Rows(rows) => gossip_sa::linalg::from_rows(rows)
                .ok_or_else(|| CliError::Config(format!("{what}: rows must be non-empty and of equal length"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    pub theta_star: Vec<f64>,
    /// Per-agent noise standard deviation; `noise_var` takes precedence.
    pub noise_std: Option<f64>,
    pub noise_var: Option<f64>,
    pub n_agents: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationConfig {
    /// Explicit positions; overrides `sensor_count`, `box` and `layout_seed`.
    pub sensors: Option<Vec<[f64; 2]>>,
    pub sensor_count: usize,
    #[serde(rename = "box")]
    pub bounds: [f64; 2],
    pub layout_seed: u64,
    pub source: [f64; 2],
    pub obs_var: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            sensors: None,
            sensor_count: 40,
            bounds: [0.0, 50.0],
            layout_seed: 152,
            source: [20.875, 17.5],
            obs_var: DEFAULT_OBS_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Pairwise,
    Broadcast,
    Identity,
}

/// `"complete"`, `"path"`, `"grid(rows, cols)"`, `"geometric"`,
/// `"geometric(radius)"`, `"geometric(radius, seed)"`, or a list of edges.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Named(String),
    Edges(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub kind: SchemeName,
    pub beta: f64,
    pub dropout_p: Option<f64>,
    pub vanish_p0: Option<f64>,
    pub vanish_eta: Option<f64>,
    /// Activation probabilities, one per edge (pairwise) or node (broadcast).
    pub weights: Option<Vec<f64>>,
    pub graph: GraphSpec,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: SchemeName::Pairwise,
            beta: 0.5,
            dropout_p: None,
            vanish_p0: None,
            vanish_eta: None,
            weights: None,
            graph: GraphSpec::Named("geometric".into()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub gamma0: f64,
    pub xi: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { gamma0: 1e-3, xi: 0.7 }
    }
}

/// `"log"`, `"final"`, `"every(k)"` or an explicit list of steps.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RecordSpec {
    Named(String),
    Steps(Vec<u64>),
}

/// `"optimal"`, a number (times the identity) or a matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Named(String),
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

/// `"uniform"` (each coordinate uniform on `init_box`), `"near"` (within
/// `analysis.init_spread · √γ_1` of `θ★`), or explicit values: `d` numbers
/// for a common start, `N·d` for one block per agent.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_steps: u64,
    pub n_runs: u64,
    pub root_seed: Option<u64>,
    pub record: RecordSpec,
    /// Points per decade for `record = "log"`.
    pub per_decade: u32,
    pub averaging: bool,
    pub gain: Option<GainSpec>,
    pub init: InitSpec,
    /// Defaults to the localization box, or `θ★ ± 1` for the quadratic problem.
    pub init_box: Option<[f64; 2]>,
    pub snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_steps: 50_000,
            n_runs: 180,
            root_seed: None,
            record: RecordSpec::Named("log".into()),
            per_decade: 20,
            averaging: true,
            gain: None,
            init: InitSpec::Named("uniform".into()),
            init_box: None,
            snapshots: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub histogram_bins: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            histogram_bins: 30,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub init_spread: f64,
    pub relative_tolerance: f64,
    pub synchrony_factor: f64,
    /// Whether `clt` fails when the synchrony statistic is too large.
    pub require_synchrony: bool,
    pub max_failure_fraction: f64,
    /// Critical step constant for `efficiency`; defaults to `gamma0` when `xi = 1`.
    pub gamma_star: Option<f64>,
    pub rate_per_decade: u32,
    pub rate_init_half_width: f64,
    pub slack_sigmas: f64,
    pub tail_points: usize,
    pub flat_from: u64,
    pub efficiency_tolerance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let clt = CltOptions::default();
        let rate = RateOptions::default();
        Self {
            init_spread: clt.init_spread,
            relative_tolerance: clt.relative_tolerance,
            synchrony_factor: clt.synchrony_factor,
            require_synchrony: true,
            max_failure_fraction: clt.max_failure_fraction,
            gamma_star: None,
            rate_per_decade: rate.per_decade,
            rate_init_half_width: rate.init_half_width,
            slack_sigmas: rate.slack_sigmas,
            tail_points: rate.tail_points,
            flat_from: rate.flat_from,
            efficiency_tolerance: 1e-8,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }
}

pub enum Problem {
    Quadratic(QuadraticGaussianProblem),
    Localization(LocalizationProblem),
}

impl Problem {
    pub fn model(&self) -> &dyn ProblemModel {
        match self {
            Problem::Quadratic(p) => p,
            Problem::Localization(p) => p,
        }
    }

    fn coordinates(&self) -> Option<Vec<[f64; 2]>> {
        match self {
            Problem::Quadratic(_) => None,
            Problem::Localization(p) => Some(p.sensors().to_vec()),
        }
    }
}

/// How the initial stacked state is drawn.
#[derive(Debug, Clone)]
pub enum Init {
    Uniform { lo: f64, hi: f64 },
    Near { spread: f64 },
    Explicit(Vec<f64>),
}

/// A validated configuration, ready to run.
pub struct Experiment {
    pub problem: Problem,
    pub scheme: GossipScheme,
    pub schedule: StepSchedule,
    pub n_steps: u64,
    pub n_runs: u64,
    pub root_seed: u64,
    pub plan: SamplingPlan,
    pub averaging: bool,
    pub snapshots: bool,
    pub gain: Option<Gain>,
    pub init: Init,
    pub out_dir: PathBuf,
    pub histogram_bins: usize,
    pub analysis: AnalysisConfig,
}

impl Experiment {
    /// Validates every block. `seed` and `out_dir` override the file.
    pub fn build(config: &ExperimentConfig, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let root_seed = seed
            .or(config.run.root_seed)
            .ok_or_else(|| CliError::Config("run.root_seed is required (or pass --seed)".into()))?;
        let problem = build_problem(&config.problem)?;
        let scheme = build_scheme(&config.scheme, &problem)?;
        let schedule = StepSchedule::new(config.schedule.gamma0, config.schedule.xi)?;
        let run = &config.run;
        let plan = parse_record(&run.record, run.per_decade)?;
        let gain = run
            .gain
            .as_ref()
            .map(|g| build_gain(g, &problem, &schedule))
            .transpose()?;
        let init = build_init(run, &config.analysis, &config.problem, &problem)?;
        let analysis = config.analysis.clone();
        if config.output.histogram_bins == 0 {
            return Err(CliError::Config("output.histogram_bins must be positive".into()));
        }
        if !(analysis.init_spread >= 0.0 && analysis.relative_tolerance > 0.0 && analysis.synchrony_factor >= 0.0) {
            return Err(CliError::Config(
                "analysis.init_spread and synchrony_factor must be non-negative, relative_tolerance positive".into(),
            ));
        }
        Ok(Self {
            problem,
            scheme,
            schedule,
            n_steps: run.n_steps,
            n_runs: run.n_runs,
            root_seed,
            plan,
            averaging: run.averaging,
            snapshots: run.snapshots,
            gain,
            init,
            out_dir: out_dir.unwrap_or_else(|| config.output.dir.clone()),
            histogram_bins: config.output.histogram_bins,
            analysis,
        })
    }

    pub fn clt_options(&self) -> CltOptions {
        CltOptions {
            averaging: self.averaging,
            gain: self.gain.clone(),
            init_spread: self.analysis.init_spread,
            relative_tolerance: self.analysis.relative_tolerance,
            synchrony_factor: self.analysis.synchrony_factor,
            max_failure_fraction: self.analysis.max_failure_fraction,
        }
    }

    pub fn rate_options(&self) -> RateOptions {
        RateOptions {
            per_decade: self.analysis.rate_per_decade,
            init_half_width: self.analysis.rate_init_half_width,
            slack_sigmas: self.analysis.slack_sigmas,
            tail_points: self.analysis.tail_points,
            flat_from: self.analysis.flat_from,
        }
    }
}

fn build_problem(config: &ProblemConfig) -> Result<Problem, CliError> {
    match config {
        ProblemConfig::Quadratic(q) => {
            let var = match (q.noise_var, q.noise_std) {
                (Some(v), _) => v,
                (None, Some(s)) => s * s,
                (None, None) => {
                    return Err(CliError::Config(
                        "quadratic problem needs noise_std or noise_var".into(),
                    ))
                }
            };
            let a = q.a.to_matrix("problem.A")?;
            Ok(Problem::Quadratic(QuadraticGaussianProblem::new(
                a,
                q.theta_star.clone(),
                var,
                q.n_agents,
            )?))
        }
        ProblemConfig::Localization(l) => {
            let layout = match &l.sensors {
                Some(s) => SensorLayout::Explicit(s.clone()),
                None => {
                    let [lo, hi] = l.bounds;
                    if !(lo < hi) || l.sensor_count == 0 {
                        return Err(CliError::Config(
                            "problem.box must satisfy lo < hi with sensor_count > 0".into(),
                        ));
                    }
                    SensorLayout::Uniform {
                        count: l.sensor_count,
                        lo,
                        hi,
                        seed: l.layout_seed,
                    }
                }
            };
            Ok(Problem::Localization(LocalizationProblem::new(
                layout.positions(),
                l.source,
                l.obs_var,
            )?))
        }
    }
}

fn parse_call<'a>(text: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let rest = text.strip_prefix(name)?.trim();
    if rest.is_empty() {
        return Some(Vec::new());
    }
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect())
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CliError> {
    s.parse()
        .map_err(|_| CliError::Config(format!("{what}: cannot parse {s:?}")))
}

pub fn build_graph(spec: &GraphSpec, problem: &Problem) -> Result<NetworkGraph, CliError> {
    let n = problem.model().n_agents();
    let graph = match spec {
        GraphSpec::Edges(edges) => NetworkGraph::new(n, edges.iter().map(|e| (e[0], e[1])))?,
        GraphSpec::Named(name) => {
            let name = name.trim();
            if name == "complete" {
                NetworkGraph::complete(n)?
            } else if name == "path" {
                NetworkGraph::path(n)?
            } else if let Some(args) = parse_call(name, "grid") {
                let [r, c] = args[..] else {
                    return Err(CliError::Config(format!(
                        "scheme.graph: expected grid(rows, cols), got {name:?}"
                    )));
                };
                let (r, c) = (parse_num::<usize>(r, "grid rows")?, parse_num::<usize>(c, "grid cols")?);
                if r * c != n {
                    return Err(CliError::Config(format!(
                        "grid({r}, {c}) has {} nodes but the problem has {n}",
                        r * c
                    )));
                }
                NetworkGraph::grid(r, c)?
            } else if let Some(args) = parse_call(name, "geometric") {
                let radius = match args.first() {
                    None | Some(&"auto") => None,
                    Some(r) => Some(parse_num::<f64>(r, "geometric radius")?),
                };
                let seed = args.get(1).map(|s| parse_num::<u64>(s, "geometric seed")).transpose()?;
                if args.len() > 2 {
                    return Err(CliError::Config(format!(
                        "scheme.graph: too many arguments in {name:?}"
                    )));
                }
                let points = match (problem.coordinates(), seed) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::Config(
                            "geometric seed applies only when the problem has no sensor positions".into(),
                        ))
                    }
                    (Some(p), None) => p,
                    (None, s) => {
                        let mut rng = setup_stream(s.unwrap_or(0));
                        (0..n)
                            .map(|_| [rand::Rng::random::<f64>(&mut rng), rand::Rng::random::<f64>(&mut rng)])
                            .collect()
                    }
                };
                let radius = radius.unwrap_or_else(|| AUTO_RADIUS_FACTOR * connectivity_radius(&points));
                NetworkGraph::geometric(points, radius)?
            } else {
                return Err(CliError::Config(format!("scheme.graph: unknown graph {name:?}")));
            }
        }
    };
    Ok(graph)
}

fn build_scheme(config: &SchemeConfig, problem: &Problem) -> Result<GossipScheme, CliError> {
    let n = problem.model().n_agents();
    let mut scheme = match config.kind {
        SchemeName::Identity => GossipScheme::identity(n)?,
        SchemeName::Pairwise => GossipScheme::pairwise(build_graph(&config.graph, problem)?)?,
        SchemeName::Broadcast => GossipScheme::broadcast(build_graph(&config.graph, problem)?, config.beta)?,
    };
    if let Some(w) = &config.weights {
        scheme = scheme.with_activation_weights(w.clone())?;
    }
    if config.dropout_p.is_some() && config.vanish_p0.is_some() {
        return Err(CliError::Config(
            "dropout_p and vanishing rate are mutually exclusive".into(),
        ));
    }
    if let Some(p) = config.dropout_p {
        scheme = scheme.with_dropout(p)?;
    }
    match (config.vanish_p0, config.vanish_eta) {
        (Some(p0), Some(eta)) => scheme = scheme.with_vanishing_rate(p0, eta)?,
        (None, None) => {}
        _ => {
            return Err(CliError::Config(
                "vanish_p0 and vanish_eta must be given together".into(),
            ))
        }
    }
    Ok(scheme)
}

fn parse_record(spec: &RecordSpec, per_decade: u32) -> Result<SamplingPlan, CliError> {
    match spec {
        RecordSpec::Steps(s) => Ok(SamplingPlan::Steps(s.clone())),
        RecordSpec::Named(name) => {
            let name = name.trim();
            match name {
                "log" => Ok(SamplingPlan::LogSpaced { per_decade }),
                "final" => Ok(SamplingPlan::FinalOnly),
                _ => match parse_call(name, "every").as_deref() {
                    Some([k]) => {
                        let k = parse_num::<u64>(k, "record every")?;
                        if k == 0 {
                            return Err(CliError::Config("record every(k) needs k > 0".into()));
                        }
                        Ok(SamplingPlan::Every(k))
                    }
                    _ => Err(CliError::Config(format!("run.record: unknown plan {name:?}"))),
                },
            }
        }
    }
}

fn build_gain(spec: &GainSpec, problem: &Problem, schedule: &StepSchedule) -> Result<Gain, CliError> {
    let d = problem.model().dim();
    let m = match spec {
        GainSpec::Scalar(g) => DMatrix::identity(d, d) * *g,
        GainSpec::Rows(rows) => gossip_sa::linalg::from_rows(rows)
            .ok_or_else(|| CliError::Config("run.gain: rows must be non-empty and of equal length".into()))?,
        GainSpec::Named(name) if name == "optimal" => {
            let StepRegime::Critical { gamma_star } = schedule.regime() else {
                return Err(CliError::Config(
                    "run.gain = \"optimal\" needs the critical schedule xi = 1".into(),
                ));
            };
            let data = problem.model().clt_data()?;
            optimal_gain(&data.jacobian, &data.upsilon, gamma_star)?.gain
        }
        GainSpec::Named(name) => return Err(CliError::Config(format!("run.gain: unknown gain {name:?}"))),
    };
    if m.nrows() != d || m.ncols() != d {
        return Err(CliError::Config(format!(
            "run.gain must be {d}x{d}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Gain::new(m)?)
}

fn build_init(
    run: &RunConfig,
    analysis: &AnalysisConfig,
    problem_config: &ProblemConfig,
    problem: &Problem,
) -> Result<Init, CliError> {
    let model = problem.model();
    let (n, d) = (model.n_agents(), model.dim());
    match &run.init {
        InitSpec::Values(v) if v.len() == d || v.len() == n * d => Ok(Init::Explicit(v.clone())),
        InitSpec::Values(v) => Err(CliError::Config(format!(
            "run.init: expected {d} or {} values, got {}",
            n * d,
            v.len()
        ))),
        InitSpec::Named(name) if name == "near" => {
            if model.equilibrium().is_none() {
                return Err(CliError::Config(
                    "run.init = \"near\" needs a problem with a known equilibrium".into(),
                ));
            }
            Ok(Init::Near {
                spread: analysis.init_spread,
            })
        }
        InitSpec::Named(name) if name == "uniform" => {
            let [lo, hi] = match (run.init_box, problem_config, problem) {
                (Some(b), _, _) => b,
                (None, ProblemConfig::Localization(l), Problem::Localization(p)) => match l.sensors {
                    None => l.bounds,
                    Some(_) => bounding_square(p.sensors()),
                },
                (None, _, Problem::Quadratic(q)) => {
                    let star = q.equilibrium().expect("quadratic problems know their equilibrium");
                    let lo = star.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
                    let hi = star.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
                    [lo, hi]
                }
                (None, ..) => unreachable!("problem built from its own config"),
            };
            if !(lo < hi) {
                return Err(CliError::Config(format!(
                    "run.init_box must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
            Ok(Init::Uniform { lo, hi })
        }
        InitSpec::Named(name) => Err(CliError::Config(format!("run.init: unknown initialization {name:?}"))),
    }
}

/// Smallest `[lo, hi]²` with integer bounds containing every sensor.
fn bounding_square(sensors: &[[f64; 2]]) -> [f64; 2] {
    let coords = sensors.iter().flat_map(|s| s.iter().copied());
    let (lo, hi) = coords.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    [lo.floor(), hi.ceil()]
}
