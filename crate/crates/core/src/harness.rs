//! Experiment configuration, multi-seed execution, CSV output and the canned
//! benchmark suites.
//!
//! A run is a pure function of `(config, seed)`: all randomness comes from
//! counter-based streams and wall-clock columns are only filled when timing
//! is switched on, so reruns produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer};

use crate::error::{invalid, Error, Result};
use crate::geometry::{FeasibleSet, Point};
use crate::metrics::{
    self, bounds, certificate_from, gap_surrogate, max_quadratic_linear, residual_exact, BoundCheck, MetricRecord,
    WeakGapOracle, DEFAULT_INNER_TOL,
};
use crate::par::{map_slice, with_workers, Execution};
use crate::problems::{
    glm_generate, solve_reference, traffic_generate_with, GlmParams, Link, ProblemFile, TrafficParams, VIProblem,
};
use crate::schedules::{validate, Engine, PolicyName, Schedule, ScheduleInputs};
use crate::solvers::{oe_run, run_policy, select_best_movement, select_uniform_r, AverageMode, RunOptions, Trajectory};

pub const WORKERS_ENV: &str = "OPEX_WORKERS";
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-10;
/// Steps excluded from per-iteration timing averages.
pub const TIMING_WARMUP: usize = 10;

pub const TRAJECTORY_COLUMNS: [&str; 15] = [
    "run_id",
    "policy",
    "seed",
    "t",
    "gamma",
    "lambda",
    "theta",
    "V_to_solution",
    "residual_exact",
    "residual_certificate",
    "gap_surrogate",
    "weak_gap_exact",
    "movement_sq",
    "oracle_calls",
    "wall_time_ns",
];

/// Metric columns carried into the aggregate files.
pub const AGGREGATE_METRICS: [&str; 7] = [
    "V_to_solution",
    "residual_exact",
    "residual_certificate",
    "gap_surrogate",
    "weak_gap_exact",
    "movement_sq",
    "oracle_calls",
];

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// JSON problem file, relative to the config file.
    File { path: PathBuf },
    Traffic {
        n: usize,
        #[serde(default = "default_blocks")]
        blocks: usize,
        #[serde(default = "default_traffic_d_minus")]
        d_minus: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
    Glm {
        link: Link,
        n: usize,
        #[serde(default = "default_glm_d_minus")]
        d_minus: f64,
        radius: f64,
        #[serde(default)]
        sigma_y: f64,
        #[serde(default)]
        seed: u64,
    },
    Inline {
        #[serde(flatten)]
        spec: ProblemFile,
    },
}

fn default_blocks() -> usize {
    5
}

pub const DEFAULT_TRAFFIC_D_MINUS: f64 = 5e-3;

fn default_traffic_d_minus() -> f64 {
    DEFAULT_TRAFFIC_D_MINUS
}

fn default_glm_d_minus() -> f64 {
    1e-3
}

impl ProblemConfig {
    pub fn build(&self, base_dir: &Path) -> Result<VIProblem> {
        match self {
            ProblemConfig::File { path } => {
                let text = fs::read_to_string(base_dir.join(path))?;
                serde_json::from_str::<ProblemFile>(&text)?.to_problem()
            }
            ProblemConfig::Traffic { n, blocks, d_minus, seed, noise_sigma } => {
                let p = traffic_generate_with(&TrafficParams::new(*n, *blocks, *d_minus, *seed))?;
                match noise_sigma {
                    Some(s) => p.with_additive_noise(*s),
                    None => Ok(p),
                }
            }
            ProblemConfig::Glm { link, n, d_minus, radius, sigma_y, seed } => glm_generate(&GlmParams {
                n: *n,
                link: *link,
                d_minus: *d_minus,
                radius: *radius,
                sigma_y: *sigma_y,
                seed: *seed,
            }),
            ProblemConfig::Inline { spec } => spec.to_problem(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartName {
    /// The set's analytic center (the origin for the full space).
    #[default]
    Center,
    /// Projection of the center's mirror image through the solution,
    /// `Proj(2c − x*)`.
    Opposite,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StartRule {
    Named(StartName),
    Point(Vec<f64>),
}

impl Default for StartRule {
    fn default() -> Self {
        StartRule::Named(StartName::Center)
    }
}

impl StartRule {
    pub fn resolve(&self, problem: &VIProblem, solution: Option<&Point>) -> Result<Point> {
        let set = &problem.set;
        let x1 = match self {
            StartRule::Named(StartName::Center) => set.analytic_center(),
            StartRule::Named(StartName::Opposite) => {
                let x_star = solution.ok_or(Error::MissingSolution)?;
                set.project(&(set.analytic_center() * 2.0 - x_star))?
            }
            StartRule::Point(v) => Point::from_vec(v.clone()),
        };
        if !set.contains(&x1) {
            return Err(Error::NotFeasible);
        }
        Ok(x1)
    }
}

/// Which metric columns to fill. `weak_gap` defaults to averaging policies on
/// affine problems, where it is both meaningful and affordable.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSelection {
    pub distance: bool,
    pub residual: bool,
    pub certificate: bool,
    pub gap: bool,
    pub weak_gap: Option<bool>,
    pub inner_tol: f64,
}

impl Default for MetricSelection {
    fn default() -> Self {
        Self { distance: true, residual: true, certificate: true, gap: true, weak_gap: None, inner_tol: DEFAULT_INNER_TOL }
    }
}

impl MetricSelection {
    pub fn distance_only() -> Self {
        Self { distance: true, residual: false, certificate: false, gap: false, weak_gap: Some(false), ..Self::default() }
    }
}

fn policy_name<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PolicyName, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(deserialize_with = "policy_name")]
    pub name: PolicyName,
    /// Distinguishes several entries of the same policy in file names.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default, rename = "L")]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default, rename = "V1")]
    pub v1: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub restart_ratio: Option<f64>,
    #[serde(default)]
    pub batch: Option<usize>,
    #[serde(default)]
    pub gamma_scale: Option<f64>,
    /// SBOE on affine problems: recursive operator updates (default on).
    #[serde(default)]
    pub recursive: Option<bool>,
}

impl PolicyConfig {
    pub fn new(name: PolicyName) -> Self {
        Self {
            name,
            label: None,
            lipschitz: None,
            mu: None,
            v1: None,
            sigma: None,
            restart_ratio: None,
            batch: None,
            gamma_scale: None,
            recursive: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.name.cli_name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub timing: bool,
    /// Mini-batch size for every stochastic policy without its own.
    #[serde(default)]
    pub batch: Option<usize>,
    #[serde(default)]
    pub start: StartRule,
    #[serde(default)]
    pub reference_tol: Option<f64>,
    #[serde(default)]
    pub metrics: MetricSelection,
    pub problem: ProblemConfig,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicyConfig>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_cadence() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig, policies: Vec<PolicyConfig>, k: usize, seeds: Vec<u64>) -> Self {
        Self {
            k,
            seeds,
            cadence: 1,
            output: default_output(),
            workers: None,
            timing: false,
            batch: None,
            start: StartRule::default(),
            reference_tol: None,
            metrics: MetricSelection::default(),
            problem,
            policies,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        if cfg.output.is_relative() {
            cfg.output = base_dir.join(&cfg.output);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return cfg_err("k must be at least 1".into());
        }
        if self.cadence == 0 {
            return cfg_err("cadence must be at least 1".into());
        }
        if self.policies.is_empty() {
            return cfg_err("at least one [[policy]] is required".into());
        }
        if self.seeds.is_empty() {
            return cfg_err("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if let Some(w) = seeds.windows(2).find(|w| w[0] == w[1]) {
            return cfg_err(format!("seed {} appears more than once", w[0]));
        }
        let mut labels: Vec<String> = self.policies.iter().map(PolicyConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return cfg_err(format!("policy label '{}' appears more than once; set `label`", w[0]));
        }
        if self.workers == Some(0) {
            return cfg_err("workers must be positive".into());
        }
        Ok(())
    }

    /// Worker count: config value, else the environment variable.
    pub fn resolved_workers(&self) -> Option<usize> {
        self.workers.or_else(|| std::env::var(WORKERS_ENV).ok()?.parse().ok().filter(|&n| n > 0))
    }
}

// ---------------------------------------------------------------------------
// Preparation
// ---------------------------------------------------------------------------

/// Everything a run needs that does not depend on the policy or seed.
pub struct Prepared {
    pub problem: VIProblem,
    pub solution: Option<Point>,
    pub x1: Point,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let problem = cfg.problem.build(&cfg.base_dir)?;
        Self::from_problem(problem, &cfg.start, cfg.reference_tol)
    }

    pub fn from_problem(problem: VIProblem, start: &StartRule, reference_tol: Option<f64>) -> Result<Self> {
        let solution = match &problem.known_solution {
            Some(x) => Some(x.clone()),
            None if problem.has_exact() && problem.constants.mu > 0.0 => {
                Some(solve_reference(&problem, reference_tol.unwrap_or(DEFAULT_REFERENCE_TOL))?)
            }
            None => None,
        };
        let x1 = start.resolve(&problem, solution.as_ref())?;
        Ok(Self { problem, solution, x1 })
    }

    /// `V(x₁, x*)` when the solution is available.
    pub fn v1(&self) -> Option<f64> {
        let x = self.solution.as_ref()?;
        self.problem.geometry.bregman(&self.x1, x).ok()
    }
}

/// Estimate of `V(x₁, x*)` when it is not supplied: half the squared distance
/// from `x₁` to the set's center, or the largest distance from `x₁` when
/// `x₁` is the center itself.
pub fn default_v1(set: &FeasibleSet, x1: &Point) -> f64 {
    let d = 0.5 * (x1 - set.analytic_center()).norm_squared();
    if d > 0.0 {
        return d;
    }
    match set.max_bregman_from(x1) {
        Ok(v) if v > 0.0 && v.is_finite() => v,
        _ => 1.0,
    }
}

pub fn build_schedule(
    problem: &VIProblem,
    x1: &Point,
    policy: &PolicyConfig,
    k: usize,
    batch: Option<usize>,
) -> Result<Schedule> {
    let c = &problem.constants;
    let mut inputs = ScheduleInputs::new(policy.lipschitz.unwrap_or(c.lipschitz), policy.mu.unwrap_or(c.mu))
        .sigma(policy.sigma.unwrap_or(c.sigma))
        .v1(policy.v1.unwrap_or_else(|| default_v1(&problem.set, x1)))
        .horizon(k);
    if let Some(r) = policy.restart_ratio {
        inputs = inputs.restart_ratio(r);
    }
    if let Some(m) = policy.batch.or(batch) {
        inputs = inputs.batch(m);
    }
    if policy.name.engine() == Engine::Sboe {
        let sizes = problem
            .block_sizes
            .as_ref()
            .ok_or_else(|| Error::IncompatiblePartition("SBOE needs a block partition".into()))?;
        let lbar = c.block_lipschitz.unwrap_or(c.lipschitz);
        inputs = inputs.blocks(sizes.len(), lbar);
    }
    let s = Schedule::new(policy.name, inputs)?;
    match policy.gamma_scale {
        Some(g) => s.with_gamma_scale(g),
        None => Ok(s),
    }
}

fn run_options(problem: &VIProblem, policy: &PolicyConfig, timing: bool, exec: Execution) -> RunOptions {
    RunOptions {
        keep_iterates: true,
        recursive_affine: policy.name.engine() == Engine::Sboe
            && problem.affine_spec().is_some()
            && policy.recursive.unwrap_or(true),
        timing,
        exec,
        ..RunOptions::default()
    }
}

// ---------------------------------------------------------------------------
// Metric rows
// ---------------------------------------------------------------------------

/// Running weighted averages of `x_{t+1}` for every prefix `t`, via prefix sums.
struct RunningAverage {
    mode: AverageMode,
    /// `Σ_{j≤t} w_j x_{j+1}` and `Σ_{j≤t} w_j` with per-mode interior weights.
    sums: Vec<Point>,
    weights: Vec<f64>,
    /// `γ_jθ_j`, normalised by the run's largest `θ`.
    gt: Vec<f64>,
}

impl RunningAverage {
    fn new(traj: &Trajectory, mode: AverageMode) -> Result<Self> {
        let k = traj.k;
        let max_lt = traj.params.iter().map(|p| p.log_theta).fold(f64::NEG_INFINITY, f64::max);
        let gt: Vec<f64> = traj.params.iter().map(|p| p.gamma * (p.log_theta - max_lt).exp()).collect();
        let n = traj.last().len();
        let mut sums = Vec::with_capacity(k + 1);
        let mut weights = Vec::with_capacity(k + 1);
        sums.push(Point::zeros(n));
        weights.push(0.0);
        for t in 1..=k {
            let w = match mode {
                AverageMode::GammaTheta => gt[t - 1],
                AverageMode::TailGamma => traj.params[t - 1].gamma,
                AverageMode::Block { b } => {
                    let b = b as f64;
                    let next = if t < k { gt[t] } else { 0.0 };
                    gt[t - 1] * b - next * (b - 1.0)
                }
            };
            let mut s = sums[t - 1].clone();
            s.axpy(w, traj.iterate(t + 1)?, 1.0);
            sums.push(s);
            weights.push(weights[t - 1] + w);
        }
        Ok(Self { mode, sums, weights, gt })
    }

    /// Average over the first `t` steps, as if the run had stopped at `t`.
    fn at(&self, traj: &Trajectory, t: usize) -> Result<Point> {
        match self.mode {
            AverageMode::GammaTheta => Ok(&self.sums[t] / self.weights[t]),
            AverageMode::TailGamma => {
                let s = t.div_ceil(2).max(1) - 1;
                Ok((&self.sums[t] - &self.sums[s]) / (self.weights[t] - self.weights[s]))
            }
            AverageMode::Block { b } => {
                if t == traj.k {
                    return Ok(&self.sums[t] / self.weights[t]);
                }
                // interior weights up to t − 1, then θ_tγ_tb on x_{t+1}
                let b = b as f64;
                let last = self.gt[t - 1] * b;
                let interior_w = self.weights[t - 1];
                let mut acc = self.sums[t - 1].clone();
                acc.axpy(last, traj.iterate(t + 1)?, 1.0);
                Ok(acc / (interior_w + last))
            }
        }
    }
}

pub struct MetricContext<'a> {
    pub problem: &'a VIProblem,
    pub solution: Option<&'a Point>,
    pub selection: MetricSelection,
    weak: Option<WeakGapOracle<'a>>,
}

impl<'a> MetricContext<'a> {
    pub fn new(problem: &'a VIProblem, solution: Option<&'a Point>, selection: MetricSelection) -> Self {
        let weak = if selection.weak_gap != Some(false) { WeakGapOracle::new(problem).ok() } else { None };
        Self { problem, solution, selection, weak }
    }

    fn residual_applies(&self) -> bool {
        self.selection.residual
            && self.problem.has_exact()
            && matches!(self.problem.set, FeasibleSet::FullSpace { .. } | FeasibleSet::Ball { .. })
    }

    fn gap_applies(&self) -> bool {
        self.selection.gap && self.problem.has_exact() && self.problem.set.is_bounded()
    }

    fn weak_gap_applies(&self, policy: PolicyName) -> bool {
        let wanted = self.selection.weak_gap.unwrap_or(AverageMode::for_policy(policy, 1).is_some());
        wanted && self.weak.is_some()
    }

    fn weak_gap(&self, x: &Point) -> Result<f64> {
        let oracle = self.weak.as_ref().ok_or_else(|| invalid("weak gap needs an affine operator"))?;
        Ok(oracle.solve(x, self.selection.inner_tol)?.value)
    }

    /// Metric rows at `t = 0, c, 2c, …` and `t = k`; row `t ≥ 1` describes
    /// `x_{t+1}`, row 0 describes `x₁`.
    pub fn rows(&self, traj: &Trajectory, cadence: usize) -> Result<Vec<MetricRecord>> {
        let k = traj.k;
        let b = self.problem.block_sizes.as_ref().map_or(1, Vec::len);
        let mode = AverageMode::for_policy(traj.policy, b);
        let wants_gap = self.gap_applies() || self.weak_gap_applies(traj.policy);
        let averages = match mode {
            Some(m) if wants_gap => Some(RunningAverage::new(traj, m)?),
            _ => None,
        };
        let certificate = self.selection.certificate
            && self.problem.has_exact()
            && traj.blocks.is_empty()
            && traj.operator_values.len() == k;
        let needs_exact = certificate || self.residual_applies();

        let mut ts: Vec<usize> = (0..=k).step_by(cadence).collect();
        if *ts.last().unwrap() != k {
            ts.push(k);
        }
        let mut rows = Vec::with_capacity(ts.len());
        for t in ts {
            let x = traj.iterate(if t == 0 { 1 } else { t + 1 })?;
            let mut r = MetricRecord { t, ..Default::default() };
            if self.selection.distance {
                if let Some(xs) = self.solution {
                    r.v_to_solution = Some(self.problem.geometry.bregman(x, xs)?);
                }
            }
            let fx = if needs_exact { Some(self.problem.exact(x)?) } else { None };
            if self.residual_applies() {
                r.residual_exact = Some(residual_exact(&self.problem.set, x, fx.as_ref().unwrap())?);
            }
            if t >= 1 {
                let p = traj.step(t)?;
                if certificate {
                    r.residual_certificate = Some(certificate_from(
                        traj.operator_value(t)?,
                        traj.operator_value(t - 1)?,
                        fx.as_ref().unwrap(),
                        traj.iterate(t)?,
                        x,
                        p.gamma,
                        p.lambda,
                    )?);
                }
                r.movement_sq = Some(traj.movement_sq[t - 1]);
                r.oracle_calls = traj.oracle_calls[t - 1];
                r.wall_time_ns = traj.step_ns.get(t - 1).copied();
            }
            if wants_gap {
                let out = match (&averages, t) {
                    (Some(avg), t) if t >= 1 => avg.at(traj, t)?,
                    _ => x.clone(),
                };
                if self.gap_applies() {
                    r.gap_surrogate = Some(gap_surrogate(self.problem, &out)?);
                }
                if self.weak_gap_applies(traj.policy) {
                    r.weak_gap_exact = Some(self.weak_gap(&out)?);
                }
            }
            rows.push(r);
        }
        Ok(rows)
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub fn trajectory_csv(label: &str, traj: &Trajectory, rows: &[MetricRecord]) -> String {
    let mut out = TRAJECTORY_COLUMNS.join(",");
    out.push('\n');
    let run_id = run_id(label, traj.seed);
    for r in rows {
        let p = (r.t >= 1).then(|| traj.params[r.t - 1]);
        let _ = writeln!(
            out,
            "{run_id},{label},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            traj.seed,
            r.t,
            fmt_opt(p.map(|p| p.gamma)),
            fmt_opt(p.map(|p| p.lambda)),
            fmt_opt(p.map(|p| p.theta())),
            fmt_opt(r.v_to_solution),
            fmt_opt(r.residual_exact),
            fmt_opt(r.residual_certificate),
            fmt_opt(r.gap_surrogate),
            fmt_opt(r.weak_gap_exact),
            fmt_opt(r.movement_sq),
            r.oracle_calls,
            r.wall_time_ns.map(|v| v.to_string()).unwrap_or_default(),
        );
    }
    out
}

pub fn run_id(label: &str, seed: u64) -> String {
    format!("{label}-s{seed}")
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Writes through a temporary file so readers never see partial output.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses a trajectory CSV back into `(t, metric columns)` rows; empty
/// fields become `None`.
pub fn read_trajectory_csv(text: &str) -> Result<Vec<(usize, Vec<Option<f64>>)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| invalid("empty CSV"))?.split(',').collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(invalid("unexpected trajectory CSV header"));
    }
    let idx: Vec<usize> = AGGREGATE_METRICS
        .iter()
        .map(|m| TRAJECTORY_COLUMNS.iter().position(|c| c == m).unwrap())
        .collect();
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != TRAJECTORY_COLUMNS.len() {
                return Err(invalid(format!("malformed CSV line '{line}'")));
            }
            let t = f[3].parse().map_err(|_| invalid("bad t"))?;
            let vals = idx
                .iter()
                .map(|&i| {
                    if f[i].is_empty() {
                        Ok(None)
                    } else {
                        f[i].parse::<f64>().map(Some).map_err(|_| invalid(format!("bad number '{}'", f[i])))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((t, vals))
        })
        .collect()
}

fn record_values(r: &MetricRecord) -> Vec<Option<f64>> {
    vec![
        r.v_to_solution,
        r.residual_exact,
        r.residual_certificate,
        r.gap_surrogate,
        r.weak_gap_exact,
        r.movement_sq,
        Some(r.oracle_calls as f64),
    ]
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Sample mean and standard error (`s/√n`, zero for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAggregate {
    pub label: String,
    pub policy: PolicyName,
    pub seeds: usize,
    pub checkpoints: Vec<usize>,
    /// `[checkpoint][metric]`, in [`AGGREGATE_METRICS`] order; `None` when
    /// some seed lacks the value.
    pub stats: Vec<Vec<Option<(f64, f64)>>>,
    /// Mean per-step wall time over seeds (after warm-up), when timed.
    pub mean_step_ns: Option<f64>,
    pub oracle_calls_total: u64,
}

impl PolicyAggregate {
    pub fn metric(&self, name: &str) -> Option<Vec<Option<(f64, f64)>>> {
        let j = AGGREGATE_METRICS.iter().position(|m| *m == name)?;
        Some(self.stats.iter().map(|row| row[j]).collect())
    }

    /// Mean and standard error of `name` at the last checkpoint.
    pub fn final_value(&self, name: &str) -> Option<(f64, f64)> {
        self.metric(name)?.last().copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,t,n_seeds");
        for m in AGGREGATE_METRICS {
            let _ = write!(out, ",mean_{m},se_{m}");
        }
        out.push('\n');
        for (t, row) in self.checkpoints.iter().zip(&self.stats) {
            let _ = write!(out, "{},{t},{}", self.label, self.seeds);
            for s in row {
                match s {
                    Some((m, e)) => {
                        let _ = write!(out, ",{},{}", fmt_f(*m), fmt_f(*e));
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates per-seed rows sharing one checkpoint grid.
pub fn aggregate_rows(
    label: &str,
    policy: PolicyName,
    per_seed: &[Vec<(usize, Vec<Option<f64>>)>],
) -> Result<PolicyAggregate> {
    let first = per_seed.first().ok_or_else(|| invalid("no runs to aggregate"))?;
    let checkpoints: Vec<usize> = first.iter().map(|r| r.0).collect();
    if per_seed.iter().any(|rows| rows.iter().map(|r| r.0).ne(checkpoints.iter().copied())) {
        return Err(invalid("checkpoint grids differ across seeds"));
    }
    let stats = (0..checkpoints.len())
        .map(|i| {
            (0..AGGREGATE_METRICS.len())
                .map(|j| {
                    let vals: Option<Vec<f64>> = per_seed.iter().map(|rows| rows[i].1[j]).collect();
                    vals.map(|v| mean_se(&v))
                })
                .collect()
        })
        .collect();
    Ok(PolicyAggregate {
        label: label.to_string(),
        policy,
        seeds: per_seed.len(),
        checkpoints,
        stats,
        mean_step_ns: None,
        oracle_calls_total: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyError {
    pub label: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateResult {
    pub policies: Vec<PolicyAggregate>,
    pub errors: Vec<PolicyError>,
    pub files: Vec<PathBuf>,
}

impl AggregateResult {
    pub fn policy(&self, label: &str) -> Option<&PolicyAggregate> {
        self.policies.iter().find(|p| p.label == label)
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct Job<'a> {
    policy: &'a PolicyConfig,
    schedule: &'a Schedule,
    seed: u64,
}

struct JobOutput {
    rows: Vec<MetricRecord>,
    mean_step_ns: Option<f64>,
    oracle_calls: u64,
}

/// Runs every `(policy, seed)` pair, writing one trajectory CSV per pair and
/// one aggregate CSV per policy under `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    config.validate()?;
    let prep = Prepared::new(config)?;
    run_prepared(config, &prep)
}

pub fn run_prepared(config: &ExperimentConfig, prep: &Prepared) -> Result<AggregateResult> {
    let problem = &prep.problem;
    let mut result = AggregateResult::default();
    let mut schedules = Vec::new();
    for pc in &config.policies {
        let built = build_schedule(problem, &prep.x1, pc, config.k, config.batch).and_then(|s| {
            let report = validate(&s, config.k);
            if report.passed() {
                Ok(s)
            } else {
                Err(Error::ScheduleValidation(report.to_string()))
            }
        });
        match built {
            Ok(s) => schedules.push((pc, s)),
            Err(e) => result.errors.push(PolicyError { label: pc.label(), message: e.to_string() }),
        }
    }
    let jobs: Vec<Job> = schedules
        .iter()
        .flat_map(|(pc, s)| config.seeds.iter().map(move |&seed| Job { policy: pc, schedule: s, seed }))
        .collect();
    let ctx = MetricContext::new(problem, prep.solution.as_ref(), config.metrics);
    // Parallelism goes across runs; a lone run parallelises its mini-batches.
    let inner = if jobs.len() > 1 { Execution::Sequential } else { Execution::default() };
    let outer = Execution::default();
    let outputs: Vec<Result<JobOutput>> = with_workers(config.resolved_workers(), || {
        map_slice(outer, &jobs, |job| {
            let opts = run_options(problem, job.policy, config.timing, inner);
            let traj = run_policy(problem, job.schedule, &prep.x1, config.k, job.seed, &opts)?;
            let rows = ctx.rows(&traj, config.cadence)?;
            let path = config.output.join(format!("{}_seed{}.csv", file_stem(&job.policy.label()), job.seed));
            write_atomic(&path, &trajectory_csv(&job.policy.label(), &traj, &rows))?;
            Ok(JobOutput {
                rows,
                mean_step_ns: traj.mean_step_ns(TIMING_WARMUP),
                oracle_calls: traj.total_oracle_calls(),
            })
        })
    });

    let mut outputs = outputs.into_iter();
    for (pc, _) in &schedules {
        let label = pc.label();
        let mine: Vec<Result<JobOutput>> = outputs.by_ref().take(config.seeds.len()).collect();
        let mine: Vec<JobOutput> = match mine.into_iter().collect::<Result<Vec<_>>>() {
            Ok(v) => v,
            Err(e) => {
                result.errors.push(PolicyError { label, message: e.to_string() });
                continue;
            }
        };
        for seed in &config.seeds {
            result.files.push(config.output.join(format!("{}_seed{seed}.csv", file_stem(&label))));
        }
        let per_seed: Vec<Vec<(usize, Vec<Option<f64>>)>> =
            mine.iter().map(|o| o.rows.iter().map(|r| (r.t, record_values(r))).collect()).collect();
        let mut agg = aggregate_rows(&label, pc.name, &per_seed)?;
        let times: Option<Vec<f64>> = mine.iter().map(|o| o.mean_step_ns).collect();
        agg.mean_step_ns = times.map(|t| t.iter().sum::<f64>() / t.len() as f64);
        agg.oracle_calls_total = mine.iter().map(|o| o.oracle_calls).sum();
        let path = config.output.join(format!("{}_aggregate.csv", file_stem(&label)));
        write_atomic(&path, &agg.to_csv())?;
        result.files.push(path);
        result.policies.push(agg);
    }
    if !result.errors.is_empty() {
        let mut text = String::from("policy,message\n");
        for e in &result.errors {
            let _ = writeln!(text, "{},\"{}\"", e.label, e.message.replace('"', "'").replace('\n', "; "));
        }
        let path = config.output.join("errors.csv");
        write_atomic(&path, &text)?;
        result.files.push(path);
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Bound checks
// ---------------------------------------------------------------------------

/// Equality tolerance for the noiseless stochastic-vs-deterministic check.
pub const EQUIVALENCE_TOL: f64 = 1e-12;
/// Absolute slack on deterministic bounds.
pub const DETERMINISTIC_SLACK: f64 = 1e-9;
/// Standard errors allowed above expectation bounds.
pub const SE_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundReport {
    pub checks: Vec<(String, BoundCheck)>,
    /// Policies without a bound to check, or that could not be run.
    pub notes: Vec<(String, String)>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, c)| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,check,measured,bound,slack,status\n");
        for (label, c) in &self.checks {
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{}",
                c.name,
                fmt_f(c.measured),
                fmt_f(c.bound),
                fmt_f(c.slack()),
                if c.passed { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

fn mean_check(name: &str, samples: &[f64], bound: f64) -> BoundCheck {
    let (m, se) = mean_se(samples);
    BoundCheck::new(name, m, bound + SE_MULTIPLIER * se)
}

/// Runs each policy over the configured seeds and compares the measured
/// quantity behind its guarantee with the closed-form bound.
pub fn check_bounds(config: &ExperimentConfig) -> Result<BoundReport> {
    config.validate()?;
    let prep = Prepared::new(config)?;
    let mut report = BoundReport::default();
    for pc in &config.policies {
        let label = pc.label();
        let schedule = match build_schedule(&prep.problem, &prep.x1, pc, config.k, config.batch) {
            Ok(s) => s,
            Err(e) => {
                report.notes.push((label, e.to_string()));
                continue;
            }
        };
        let validation = validate(&schedule, config.k);
        if !validation.passed() {
            let worst = validation.failures().map(|f| f.worst_excess).fold(f64::NEG_INFINITY, f64::max);
            report.checks.push((label.clone(), BoundCheck::new("schedule_validation", worst, 0.0)));
            report.notes.push((label, "schedule validation failed; bound check skipped".into()));
            continue;
        }
        match policy_checks(config, &prep, pc, &schedule) {
            Ok(checks) if checks.is_empty() => report.notes.push((label, "no bound applies".into())),
            Ok(checks) => report.checks.extend(checks.into_iter().map(|c| (label.clone(), c))),
            Err(e) => report.notes.push((label, e.to_string())),
        }
    }
    let path = config.output.join("bounds.csv");
    write_atomic(&path, &report.to_csv())?;
    Ok(report)
}

fn policy_checks(
    config: &ExperimentConfig,
    prep: &Prepared,
    pc: &PolicyConfig,
    schedule: &Schedule,
) -> Result<Vec<BoundCheck>> {
    let problem = &prep.problem;
    let k = config.k;
    let x1 = &prep.x1;
    let inputs = schedule.inputs;
    let (l, mu) = (inputs.lipschitz, inputs.mu);
    let sigma = problem.constants.sigma;
    let l_omega = problem.geometry.l_omega();
    let v1 = || prep.v1().ok_or(Error::MissingSolution);
    let dist = |x: &Point| -> Result<f64> {
        problem.geometry.bregman(x, prep.solution.as_ref().ok_or(Error::MissingSolution)?)
    };
    let weak = WeakGapOracle::new(problem).ok();
    let inner_tol = config.metrics.inner_tol;
    // Exact weak gap for affine problems, its surrogate otherwise.
    let gap = |x: &Point| -> Result<(f64, &'static str)> {
        match &weak {
            Some(o) => Ok((o.solve(x, inner_tol)?.value, "")),
            None => Ok((gap_surrogate(problem, x)?, "_surrogate")),
        }
    };

    let seeds: &[u64] = if schedule.policy.engine() == Engine::Oe { &config.seeds[..1] } else { &config.seeds };
    let trajs: Vec<Trajectory> = with_workers(config.resolved_workers(), || {
        map_slice(Execution::default(), seeds, |&seed| {
            let opts = run_options(problem, pc, false, Execution::Sequential);
            run_policy(problem, schedule, x1, k, seed, &opts)
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut checks = Vec::new();
    match schedule.policy {
        PolicyName::OeGsmvi => {
            let traj = &trajs[0];
            let v1 = v1()?;
            let mut worst: Option<BoundCheck> = None;
            for t in 1..=k {
                let c = BoundCheck::new(
                    "oe_linear_rate",
                    dist(traj.iterate(t + 1)?)?,
                    bounds::oe_linear(l, mu, t, v1) + DETERMINISTIC_SLACK,
                );
                if worst.as_ref().is_none_or(|w| c.slack() < w.slack()) {
                    worst = Some(c);
                }
            }
            checks.extend(worst);
        }
        PolicyName::OeGmvi => {
            let traj = &trajs[0];
            let v1 = v1()?;
            let moved: f64 = traj.movement_sq.iter().sum();
            checks.push(BoundCheck::new("oe_movement", moved, bounds::oe_movement(v1) + DETERMINISTIC_SLACK));
            let (r, _) = select_best_movement(traj)?;
            let cert = metrics::residual_certificate(traj, r, problem)?;
            checks.push(BoundCheck::new("oe_residual", cert, bounds::oe_residual(l, l_omega, v1, k)));
        }
        PolicyName::OeMvi => {
            let traj = &trajs[0];
            let avg = crate::solvers::weighted_average(traj, AverageMode::GammaTheta)?;
            let (g, suffix) = gap(&avg)?;
            let bound = bounds::oe_gap(l, k, problem.set.max_bregman_from(x1)?) + 2.0 * inner_tol;
            checks.push(BoundCheck::new(format!("oe_gap{suffix}"), g, bound));
        }
        PolicyName::SoeDecreasing => {
            let vals = trajs.iter().map(|t| dist(t.last())).collect::<Result<Vec<_>>>()?;
            checks.push(mean_check("soe_decreasing_distance", &vals, bounds::soe_decreasing(l, mu, sigma, v1()?, k)));
        }
        PolicyName::SoeConstant => {
            let q = schedule.constant_policy().map_or(1.0, |c| c.q);
            let vals = trajs.iter().map(|t| dist(t.last())).collect::<Result<Vec<_>>>()?;
            checks.push(mean_check("soe_constant_distance", &vals, bounds::soe_constant(l, mu, sigma, v1()?, k, q)));
        }
        PolicyName::SoeRestart => {
            let plan = schedule.restart_plan().ok_or_else(|| invalid("restart plan missing"))?;
            let v1 = v1()?;
            let mut s = 1;
            while plan.epoch_end(s) <= k {
                let end = plan.epoch_end(s);
                let vals = trajs.iter().map(|t| dist(t.iterate(end + 1)?)).collect::<Result<Vec<_>>>()?;
                checks.push(mean_check(&format!("soe_restart_epoch_{s}"), &vals, bounds::soe_restart(v1, s)));
                s += 1;
            }
        }
        PolicyName::SoeGmvi => {
            let vals = trajs
                .iter()
                .map(|t| {
                    let (r, _) = select_uniform_r(t, t.seed)?;
                    Ok(metrics::residual_certificate(t, r, problem)?.powi(2))
                })
                .collect::<Result<Vec<_>>>()?;
            checks.push(mean_check("soe_gmvi_residual_sq", &vals, bounds::soe_residual_sq(l, l_omega, sigma, v1()?, k)));
        }
        PolicyName::SoeMvi => {
            let d_x = problem.set.bregman_diameter()?;
            let mut suffix = "";
            let vals = trajs
                .iter()
                .map(|t| {
                    let (g, s) = gap(&crate::solvers::weighted_average(t, AverageMode::TailGamma)?)?;
                    suffix = s;
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()?;
            checks.push(mean_check(&format!("soe_mvi_gap{suffix}"), &vals, bounds::soe_gap(l, sigma, d_x, k)));
        }
        PolicyName::SboeGsmvi => {
            let f1 = problem.exact(x1)?;
            let x_star = prep.solution.as_ref().ok_or(Error::MissingSolution)?;
            let inner = f1.dot(&(x1 - x_star));
            let gamma = schedule.params(1).gamma;
            let vals = trajs.iter().map(|t| dist(t.last())).collect::<Result<Vec<_>>>()?;
            let bound = bounds::sboe_linear(mu, gamma, inputs.blocks, k, v1()?, inner);
            checks.push(mean_check("sboe_linear_rate", &vals, bound));
        }
        PolicyName::SboeMvi => {
            let b = inputs.blocks;
            let lbar = inputs.block_lipschitz.unwrap_or(l);
            let f1 = problem.exact(x1)?;
            let max_term = max_quadratic_linear(
                &problem.set,
                x1,
                &f1,
                5.0 * (b as f64 + 1.0),
                (b as f64 - 1.0) / (4.0 * lbar * b as f64),
            )?;
            let mut suffix = "";
            let vals = trajs
                .iter()
                .map(|t| {
                    let (g, s) = gap(&crate::solvers::weighted_average(t, AverageMode::Block { b })?)?;
                    suffix = s;
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()?;
            checks.push(mean_check(&format!("sboe_mvi_gap{suffix}"), &vals, bounds::sboe_gap(lbar, b, k, max_term)));
        }
        PolicyName::SaClassic => {}
    }

    // Without noise the stochastic engine must reproduce the deterministic one.
    if schedule.policy.engine() == Engine::Soe && sigma == 0.0 {
        let opts = RunOptions { timing: false, ..RunOptions::default() };
        let det = oe_run(problem, schedule, x1, k, &opts)?;
        let diff = (1..=k + 1)
            .map(|t| Ok((trajs[0].iterate(t)? - det.iterate(t)?).amax()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(BoundCheck::new("noiseless_matches_deterministic", diff, EQUIVALENCE_TOL));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub oe_ns: f64,
    pub sboe_ns: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    /// `(setup name, results)` per setup.
    pub setups: Vec<(String, AggregateResult)>,
    pub timing: Vec<TimingRow>,
    /// Structural assertions of the suite: `(name, passed, detail)`.
    pub assertions: Vec<(String, bool, String)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.1) && self.setups.iter().all(|s| s.1.errors.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSuite {
    pub sizes: Vec<usize>,
    pub blocks: usize,
    pub d_minus: f64,
    pub instance_seed: u64,
    pub seeds: Vec<u64>,
    /// OE iteration budget; `None` picks the smallest `k` whose linear-rate
    /// bound guarantees a `1e−6` relative reduction.
    pub k: Option<usize>,
    pub cadence: usize,
    /// Iterations per timing run (`0` skips the timing table).
    pub timing_iters: usize,
    pub output: PathBuf,
    pub workers: Option<usize>,
}

impl Default for TrafficSuite {
    fn default() -> Self {
        Self {
            sizes: vec![200, 500, 1000],
            blocks: 5,
            d_minus: DEFAULT_TRAFFIC_D_MINUS,
            instance_seed: 0,
            seeds: vec![1, 2, 3],
            k: None,
            cadence: 10,
            timing_iters: 2000,
            output: PathBuf::from("results/traffic"),
            workers: None,
        }
    }
}

/// Smallest `k` with `(L/μ)(L/(L+μ))^{k−1} ≤ reduction`.
pub fn linear_rate_horizon(l: f64, mu: f64, reduction: f64) -> usize {
    let need = ((l / mu) / reduction).ln() / ((l + mu) / l).ln();
    (need.max(0.0).ceil() as usize) + 1
}

pub fn suite_traffic(s: &TrafficSuite) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for &n in &s.sizes {
        let problem = traffic_generate_with(&TrafficParams::new(n, s.blocks, s.d_minus, s.instance_seed))?;
        let (l, mu) = (problem.constants.lipschitz, problem.constants.mu);
        report.assertions.push((
            format!("n{n}_strongly_monotone_ill_conditioned"),
            mu > 0.0 && l / mu > 100.0,
            format!("L = {l:.6e}, mu = {mu:.6e}, L/mu = {:.1}", l / mu),
        ));
        let k = s.k.unwrap_or_else(|| linear_rate_horizon(l, mu, 1e-6));
        let prep = Prepared::from_problem(problem, &StartRule::default(), None)?;
        let dir = s.output.join(format!("n{n}"));
        let mut cfg = ExperimentConfig::new(
            ProblemConfig::Traffic { n, blocks: s.blocks, d_minus: s.d_minus, seed: s.instance_seed, noise_sigma: None },
            vec![PolicyConfig::new(PolicyName::OeGsmvi)],
            k,
            s.seeds[..1].to_vec(),
        );
        cfg.cadence = s.cadence;
        cfg.metrics = MetricSelection::distance_only();
        cfg.output = dir.clone();
        cfg.workers = s.workers;
        let oe = run_prepared(&cfg, &prep)?;
        if let (Some(agg), Some(v1)) = (oe.policies.first(), prep.v1()) {
            let last = agg.final_value("V_to_solution").map_or(f64::NAN, |v| v.0);
            report.assertions.push((
                format!("n{n}_oe_reduction"),
                last < 1e-6 * v1,
                format!("V(x_k+1) = {last:.3e} after k = {k}, 1e-6 V1 = {:.3e}", 1e-6 * v1),
            ));
        }
        report.setups.push((format!("n{n}_oe"), oe));

        // Same number of block evaluations as OE's full evaluations.
        cfg.policies = vec![PolicyConfig::new(PolicyName::SboeGsmvi)];
        cfg.k = k * s.blocks;
        cfg.cadence = s.cadence * s.blocks;
        cfg.seeds = s.seeds.clone();
        report.setups.push((format!("n{n}_sboe"), run_prepared(&cfg, &prep)?));

        if s.timing_iters > 0 {
            report.timing.push(time_oe_vs_sboe(&prep, s.timing_iters)?);
        }
    }
    if !report.timing.is_empty() {
        let mut text = String::from("n,oe_ns_per_iter,sboe_ns_per_iter\n");
        for r in &report.timing {
            let _ = writeln!(text, "{},{:.1},{:.1}", r.n, r.oe_ns, r.sboe_ns);
        }
        write_atomic(&s.output.join("timing.csv"), &text)?;
        let largest = report.timing.iter().max_by_key(|r| r.n).unwrap();
        report.assertions.push((
            "sboe_faster_per_iteration_at_largest_size".into(),
            largest.sboe_ns < largest.oe_ns,
            format!("n = {}: OE {:.0} ns, SBOE {:.0} ns", largest.n, largest.oe_ns, largest.sboe_ns),
        ));
    }
    Ok(report)
}

/// Mean per-iteration wall time of OE and recursive SBOE, warm-up excluded.
pub fn time_oe_vs_sboe(prep: &Prepared, iters: usize) -> Result<TimingRow> {
    let problem = &prep.problem;
    let time = |pc: PolicyConfig| -> Result<f64> {
        let schedule = build_schedule(problem, &prep.x1, &pc, iters, None)?;
        let opts = RunOptions { keep_iterates: false, timing: true, ..run_options(problem, &pc, true, Execution::Sequential) };
        let traj = run_policy(problem, &schedule, &prep.x1, iters, 0, &opts)?;
        traj.mean_step_ns(TIMING_WARMUP).ok_or_else(|| invalid("too few iterations to time"))
    };
    Ok(TimingRow {
        n: problem.dim(),
        oe_ns: time(PolicyConfig::new(PolicyName::OeGsmvi))?,
        sboe_ns: time(PolicyConfig::new(PolicyName::SboeGsmvi))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmSuiteKind {
    Hinge,
    Ramp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSuite {
    pub kind: GlmSuiteKind,
    pub n: usize,
    pub instance_seed: u64,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub cadence: usize,
    pub output: PathBuf,
    pub workers: Option<usize>,
    /// Scales every mini-batch size (1 = the full-size setups).
    pub batch_scale: f64,
}

impl GlmSuite {
    pub fn new(kind: GlmSuiteKind) -> Self {
        let name = match kind {
            GlmSuiteKind::Hinge => "glm_hinge",
            GlmSuiteKind::Ramp => "glm_ramp",
        };
        Self {
            kind,
            n: 100,
            instance_seed: 0,
            seeds: vec![1, 2, 3],
            k: 500,
            cadence: 10,
            output: PathBuf::from("results").join(name),
            workers: None,
            batch_scale: 1.0,
        }
    }
}

struct GlmSetup {
    name: String,
    params: GlmParams,
    batch: usize,
    policies: Vec<PolicyName>,
    /// Assert that SOE-1 ends below SA on this setup.
    soe1_below_sa: bool,
}

fn glm_setups(s: &GlmSuite) -> Vec<GlmSetup> {
    use PolicyName::*;
    let base = |link, d_minus, radius, sigma_y| GlmParams { n: s.n, link, d_minus, radius, sigma_y, seed: s.instance_seed };
    let scaled = |m: usize| ((m as f64 * s.batch_scale).round() as usize).max(1);
    match s.kind {
        GlmSuiteKind::Hinge => {
            let mut v: Vec<GlmSetup> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&d| GlmSetup {
                    name: format!("m100_dminus{d:.0e}"),
                    params: base(Link::Hinge, d, 100.0, 1.0),
                    batch: scaled(100),
                    policies: vec![SaClassic, SoeDecreasing, SoeConstant, SoeRestart, SoeGmvi],
                    soe1_below_sa: d < 5e-3,
                })
                .collect();
            v.extend([1e-1, 1e-2, 1e-3].iter().map(|&d| GlmSetup {
                name: format!("m1000_dminus{d:.0e}"),
                params: base(Link::Hinge, d, 100.0, 0.1),
                batch: scaled(1000),
                policies: vec![SaClassic, SoeDecreasing, SoeRestart],
                soe1_below_sa: false,
            }));
            v
        }
        GlmSuiteKind::Ramp => [2.0, 4.0, 10.0]
            .iter()
            .map(|&r| GlmSetup {
                name: format!("R{r}"),
                params: base(Link::RampSigmoid, 1.0, r, 0.1),
                batch: scaled(1000),
                policies: vec![SaClassic, SoeDecreasing, SoeConstant, SoeRestart, SoeGmvi],
                soe1_below_sa: false,
            })
            .collect(),
    }
}

pub fn suite_glm(s: &GlmSuite) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let mut mus = Vec::new();
    for setup in glm_setups(s) {
        let problem = glm_generate(&setup.params)?;
        mus.push((setup.params.radius, problem.constants.mu));
        let prep = Prepared::from_problem(problem, &StartRule::default(), None)?;
        let mut cfg = ExperimentConfig::new(
            ProblemConfig::Glm {
                link: setup.params.link,
                n: setup.params.n,
                d_minus: setup.params.d_minus,
                radius: setup.params.radius,
                sigma_y: setup.params.sigma_y,
                seed: setup.params.seed,
            },
            setup.policies.iter().map(|&p| PolicyConfig::new(p)).collect(),
            s.k,
            s.seeds.clone(),
        );
        cfg.batch = Some(setup.batch);
        cfg.cadence = s.cadence;
        cfg.metrics = MetricSelection::distance_only();
        cfg.output = s.output.join(&setup.name);
        cfg.workers = s.workers;
        let res = run_prepared(&cfg, &prep)?;
        if setup.soe1_below_sa {
            let final_v = |label: &str| res.policy(label).and_then(|p| p.final_value("V_to_solution")).map(|v| v.0);
            if let (Some(soe), Some(sa)) = (final_v("SOE-1"), final_v("SA")) {
                report.assertions.push((
                    format!("{}_soe1_below_sa", setup.name),
                    soe < sa,
                    format!("SOE-1 {soe:.6e} vs SA {sa:.6e}"),
                ));
            }
        }
        report.setups.push((setup.name, res));
    }
    if s.kind == GlmSuiteKind::Ramp {
        let ok = mus.iter().all(|m| m.1 > 0.0) && mus.windows(2).all(|w| w[1].1 < w[0].1);
        report.assertions.push(("ramp_mu_positive_and_decreasing_in_radius".into(), ok, format!("{mus:?}")));
    }
    Ok(report)
}
