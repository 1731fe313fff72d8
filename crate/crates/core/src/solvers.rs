//! Iteration engines and output rules.
//!
//! Every engine uses the convention `x₀ = x₁` (and `F(x₀) = F(x₁)`), so the
//! extrapolation term of the first step is exactly zero.

use std::time::Instant;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::par::Execution;
use crate::problems::VIProblem;
use crate::rng::{RngStream, StreamTag};
use crate::schedules::{validate, PolicyName, Schedule, ScheduleInputs, StepParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    #[default]
    Off,
    /// Validate and report failures on stderr.
    Warn,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Keep every iterate and operator value (needed by averaging and
    /// certificates); otherwise only the final iterate is stored.
    pub keep_iterates: bool,
    /// SBOE on affine problems: update `F` through the changed block's
    /// columns instead of re-evaluating it.
    pub recursive_affine: bool,
    pub validation: ValidationMode,
    pub exec: Execution,
    /// Record per-step wall time.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            keep_iterates: true,
            recursive_affine: false,
            validation: ValidationMode::Off,
            exec: Execution::Sequential,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy: PolicyName,
    pub seed: u64,
    pub k: usize,
    /// `x_1, …, x_{k+1}` when kept, otherwise just `x_{k+1}`.
    pub iterates: Vec<Point>,
    /// Operator value used at step `t` (`F(x_t)` or its estimate), `t = 1..k`, when kept.
    pub operator_values: Vec<Point>,
    /// `‖x_{t+1} − x_t‖²`, `t = 1..k`.
    pub movement_sq: Vec<f64>,
    /// `(γ_t, λ_t, θ_t)`, `t = 1..k`.
    pub params: Vec<StepParams>,
    pub step_ns: Vec<u64>,
    /// Sampled block per step (SBOE only).
    pub blocks: Vec<usize>,
    /// Cumulative oracle calls after step `t`.
    pub oracle_calls: Vec<u64>,
    pub exact_evals: u64,
    pub block_updates: u64,
    pub stochastic: bool,
}

impl Trajectory {
    fn new(policy: PolicyName, seed: u64, k: usize, x1: &Point, keep: bool, stochastic: bool) -> Self {
        let mut iterates = Vec::with_capacity(if keep { k + 1 } else { 1 });
        iterates.push(x1.clone());
        Self {
            policy,
            seed,
            k,
            iterates,
            operator_values: Vec::new(),
            movement_sq: Vec::with_capacity(k),
            params: Vec::with_capacity(k),
            step_ns: Vec::new(),
            blocks: Vec::new(),
            oracle_calls: Vec::with_capacity(k),
            exact_evals: 0,
            block_updates: 0,
            stochastic,
        }
    }

    pub fn has_iterates(&self) -> bool {
        self.iterates.len() == self.k + 1
    }

    pub fn last(&self) -> &Point {
        self.iterates.last().expect("trajectory holds at least one point")
    }

    /// `x_t` for `t ∈ [0, k+1]`, with `x₀ = x₁`.
    pub fn iterate(&self, t: usize) -> Result<&Point> {
        if !self.has_iterates() {
            return Err(Error::Trajectory("iterates were not kept".into()));
        }
        if t > self.k + 1 {
            return Err(invalid(format!("iterate index {t} outside 0..={}", self.k + 1)));
        }
        Ok(&self.iterates[t.max(1) - 1])
    }

    /// Operator value used at step `t ∈ [0, k]`, with `F(x₀) = F(x₁)`.
    pub fn operator_value(&self, t: usize) -> Result<&Point> {
        if self.operator_values.len() != self.k {
            return Err(Error::Trajectory("operator values were not kept".into()));
        }
        if t > self.k {
            return Err(invalid(format!("step index {t} outside 0..={}", self.k)));
        }
        Ok(&self.operator_values[t.max(1) - 1])
    }

    /// `(γ_t, λ_t, θ_t)` for `t ∈ [1, k]`.
    pub fn step(&self, t: usize) -> Result<StepParams> {
        if t == 0 || t > self.k {
            return Err(invalid(format!("step index {t} outside 1..={}", self.k)));
        }
        Ok(self.params[t - 1])
    }

    pub fn total_oracle_calls(&self) -> u64 {
        self.oracle_calls.last().copied().unwrap_or(0)
    }

    /// Mean wall time per step, skipping the first `warmup` steps.
    pub fn mean_step_ns(&self, warmup: usize) -> Option<f64> {
        let tail = self.step_ns.get(warmup..)?;
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().map(|&v| v as f64).sum::<f64>() / tail.len() as f64)
    }

    fn record(&mut self, keep: bool, x_next: &Point, x_cur: &Point, value: Option<&Point>, p: StepParams) {
        self.movement_sq.push((x_next - x_cur).norm_squared());
        self.params.push(p);
        if keep {
            self.iterates.push(x_next.clone());
            if let Some(v) = value {
                self.operator_values.push(v.clone());
            }
        } else {
            self.iterates[0].copy_from(x_next);
        }
    }
}

fn prepare(problem: &VIProblem, schedule: &Schedule, x1: &Point, k: usize, opts: &RunOptions) -> Result<()> {
    if k == 0 {
        return Err(invalid("iteration budget k must be at least 1"));
    }
    if !problem.set.contains(x1) {
        return Err(Error::NotFeasible);
    }
    if opts.validation != ValidationMode::Off {
        let report = validate(schedule, k);
        if !report.passed() {
            match opts.validation {
                ValidationMode::Fail => return Err(Error::ScheduleValidation(report.to_string())),
                _ => eprintln!("warning: {report}"),
            }
        }
    }
    Ok(())
}

fn timer(on: bool) -> Option<Instant> {
    on.then(Instant::now)
}

fn elapsed(start: Option<Instant>, out: &mut Vec<u64>) {
    if let Some(s) = start {
        out.push(s.elapsed().as_nanos() as u64);
    }
}

/// Deterministic operator extrapolation: one exact evaluation and one prox
/// step per iteration.
pub fn oe_run(problem: &VIProblem, schedule: &Schedule, x1: &Point, k: usize, opts: &RunOptions) -> Result<Trajectory> {
    prepare(problem, schedule, x1, k, opts)?;
    let set = &problem.set;
    let mut traj = Trajectory::new(schedule.policy, 0, k, x1, opts.keep_iterates, false);
    let mut x = x1.clone();
    let mut f_prev: Option<Point> = None;
    for t in 1..=k {
        let start = timer(opts.timing);
        let p = schedule.params(t);
        let f = problem.exact(&x)?;
        traj.exact_evals += 1;
        let mut next = match &f_prev {
            Some(fp) => &x - (&f + (&f - fp) * p.lambda) * p.gamma,
            None => &x - &f * p.gamma,
        };
        set.project_range_into(0..next.len(), &mut next)?;
        elapsed(start, &mut traj.step_ns);
        traj.oracle_calls.push(traj.exact_evals);
        traj.record(opts.keep_iterates, &next, &x, Some(&f), p);
        f_prev = Some(f);
        x = next;
    }
    Ok(traj)
}

/// Stochastic operator extrapolation. The estimate at `x_{t−1}` is the one
/// drawn at step `t − 1`; it is never re-sampled.
pub fn soe_run(
    problem: &VIProblem,
    schedule: &Schedule,
    x1: &Point,
    k: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if !problem.has_oracle() {
        return Err(Error::MissingOracle);
    }
    prepare(problem, schedule, x1, k, opts)?;
    let set = &problem.set;
    let stream = RngStream::new(seed, StreamTag::Oracle);
    let mut traj = Trajectory::new(schedule.policy, seed, k, x1, opts.keep_iterates, true);
    let mut calls = 0u64;
    let mut x = x1.clone();
    let mut f_prev: Option<Point> = None;
    for t in 1..=k {
        let start = timer(opts.timing);
        let p = schedule.params(t);
        let m = schedule.batch_size(t);
        let f = problem.minibatch(&x, m, &stream, t as u64, opts.exec)?;
        calls += m as u64;
        let mut next = match &f_prev {
            Some(fp) if p.lambda != 0.0 => &x - (&f + (&f - fp) * p.lambda) * p.gamma,
            _ => &x - &f * p.gamma,
        };
        set.project_range_into(0..next.len(), &mut next)?;
        elapsed(start, &mut traj.step_ns);
        traj.oracle_calls.push(calls);
        traj.record(opts.keep_iterates, &next, &x, Some(&f), p);
        f_prev = Some(f);
        x = next;
    }
    Ok(traj)
}

/// Stochastic block operator extrapolation with uniform block sampling.
pub fn sboe_run(
    problem: &VIProblem,
    schedule: &Schedule,
    x1: &Point,
    k: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let ranges = problem
        .block_ranges()
        .ok_or_else(|| Error::IncompatiblePartition("problem has no block partition".into()))?;
    problem.set.check_partition(&ranges)?;
    if schedule.inputs.blocks != ranges.len() {
        return Err(Error::IncompatiblePartition(format!(
            "schedule assumes {} blocks, problem has {}",
            schedule.inputs.blocks,
            ranges.len()
        )));
    }
    let affine = match (opts.recursive_affine, problem.affine_spec()) {
        (false, _) => None,
        (true, Some(spec)) => Some(spec),
        (true, None) => return Err(invalid("recursive updates need an affine operator")),
    };
    prepare(problem, schedule, x1, k, opts)?;
    let set = &problem.set;
    let geom = problem.geometry;
    let b = ranges.len();
    let blocks = RngStream::new(seed, StreamTag::Blocks);
    let mut traj = Trajectory::new(schedule.policy, seed, k, x1, opts.keep_iterates, false);
    let mut x = x1.clone();
    let mut next = x1.clone();
    // F(x_t), F(x_{t−1})
    let mut f = problem.exact(&x)?;
    traj.exact_evals += 1;
    let mut f_prev = f.clone();
    let mut g_block = Vec::new();
    for t in 1..=k {
        let start = timer(opts.timing);
        let p = schedule.params(t);
        if t > 1 && affine.is_none() {
            let fresh = problem.exact(&x)?;
            traj.exact_evals += 1;
            f_prev = std::mem::replace(&mut f, fresh);
        }
        let i = blocks.at(t as u64, 0).random_range(0..b);
        let r = ranges[i].clone();
        g_block.clear();
        g_block.extend(r.clone().map(|j| f[j] + p.lambda * (f[j] - f_prev[j])));
        geom.prox_block_into(set, r.clone(), &x, &g_block, p.gamma, &mut next)?;
        if let Some(spec) = affine {
            // F(x_{t+1}) = F(x_t) + G[:, block]·Δ
            let delta = next.rows(r.start, r.len()) - x.rows(r.start, r.len());
            f_prev.copy_from(&f);
            f.gemv(1.0, &spec.g.columns(r.start, r.len()), &delta, 1.0);
            traj.block_updates += 1;
        }
        elapsed(start, &mut traj.step_ns);
        traj.blocks.push(i);
        traj.oracle_calls.push(traj.exact_evals + traj.block_updates);
        let value = if affine.is_some() { f_prev.clone() } else { f.clone() };
        traj.record(opts.keep_iterates, &next, &x, Some(&value), p);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(traj)
}

/// Stochastic approximation baseline: `x_{t+1} = Proj(x_t − γ_t F̃(x_t))` with
/// `γ_t = 1/(μ(t + 4L/μ))`.
pub fn sa_run(problem: &VIProblem, x1: &Point, k: usize, seed: u64, opts: &RunOptions) -> Result<Trajectory> {
    let c = problem.constants;
    let schedule = Schedule::new(PolicyName::SaClassic, ScheduleInputs::new(c.lipschitz, c.mu))?;
    sa_run_with(problem, &schedule, x1, k, seed, opts)
}

pub fn sa_run_with(
    problem: &VIProblem,
    schedule: &Schedule,
    x1: &Point,
    k: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if schedule.policy != PolicyName::SaClassic {
        return Err(invalid("SA runs need the SA stepsize policy"));
    }
    soe_run(problem, schedule, x1, k, seed, opts)
}

/// Dispatches on the schedule's engine.
pub fn run_policy(
    problem: &VIProblem,
    schedule: &Schedule,
    x1: &Point,
    k: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    match schedule.policy.engine() {
        crate::schedules::Engine::Oe => oe_run(problem, schedule, x1, k, opts),
        crate::schedules::Engine::Soe => soe_run(problem, schedule, x1, k, seed, opts),
        crate::schedules::Engine::Sa => sa_run_with(problem, schedule, x1, k, seed, opts),
        crate::schedules::Engine::Sboe => sboe_run(problem, schedule, x1, k, seed, opts),
    }
}

// ---------------------------------------------------------------------------
// Output rules
// ---------------------------------------------------------------------------

/// `argmin_{t=1..k} ‖x_{t+1} − x_t‖² + ‖x_t − x_{t−1}‖²`, smallest `t` on ties,
/// with `‖x_1 − x_0‖ = 0`.
pub fn best_movement_index(movement_sq: &[f64]) -> Result<usize> {
    if movement_sq.is_empty() {
        return Err(Error::Trajectory("empty trajectory".into()));
    }
    let mut best = 1;
    let mut best_val = movement_sq[0];
    for t in 2..=movement_sq.len() {
        let v = movement_sq[t - 1] + movement_sq[t - 2];
        if v < best_val {
            best = t;
            best_val = v;
        }
    }
    Ok(best)
}

pub fn select_best_movement(traj: &Trajectory) -> Result<(usize, Point)> {
    let r = best_movement_index(&traj.movement_sq)?;
    Ok((r, traj.iterate(r + 1)?.clone()))
}

/// `R` uniform on `{2, …, k}`, drawn from the run's own output stream.
pub fn uniform_index(k: usize, seed: u64) -> Result<usize> {
    if k < 2 {
        return Err(invalid("uniform output selection needs k >= 2"));
    }
    Ok(RngStream::new(seed, StreamTag::OutputIndex).at(0, 0).random_range(2..=k))
}

pub fn select_uniform_r(traj: &Trajectory, seed: u64) -> Result<(usize, Point)> {
    let r = uniform_index(traj.k, seed)?;
    Ok((r, traj.iterate(r + 1)?.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    /// weights `γ_tθ_t` on `x_{t+1}`, `t = 1..k`
    GammaTheta,
    /// weights `γ_t` on `x_{t+1}`, `t = ⌈k/2⌉..k`
    TailGamma,
    /// weights `θ_tγ_tb − θ_{t+1}γ_{t+1}(b−1)` on `x_{t+1}` for `t < k`, and
    /// `θ_kγ_kb` on `x_{k+1}`
    Block { b: usize },
}

impl AverageMode {
    pub fn for_policy(policy: PolicyName, blocks: usize) -> Option<Self> {
        match policy {
            PolicyName::OeMvi => Some(AverageMode::GammaTheta),
            PolicyName::SoeMvi => Some(AverageMode::TailGamma),
            PolicyName::SboeMvi => Some(AverageMode::Block { b: blocks }),
            _ => None,
        }
    }
}

/// Weights of `x_{t+1}` for `t = 1..=k` (zero outside the averaging window),
/// scaled so the largest `θ` is 1.
pub fn average_weights(params: &[StepParams], k: usize, mode: AverageMode) -> Result<Vec<f64>> {
    if k == 0 || k > params.len() {
        return Err(invalid(format!("cannot average {k} steps out of {}", params.len())));
    }
    let params = &params[..k];
    let max_lt = params.iter().map(|p| p.log_theta).fold(f64::NEG_INFINITY, f64::max);
    let gt = |p: &StepParams| p.gamma * (p.log_theta - max_lt).exp();
    let w: Vec<f64> = match mode {
        AverageMode::GammaTheta => params.iter().map(gt).collect(),
        AverageMode::TailGamma => {
            let start = k.div_ceil(2);
            (1..=k).map(|t| if t >= start { params[t - 1].gamma } else { 0.0 }).collect()
        }
        AverageMode::Block { b } => {
            let b = b as f64;
            (1..=k)
                .map(|t| {
                    let cur = gt(&params[t - 1]) * b;
                    if t < k {
                        cur - gt(&params[t]) * (b - 1.0)
                    } else {
                        cur
                    }
                })
                .collect()
        }
    };
    if w.iter().any(|&v| v < -1e-12 * v.abs().max(1.0)) {
        return Err(invalid("negative averaging weight"));
    }
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(invalid("averaging weights have nonpositive sum"));
    }
    Ok(w)
}

/// Weighted average of the first `k` output iterates.
pub fn weighted_average_upto(traj: &Trajectory, k: usize, mode: AverageMode) -> Result<Point> {
    let w = average_weights(&traj.params, k, mode)?;
    let total: f64 = w.iter().sum();
    let mut acc = Point::zeros(traj.last().len());
    for (t, &wt) in w.iter().enumerate() {
        if wt != 0.0 {
            acc.axpy(wt / total, traj.iterate(t + 2)?, 1.0);
        }
    }
    Ok(acc)
}

pub fn weighted_average(traj: &Trajectory, mode: AverageMode) -> Result<Point> {
    weighted_average_upto(traj, traj.k, mode)
}
