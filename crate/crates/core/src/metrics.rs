//! Quality measures (distance, residual, gap) and the closed-form
//! convergence bounds they are compared against.

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{linear_minimize, FeasibleSet, Point, ProxGeometry};
use crate::problems::{lambda_max_sym, AffineSpec, VIProblem};
use crate::solvers::Trajectory;

/// Values within this distance below zero are rounding and clamp to zero.
pub const CLAMP_TOL: f64 = 1e-12;
pub const DEFAULT_INNER_TOL: f64 = 1e-8;
pub const INNER_MAX_ITERS: usize = 100_000;

fn clamp_gap(v: f64) -> f64 {
    if v < 0.0 && v >= -CLAMP_TOL {
        0.0
    } else {
        v
    }
}

pub fn distance_metric(geom: &ProxGeometry, x: &Point, x_star: Option<&Point>) -> Result<f64> {
    geom.bregman(x, x_star.ok_or(Error::MissingSolution)?)
}

/// Distance from `−F(x)` to the normal cone at `x`; closed form for the full
/// space and balls.
pub fn residual_exact(set: &FeasibleSet, x: &Point, fx: &Point) -> Result<f64> {
    check_dim(set.dim(), x.len())?;
    check_dim(set.dim(), fx.len())?;
    match set {
        FeasibleSet::FullSpace { .. } => Ok(fx.norm()),
        FeasibleSet::Ball { center, radius } => {
            let d = x - center;
            let dist = d.norm();
            if dist < radius - 1e-9 {
                return Ok(fx.norm());
            }
            let u = d / dist;
            let inward = (-fx.dot(&u)).max(0.0);
            Ok((fx.norm_squared() - inward * inward).max(0.0).sqrt())
        }
        _ => Err(Error::UnsupportedSet("residual_exact")),
    }
}

/// `‖δ_t‖` with
/// `δ_t = F̂(x_t) − F(x_{t+1}) + λ_t(F̂(x_t) − F̂(x_{t−1})) + (x_{t+1} − x_t)/γ_t`,
/// where `F̂` are the operator values the run used (sampled for stochastic
/// runs). Bounds the residual at `x_{t+1}` from above.
pub fn residual_certificate(traj: &Trajectory, t: usize, problem: &VIProblem) -> Result<f64> {
    if !traj.blocks.is_empty() {
        return Err(invalid("block-coordinate trajectories have no full-step certificate"));
    }
    if t == 0 || t > traj.k {
        return Err(invalid(format!("certificate index {t} outside 1..={}", traj.k)));
    }
    let x_next = traj.iterate(t + 1)?;
    let f_next = problem.exact(x_next)?;
    certificate_from(
        traj.operator_value(t)?,
        traj.operator_value(t - 1)?,
        &f_next,
        traj.iterate(t)?,
        x_next,
        traj.step(t)?.gamma,
        traj.step(t)?.lambda,
    )
}

/// Certificate from raw ingredients (for callers that stream the run).
pub fn certificate_from(
    f_t: &Point,
    f_prev: &Point,
    f_next: &Point,
    x_t: &Point,
    x_next: &Point,
    gamma: f64,
    lambda: f64,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(invalid("stepsize must be positive"));
    }
    let delta = f_t - f_next + (f_t - f_prev) * lambda + (x_next - x_t) / gamma;
    Ok(delta.norm())
}

/// `max_{x∈X} ⟨F(x̄), x̄ − x⟩`, an upper bound on the weak gap for monotone `F`.
pub fn gap_surrogate(problem: &VIProblem, x_bar: &Point) -> Result<f64> {
    if !problem.set.is_bounded() {
        return Err(Error::Unbounded);
    }
    let f = problem.exact(x_bar)?;
    let y = linear_minimize(&problem.set, &f)?;
    Ok(clamp_gap(f.dot(&(x_bar - y))))
}

/// Inner solver for `max_{x∈X} ⟨Gx + b, x̄ − x⟩`, reusable across evaluations.
#[derive(Debug, Clone)]
pub struct WeakGapOracle<'a> {
    spec: &'a AffineSpec,
    set: &'a FeasibleSet,
    sym: nalgebra::DMatrix<f64>,
    /// `λ_max(G + Gᵀ)`; zero means the objective is linear.
    curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakGap {
    /// Objective value at the returned maximiser (clamped at zero).
    pub value: f64,
    /// Certified upper bound: value plus the Frank–Wolfe duality gap.
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<'a> WeakGapOracle<'a> {
    pub fn new(problem: &'a VIProblem) -> Result<Self> {
        let spec = problem.affine_spec().ok_or_else(|| invalid("weak gap needs an affine operator"))?;
        if !problem.set.is_bounded() {
            return Err(Error::Unbounded);
        }
        let sym = &spec.g + spec.g.transpose();
        let eig = sym.symmetric_eigenvalues();
        let scale = spec.g.norm().max(f64::MIN_POSITIVE);
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo < -1e-10 * scale {
            return Err(invalid("G + Gᵀ is indefinite; the inner problem is not concave"));
        }
        let hi = lambda_max_sym(&sym);
        let curvature = if hi <= 1e-12 * scale { 0.0 } else { hi };
        Ok(Self { spec, set: &problem.set, sym, curvature })
    }

    fn objective(&self, x_bar: &Point, x: &Point) -> f64 {
        (&self.spec.g * x + &self.spec.b).dot(&(x_bar - x))
    }

    /// `∇φ(x) = Gᵀx̄ − (G + Gᵀ)x − b`
    fn gradient(&self, gt_xbar: &Point, x: &Point) -> Point {
        gt_xbar - &self.sym * x - &self.spec.b
    }

    pub fn solve(&self, x_bar: &Point, inner_tol: f64) -> Result<WeakGap> {
        check_dim(self.set.dim(), x_bar.len())?;
        let gt_xbar = self.spec.g.transpose() * x_bar;
        // FW certificate: φ* ≤ φ(x) + max_y ⟨∇φ(x), y − x⟩
        let fw = |x: &Point, grad: &Point| -> Result<f64> {
            let y = linear_minimize(self.set, &(-grad))?;
            Ok(grad.dot(&(y - x)).max(0.0))
        };
        if self.curvature == 0.0 {
            let grad = self.gradient(&gt_xbar, x_bar);
            let y = linear_minimize(self.set, &(-&grad))?;
            let value = clamp_gap(self.objective(x_bar, &y)).max(0.0);
            return Ok(WeakGap { value, upper: value, iterations: 0, converged: true });
        }
        let step = 1.0 / self.curvature;
        let mut x = self.set.project(x_bar)?;
        for it in 0..INNER_MAX_ITERS {
            let grad = self.gradient(&gt_xbar, &x);
            let gap = fw(&x, &grad)?;
            if gap <= inner_tol {
                let value = clamp_gap(self.objective(x_bar, &x)).max(0.0);
                return Ok(WeakGap { value, upper: value + gap, iterations: it, converged: true });
            }
            let mut next = &x + grad * step;
            self.set.project_range_into(0..next.len(), &mut next)?;
            x = next;
        }
        let grad = self.gradient(&gt_xbar, &x);
        let gap = fw(&x, &grad)?;
        let value = clamp_gap(self.objective(x_bar, &x)).max(0.0);
        Ok(WeakGap { value, upper: value + gap, iterations: INNER_MAX_ITERS, converged: false })
    }
}

/// `max_{x∈X} ⟨Gx + b, x̄ − x⟩` for monotone affine `F`.
pub fn weak_gap_exact_affine(problem: &VIProblem, x_bar: &Point, inner_tol: f64) -> Result<f64> {
    let out = WeakGapOracle::new(problem)?.solve(x_bar, inner_tol)?;
    if !out.converged {
        return Err(Error::NonConvergence { iterations: out.iterations });
    }
    Ok(out.value)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricRecord {
    pub t: usize,
    pub v_to_solution: Option<f64>,
    pub residual_exact: Option<f64>,
    pub residual_certificate: Option<f64>,
    pub gap_surrogate: Option<f64>,
    pub weak_gap_exact: Option<f64>,
    pub movement_sq: Option<f64>,
    pub oracle_calls: u64,
    pub wall_time_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, bound, passed: measured <= bound }
    }

    pub fn slack(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub records: Vec<MetricRecord>,
    pub bounds: Vec<BoundCheck>,
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

pub mod bounds {
    /// `V(x_{k+1}, x*) ≤ (L/μ)(L/(L+μ))^{k−1} V(x₁, x*)`
    pub fn oe_linear(l: f64, mu: f64, k: usize, v1: f64) -> f64 {
        (l / mu) * ((k as f64 - 1.0) * (l / (l + mu)).ln()).exp() * v1
    }

    /// Total squared movement of the constant `1/(3L)` policy.
    pub fn oe_movement(v1: f64) -> f64 {
        6.0 * v1
    }

    pub fn oe_residual(l: f64, l_omega: f64, v1: f64, k: usize) -> f64 {
        4.0 * l * (2.0 + 3.0 * l_omega) * (3.0 * v1).sqrt() / (k as f64).sqrt()
    }

    pub fn oe_gap(l: f64, k: usize, max_v: f64) -> f64 {
        2.0 * l / k as f64 * max_v
    }

    pub fn soe_decreasing(l: f64, mu: f64, sigma: f64, v1: f64, k: usize) -> f64 {
        let t0 = 4.0 * l / mu;
        let k = k as f64;
        let den = (k + t0 + 1.0) * (k + t0);
        2.0 * (t0 + 1.0) * (t0 + 2.0) * v1 / den + 8.0 * (4.0 * k + 1.0) * sigma * sigma / (mu * mu * den)
    }

    pub fn soe_constant(l: f64, mu: f64, sigma: f64, v1: f64, k: usize, q: f64) -> f64 {
        let kf = k as f64;
        let lk = kf.ln();
        let s2 = sigma * sigma;
        2.0 * (-kf * (1.0 + mu / (2.0 * l)).ln()).exp() * v1
            + (2.0 + 8.0 * q * lk) * s2 / (mu * mu * kf)
            + 4.0 * q * q * lk * lk * s2 / (mu * mu * kf * kf)
    }

    pub fn soe_restart(v1: f64, s: usize) -> f64 {
        v1 * 0.5f64.powi(s as i32)
    }

    /// Expected squared residual of the uniformly selected output.
    pub fn soe_residual_sq(l: f64, l_omega: f64, sigma: f64, v1: f64, k: usize) -> f64 {
        let kf = k as f64;
        let s2 = sigma * sigma;
        20.0 * s2 / (kf + 1.0)
            + 32.0 * ((l + 4.0 * l * l_omega).powi(2) + l * l) * (2.0 * v1 + s2 / (l * l)) / (kf - 1.0)
    }

    pub fn soe_gap(l: f64, sigma: f64, d_x: f64, k: usize) -> f64 {
        let kf = k as f64;
        let r = sigma * sigma / (l * l);
        2.0 * l / (kf + 1.0).sqrt() * (4.5 * 5f64.ln() * r + 3.75 * d_x + 7.0 / kf * r)
    }

    /// `inner_product = ⟨F(x₁), x₁ − x*⟩`
    pub fn sboe_linear(mu: f64, gamma: f64, b: usize, k: usize, v1: f64, inner_product: f64) -> f64 {
        let bf = b as f64;
        let ratio = (1.0 + 2.0 * mu * (bf - 1.0) / bf * gamma) / (1.0 + 2.0 * mu * gamma);
        2.0 * (k as f64 * ratio.ln()).exp() * (v1 + (bf - 1.0) / bf * gamma * inner_product)
    }

    /// `max_term = max_x [5(b+1)V(x₁,x) + ((b−1)/(4L̄b))⟨F(x₁), x₁ − x⟩]`
    pub fn sboe_gap(lbar: f64, b: usize, k: usize, max_term: f64) -> f64 {
        let bf = b as f64;
        4.0 * lbar * bf / (k as f64 - 1.0 + bf) * max_term
    }
}

/// `max_{x∈X} [a·½‖x₁ − x‖² + c⟨f, x₁ − x⟩]` for `a ≥ 0`; the objective is
/// convex, so the maximum sits at an extreme point.
pub fn max_quadratic_linear(set: &FeasibleSet, x1: &Point, f: &Point, a: f64, c: f64) -> Result<f64> {
    check_dim(set.dim(), x1.len())?;
    check_dim(set.dim(), f.len())?;
    match set {
        FeasibleSet::SimplexProduct { demands, .. } => {
            let mut total = 0.0;
            for (r, &d) in set.simplex_ranges().zip(demands) {
                let blk = x1.rows(r.start, r.len());
                let fb = f.rows(r.start, r.len());
                let base = blk.norm_squared();
                let fx = fb.dot(&blk);
                let best = r
                    .clone()
                    .map(|j| a * 0.5 * (base - 2.0 * d * x1[j] + d * d) + c * (fx - d * f[j]))
                    .fold(f64::NEG_INFINITY, f64::max);
                total += best;
            }
            Ok(total)
        }
        FeasibleSet::Box { lower, upper } => Ok((0..x1.len())
            .map(|i| {
                let at = |v: f64| a * 0.5 * (x1[i] - v).powi(2) + c * f[i] * (x1[i] - v);
                at(lower[i]).max(at(upper[i]))
            })
            .sum()),
        FeasibleSet::Ball { .. } if c == 0.0 => Ok(a * set.max_bregman_from(x1)?),
        FeasibleSet::Ball { .. } => Err(Error::UnsupportedSet("max_quadratic_linear with a linear term")),
        FeasibleSet::FullSpace { .. } => Err(Error::Unbounded),
    }
}
