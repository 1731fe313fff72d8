//! Parameter policies `t ↦ (γ_t, λ_t, θ_t)` and a checker for the side
//! conditions each policy is meant to satisfy.
//!
//! `θ_t` grows geometrically for the strongly monotone policies, so it is
//! carried as `log θ_t`; the validator only ever looks at ratios.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    OeGsmvi,
    OeGmvi,
    OeMvi,
    SoeDecreasing,
    SoeConstant,
    SoeRestart,
    SoeGmvi,
    SoeMvi,
    SboeGsmvi,
    SboeMvi,
    SaClassic,
}

impl PolicyName {
    pub const ALL: [PolicyName; 11] = [
        PolicyName::OeGsmvi,
        PolicyName::OeGmvi,
        PolicyName::OeMvi,
        PolicyName::SoeDecreasing,
        PolicyName::SoeConstant,
        PolicyName::SoeRestart,
        PolicyName::SoeGmvi,
        PolicyName::SoeMvi,
        PolicyName::SboeGsmvi,
        PolicyName::SboeMvi,
        PolicyName::SaClassic,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            PolicyName::OeGsmvi => "OE-GSMVI",
            PolicyName::OeGmvi => "OE-GMVI",
            PolicyName::OeMvi => "OE-MVI",
            PolicyName::SoeDecreasing => "SOE-1",
            PolicyName::SoeConstant => "SOE-2",
            PolicyName::SoeRestart => "SOE-3",
            PolicyName::SoeGmvi => "SOE-4",
            PolicyName::SoeMvi => "SOE-MVI",
            PolicyName::SboeGsmvi => "SBOE-GSMVI",
            PolicyName::SboeMvi => "SBOE-MVI",
            PolicyName::SaClassic => "SA",
        }
    }

    pub fn engine(self) -> Engine {
        match self {
            PolicyName::OeGsmvi | PolicyName::OeGmvi | PolicyName::OeMvi => Engine::Oe,
            PolicyName::SboeGsmvi | PolicyName::SboeMvi => Engine::Sboe,
            PolicyName::SaClassic => Engine::Sa,
            _ => Engine::Soe,
        }
    }

    pub fn needs_mu(self) -> bool {
        matches!(
            self,
            PolicyName::OeGsmvi
                | PolicyName::SoeDecreasing
                | PolicyName::SoeConstant
                | PolicyName::SoeRestart
                | PolicyName::SboeGsmvi
                | PolicyName::SaClassic
        )
    }
}

/// Which iteration engine a policy drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Oe,
    Soe,
    Sboe,
    Sa,
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        let found = PolicyName::ALL.iter().find(|p| p.cli_name() == norm).copied();
        found.or(match norm.as_str() {
            "SOE-DECREASING" => Some(PolicyName::SoeDecreasing),
            "SOE-CONSTANT" => Some(PolicyName::SoeConstant),
            "SOE-RESTART" => Some(PolicyName::SoeRestart),
            "SOE-GMVI" => Some(PolicyName::SoeGmvi),
            "SA-CLASSIC" => Some(PolicyName::SaClassic),
            _ => None,
        })
        .ok_or_else(|| invalid(format!("unknown policy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub gamma: f64,
    pub lambda: f64,
    pub log_theta: f64,
}

impl StepParams {
    fn new(gamma: f64, lambda: f64, log_theta: f64) -> Self {
        Self { gamma, lambda, log_theta }
    }

    pub fn theta(&self) -> f64 {
        self.log_theta.exp()
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive")))
    }
}

// ---------------------------------------------------------------------------
// Closed-form policies
// ---------------------------------------------------------------------------

pub fn oe_gsmvi(l: f64, mu: f64, t: usize) -> Result<StepParams> {
    require_positive("L", l)?;
    require_positive("mu", mu)?;
    let r = 1.0 + mu / l;
    Ok(StepParams::new(1.0 / (2.0 * l), 1.0 / r, t as f64 * r.ln()))
}

pub fn oe_gmvi(l: f64, _t: usize) -> Result<StepParams> {
    require_positive("L", l)?;
    Ok(StepParams::new(1.0 / (3.0 * l), 1.0, 0.0))
}

pub fn oe_mvi(l: f64, _t: usize) -> Result<StepParams> {
    require_positive("L", l)?;
    Ok(StepParams::new(1.0 / (2.0 * l), 1.0, 0.0))
}

fn decreasing_gamma(mu: f64, t0: f64, t: usize) -> f64 {
    1.0 / (mu * (t0 + t as f64 - 1.0))
}

fn decreasing_log_theta(t0: f64, t: usize) -> f64 {
    let t = t as f64;
    ((t + t0 + 1.0) * (t + t0)).ln()
}

fn decreasing_step(mu: f64, t0: f64, t: usize, first_lambda_zero: bool) -> StepParams {
    let gamma = decreasing_gamma(mu, t0, t);
    let log_theta = decreasing_log_theta(t0, t);
    let lambda = if t == 0 || (first_lambda_zero && t == 1) {
        0.0
    } else {
        let prev_g = decreasing_gamma(mu, t0, t - 1);
        let prev_lt = decreasing_log_theta(t0, t - 1);
        (prev_lt - log_theta).exp() * prev_g / gamma
    };
    StepParams::new(gamma, lambda, log_theta)
}

/// Decreasing stepsizes with `t₀ = 4L/μ`; defined for `t ≥ 0`.
pub fn soe_decreasing(l: f64, mu: f64, t: usize) -> Result<StepParams> {
    require_positive("L", l)?;
    require_positive("mu", mu)?;
    Ok(decreasing_step(mu, 4.0 * l / mu, t, false))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPolicy {
    pub gamma: f64,
    pub lambda: f64,
    pub q: f64,
    /// Whether `q` was raised to its floor to keep `γ` positive.
    pub q_clamped: bool,
}

impl ConstantPolicy {
    pub fn params(&self, t: usize) -> StepParams {
        StepParams::new(self.gamma, self.lambda, -(t as f64) * self.lambda.ln())
    }
}

pub const Q_FLOOR: f64 = 1e-3;

/// Constant stepsize tuned to a known horizon `k`. With `σ = 0` the second
/// branch is infinite and `γ = 1/(4L)`.
pub fn soe_constant(l: f64, mu: f64, sigma: f64, v1: f64, k: usize) -> Result<ConstantPolicy> {
    require_positive("L", l)?;
    require_positive("mu", mu)?;
    require_positive("V1", v1)?;
    if k < 2 {
        return Err(invalid("the constant policy needs k >= 2"));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be nonnegative"));
    }
    let logk = (k as f64).ln();
    let (q, q_clamped, gamma) = if sigma == 0.0 {
        (f64::INFINITY, false, 1.0 / (4.0 * l))
    } else {
        let raw = 1.0 + (mu * mu * v1 / (sigma * sigma)).ln() / logk;
        let q = raw.max(Q_FLOOR);
        (q, raw < Q_FLOOR, (1.0 / (4.0 * l)).min(q * logk / (mu * k as f64)))
    };
    let lambda = 1.0 / (2.0 * mu * gamma + 1.0);
    Ok(ConstantPolicy { gamma, lambda, q, q_clamped })
}

/// Epoch-restarted decreasing policy. `ratio` estimates `σ²/(μ²V₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartPlan {
    pub mu: f64,
    pub t0: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochPosition {
    /// 1-based epoch index.
    pub epoch: usize,
    /// 1-based index within the epoch.
    pub local: usize,
    pub epoch_len: usize,
    /// Iterations completed before this epoch.
    pub offset: usize,
}

impl RestartPlan {
    pub fn new(l: f64, mu: f64, ratio: f64) -> Result<Self> {
        require_positive("L", l)?;
        require_positive("mu", mu)?;
        require_positive("ratio", ratio)?;
        Ok(Self { mu, t0: 4.0 * l / mu, ratio })
    }

    pub fn epoch_len(&self, s: usize) -> usize {
        let a = (2.0 * 2f64.sqrt() - 1.0) * self.t0 + 4.0;
        let b = 2f64.powi(s as i32 + 6) * self.ratio;
        a.max(b).ceil() as usize
    }

    /// Cumulative iteration count `K_s` at the end of epoch `s`.
    pub fn epoch_end(&self, s: usize) -> usize {
        (1..=s).map(|j| self.epoch_len(j)).sum()
    }

    pub fn locate(&self, t: usize) -> EpochPosition {
        let t = t.max(1);
        let mut offset = 0;
        let mut s = 1;
        loop {
            let len = self.epoch_len(s);
            if t <= offset + len {
                return EpochPosition { epoch: s, local: t - offset, epoch_len: len, offset };
            }
            offset += len;
            s += 1;
        }
    }

    pub fn local_params(&self, local: usize) -> StepParams {
        decreasing_step(self.mu, self.t0, local, true)
    }

    pub fn params(&self, t: usize) -> StepParams {
        if t == 0 {
            return self.local_params(0);
        }
        self.local_params(self.locate(t).local)
    }
}

pub fn soe_restart(l: f64, mu: f64, ratio: f64, t: usize) -> Result<(StepParams, usize)> {
    let plan = RestartPlan::new(l, mu, ratio)?;
    Ok((plan.params(t), plan.locate(t).epoch))
}

/// Returns the step parameters and the batch size `k + 1`.
pub fn soe_gmvi(l: f64, k: usize, _t: usize) -> Result<(StepParams, usize)> {
    require_positive("L", l)?;
    Ok((StepParams::new(1.0 / (4.0 * l), 1.0, 0.0), k + 1))
}

/// `γ_t = 1/(L√t)` with `λ_t = γ_{t−1}/γ_t` and `λ₁ = 0`.
pub fn soe_mvi(l: f64, t: usize) -> Result<StepParams> {
    require_positive("L", l)?;
    let t = t.max(1);
    let gamma = 1.0 / (l * (t as f64).sqrt());
    let lambda = if t == 1 { 0.0 } else { (t as f64 / (t - 1) as f64).sqrt() };
    Ok(StepParams::new(gamma, lambda, 0.0))
}

pub fn sboe_gsmvi(lbar: f64, b: usize, mu: f64, t: usize) -> Result<StepParams> {
    require_positive("block Lipschitz constant", lbar)?;
    require_positive("mu", mu)?;
    if b < 1 {
        return Err(invalid("at least one block is required"));
    }
    let bf = b as f64;
    let gamma = 1.0 / (2.0 * lbar * bf);
    let c = 2.0 * mu * gamma;
    let lambda = (bf + (bf - 1.0) * c) / (1.0 + c);
    let log_ratio = (1.0 + c).ln() - (1.0 + c * (bf - 1.0) / bf).ln();
    Ok(StepParams::new(gamma, lambda, t as f64 * log_ratio))
}

pub fn sboe_mvi(lbar: f64, b: usize, _t: usize) -> Result<StepParams> {
    require_positive("block Lipschitz constant", lbar)?;
    if b < 1 {
        return Err(invalid("at least one block is required"));
    }
    let bf = b as f64;
    Ok(StepParams::new(1.0 / (4.0 * lbar * bf), bf, 0.0))
}

/// Classic stochastic-approximation stepsize `1/(μ(t + t₀))`, `t₀ = 4L/μ`.
pub fn sa_classic(l: f64, mu: f64, t: usize) -> Result<f64> {
    require_positive("L", l)?;
    require_positive("mu", mu)?;
    Ok(1.0 / (mu * (t as f64 + 4.0 * l / mu)))
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    pub lipschitz: f64,
    pub mu: f64,
    pub sigma: f64,
    pub v1: f64,
    pub k: Option<usize>,
    pub blocks: usize,
    pub block_lipschitz: Option<f64>,
    /// Estimate of `σ²/(μ²V₁)` for the restart policy.
    pub restart_ratio: Option<f64>,
    pub batch: Option<usize>,
}

impl ScheduleInputs {
    pub fn new(lipschitz: f64, mu: f64) -> Self {
        Self {
            lipschitz,
            mu,
            sigma: 0.0,
            v1: 1.0,
            k: None,
            blocks: 1,
            block_lipschitz: None,
            restart_ratio: None,
            batch: None,
        }
    }

    pub fn sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn v1(mut self, v1: f64) -> Self {
        self.v1 = v1;
        self
    }

    pub fn horizon(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn blocks(mut self, b: usize, lbar: f64) -> Self {
        self.blocks = b;
        self.block_lipschitz = Some(lbar);
        self
    }

    pub fn restart_ratio(mut self, ratio: f64) -> Self {
        self.restart_ratio = Some(ratio);
        self
    }

    pub fn batch(mut self, m: usize) -> Self {
        self.batch = Some(m);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Derived {
    None,
    Constant(ConstantPolicy),
    Restart(RestartPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub policy: PolicyName,
    pub inputs: ScheduleInputs,
    /// Multiplier applied to every `γ_t` (1 for the policy as derived).
    pub gamma_scale: f64,
    derived: Derived,
}

impl Schedule {
    pub fn new(policy: PolicyName, inputs: ScheduleInputs) -> Result<Self> {
        let ScheduleInputs { lipschitz: l, mu, .. } = inputs;
        require_positive("L", l)?;
        if policy.needs_mu() {
            require_positive("mu", mu)?;
        }
        let derived = match policy {
            PolicyName::SoeConstant => {
                let k = inputs.k.ok_or_else(|| invalid("SOE-2 needs the horizon k"))?;
                Derived::Constant(soe_constant(l, mu, inputs.sigma, inputs.v1, k)?)
            }
            PolicyName::SoeRestart => {
                Derived::Restart(RestartPlan::new(l, mu, inputs.restart_ratio.unwrap_or(1.0))?)
            }
            PolicyName::SoeGmvi => {
                inputs.k.ok_or_else(|| invalid("SOE-4 needs the horizon k"))?;
                Derived::None
            }
            PolicyName::SboeGsmvi | PolicyName::SboeMvi => {
                if inputs.blocks < 1 {
                    return Err(invalid("at least one block is required"));
                }
                require_positive("block Lipschitz constant", inputs.block_lipschitz.unwrap_or(l))?;
                Derived::None
            }
            _ => Derived::None,
        };
        Ok(Self { policy, inputs, gamma_scale: 1.0, derived })
    }

    pub fn with_gamma_scale(mut self, scale: f64) -> Result<Self> {
        require_positive("gamma scale", scale)?;
        self.gamma_scale = scale;
        Ok(self)
    }

    fn lbar(&self) -> f64 {
        self.inputs.block_lipschitz.unwrap_or(self.inputs.lipschitz)
    }

    fn raw(&self, t: usize) -> StepParams {
        let ScheduleInputs { lipschitz: l, mu, .. } = self.inputs;
        let p = match (self.policy, self.derived) {
            (PolicyName::OeGsmvi, _) => oe_gsmvi(l, mu, t),
            (PolicyName::OeGmvi, _) => oe_gmvi(l, t),
            (PolicyName::OeMvi, _) => oe_mvi(l, t),
            (PolicyName::SoeDecreasing, _) => soe_decreasing(l, mu, t),
            (PolicyName::SoeConstant, Derived::Constant(c)) => Ok(c.params(t)),
            (PolicyName::SoeRestart, Derived::Restart(r)) => Ok(r.params(t)),
            (PolicyName::SoeGmvi, _) => soe_gmvi(l, self.inputs.k.unwrap_or(1), t).map(|p| p.0),
            (PolicyName::SoeMvi, _) => soe_mvi(l, t),
            (PolicyName::SboeGsmvi, _) => sboe_gsmvi(self.lbar(), self.inputs.blocks, mu, t),
            (PolicyName::SboeMvi, _) => sboe_mvi(self.lbar(), self.inputs.blocks, t),
            (PolicyName::SaClassic, _) => sa_classic(l, mu, t).map(|g| StepParams::new(g, 0.0, 0.0)),
            _ => unreachable!("derived data is built in Schedule::new"),
        };
        p.expect("inputs are checked in Schedule::new")
    }

    /// Parameters of iteration `t ≥ 1` (`t = 0` gives the formula's value there).
    pub fn params(&self, t: usize) -> StepParams {
        let mut p = self.raw(t);
        p.gamma *= self.gamma_scale;
        p
    }

    /// Parameters playing the role of iteration `t − 1` in the side conditions
    /// (restarts look back only within the current epoch).
    pub fn predecessor(&self, t: usize) -> StepParams {
        match self.derived {
            Derived::Restart(r) if t >= 1 => {
                let mut p = r.local_params(r.locate(t).local - 1);
                p.gamma *= self.gamma_scale;
                p
            }
            _ => self.params(t.saturating_sub(1)),
        }
    }

    pub fn batch_size(&self, _t: usize) -> usize {
        match self.policy {
            PolicyName::SoeGmvi => self.inputs.batch.unwrap_or(self.inputs.k.unwrap_or(1) + 1),
            _ => self.inputs.batch.unwrap_or(1),
        }
    }

    pub fn restart_plan(&self) -> Option<&RestartPlan> {
        match &self.derived {
            Derived::Restart(r) => Some(r),
            _ => None,
        }
    }

    pub fn constant_policy(&self) -> Option<&ConstantPolicy> {
        match &self.derived {
            Derived::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn epoch(&self, t: usize) -> Option<EpochPosition> {
        self.restart_plan().map(|r| r.locate(t))
    }

    pub fn is_epoch_start(&self, t: usize) -> bool {
        self.epoch(t).is_some_and(|e| e.local == 1)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Relative slack allowed in every inequality.
pub const VALIDATION_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `γ_t, θ_t > 0`, `λ_t ≥ 0`
    Positivity,
    /// `θ_{t+1}γ_{t+1}λ_{t+1} = θ_tγ_t`
    Coupling,
    /// `θ_{t+1}γ_{t+1}λ_{t+1} = θ_tγ_t b`
    BlockCoupling,
    /// `c·L²γ_t²λ_t²θ_t ≤ θ_{t−1}`
    ExtrapolationBound { c: u32, block: bool },
    /// `θ_t ≤ θ_{t−1}(1 + 2μγ_{t−1})`
    ThetaGrowth,
    /// `c·L²γ_k² ≤ 1`, with `c` stored doubled to allow `½`
    FinalStep { c2: u32 },
    ThetaNonincreasing,
    ThetaNondecreasing,
    /// `θ_{t−1}γ_{t−1}b ≥ θ_tγ_t(b−1)`
    BlockWeights,
    /// `θ_t(2μ(b−1)γ_t/b + 1) ≤ θ_{t−1}(2μγ_{t−1} + 1)`
    BlockThetaGrowth,
}

impl Condition {
    pub fn label(&self) -> String {
        match self {
            Condition::Positivity => "positivity".into(),
            Condition::Coupling => "extrapolation_coupling".into(),
            Condition::BlockCoupling => "block_extrapolation_coupling".into(),
            Condition::ExtrapolationBound { c, block: false } => format!("extrapolation_bound_{c}L2"),
            Condition::ExtrapolationBound { c, block: true } => format!("extrapolation_bound_{c}Lbar2"),
            Condition::ThetaGrowth => "theta_growth".into(),
            Condition::FinalStep { c2 } => format!("final_step_{}L2", *c2 as f64 / 2.0),
            Condition::ThetaNonincreasing => "theta_nonincreasing".into(),
            Condition::ThetaNondecreasing => "theta_nondecreasing".into(),
            Condition::BlockWeights => "block_average_weights".into(),
            Condition::BlockThetaGrowth => "block_theta_growth".into(),
        }
    }
}

/// The side conditions each policy's guarantee rests on.
pub fn required_conditions(policy: PolicyName) -> Vec<Condition> {
    use Condition::*;
    let mut v = vec![Positivity];
    v.extend(match policy {
        PolicyName::OeGsmvi => vec![
            Coupling,
            ExtrapolationBound { c: 4, block: false },
            ThetaGrowth,
            FinalStep { c2: 4 },
        ],
        PolicyName::OeGmvi => vec![Coupling, ExtrapolationBound { c: 9, block: false }],
        PolicyName::OeMvi => vec![
            Coupling,
            ExtrapolationBound { c: 4, block: false },
            FinalStep { c2: 4 },
            ThetaNonincreasing,
        ],
        PolicyName::SoeDecreasing | PolicyName::SoeConstant | PolicyName::SoeRestart => vec![
            Coupling,
            ExtrapolationBound { c: 16, block: false },
            ThetaGrowth,
            FinalStep { c2: 16 },
        ],
        PolicyName::SoeGmvi => vec![
            Coupling,
            ExtrapolationBound { c: 16, block: false },
            FinalStep { c2: 16 },
            ThetaNondecreasing,
        ],
        PolicyName::SoeMvi => vec![Coupling, ExtrapolationBound { c: 16, block: false }, ThetaNonincreasing],
        PolicyName::SboeGsmvi => vec![
            BlockCoupling,
            ExtrapolationBound { c: 4, block: true },
            BlockWeights,
            BlockThetaGrowth,
            FinalStep { c2: 8 },
        ],
        PolicyName::SboeMvi => vec![
            BlockCoupling,
            BlockWeights,
            FinalStep { c2: 8 },
            ExtrapolationBound { c: 16, block: true },
            ThetaNonincreasing,
        ],
        PolicyName::SaClassic => vec![],
    });
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub condition: Condition,
    pub passed: bool,
    pub first_violation: Option<usize>,
    /// Largest relative excess `lhs/rhs − 1` seen (negative when slack remains).
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub policy: PolicyName,
    pub k: usize,
    pub results: Vec<ConditionResult>,
    /// The constant policy's `q` hit its floor.
    pub q_clamped: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} k={}", self.policy, self.k)?;
        for r in &self.results {
            let status = if r.passed { "PASS" } else { "FAIL" };
            match r.first_violation {
                Some(t) => writeln!(f, "  {status} {} (first violation t={t})", r.condition.label())?,
                None => writeln!(f, "  {status} {} (worst excess {:.3e})", r.condition.label(), r.worst_excess)?,
            }
        }
        if self.q_clamped {
            writeln!(f, "  note: q clamped at {Q_FLOOR}")?;
        }
        Ok(())
    }
}

struct Tracker {
    condition: Condition,
    first: Option<usize>,
    worst: f64,
}

impl Tracker {
    /// Records `lhs ≤ rhs` at `t`.
    fn le(&mut self, t: usize, lhs: f64, rhs: f64) {
        let excess = if rhs > 0.0 { lhs / rhs - 1.0 } else if lhs <= 0.0 { -1.0 } else { f64::INFINITY };
        let excess = if excess.is_nan() { f64::INFINITY } else { excess };
        self.worst = self.worst.max(excess);
        if excess > VALIDATION_SLACK && self.first.is_none() {
            self.first = Some(t);
        }
    }

    fn eq(&mut self, t: usize, lhs: f64, rhs: f64) {
        let excess = ((lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE)).abs();
        let excess = if excess.is_nan() { f64::INFINITY } else { excess };
        self.worst = self.worst.max(excess);
        if excess > VALIDATION_SLACK && self.first.is_none() {
            self.first = Some(t);
        }
    }
}

/// Tail window `[⌈k/2⌉, k]` over which the stochastic MVI extrapolation bound
/// is needed.
pub fn tail_start(k: usize) -> usize {
    k.div_ceil(2).max(1)
}

/// Checks the policy's side conditions for `t = 1..k`.
///
/// Conditions involving `λ_t` are checked from `t = 2`: with `x₀ = x₁` the
/// first extrapolation term vanishes, so no constraint applies at `t = 1`.
pub fn validate(schedule: &Schedule, k: usize) -> ValidationReport {
    let l = schedule.inputs.lipschitz;
    let lbar = schedule.lbar();
    let mu = schedule.inputs.mu;
    let b = schedule.inputs.blocks as f64;
    let mut trackers: Vec<Tracker> = required_conditions(schedule.policy)
        .into_iter()
        .map(|condition| Tracker { condition, first: None, worst: f64::NEG_INFINITY })
        .collect();

    let k = k.max(1);
    let mut cur = schedule.params(1);
    for t in 1..=k {
        let prev = schedule.predecessor(t);
        let next = schedule.params(t + 1);
        // θ_t/θ_{t−1} and θ_{t+1}/θ_t
        let r_prev = (cur.log_theta - prev.log_theta).exp();
        let r_next = (next.log_theta - cur.log_theta).exp();
        let epoch_end = schedule.is_epoch_start(t + 1);
        for tr in trackers.iter_mut() {
            match tr.condition {
                Condition::Positivity => {
                    let ok = cur.gamma > 0.0 && cur.lambda >= 0.0 && cur.log_theta.is_finite();
                    tr.le(t, if ok { 0.0 } else { 2.0 }, 1.0);
                }
                Condition::Coupling if t < k && !epoch_end => {
                    tr.eq(t, r_next * next.gamma * next.lambda, cur.gamma);
                }
                Condition::BlockCoupling if t < k => {
                    tr.eq(t, r_next * next.gamma * next.lambda, cur.gamma * b);
                }
                Condition::ExtrapolationBound { c, block } if t >= 2 => {
                    let in_window = schedule.policy != PolicyName::SoeMvi || t >= tail_start(k);
                    if in_window {
                        let ll = if block { lbar } else { l };
                        let lhs = c as f64 * ll * ll * cur.gamma * cur.gamma * cur.lambda * cur.lambda * r_prev;
                        tr.le(t, lhs, 1.0);
                    }
                }
                Condition::ThetaGrowth => tr.le(t, r_prev, 1.0 + 2.0 * mu * prev.gamma),
                Condition::FinalStep { c2 } if t == k || epoch_end => {
                    tr.le(t, c2 as f64 / 2.0 * l * l * cur.gamma * cur.gamma, 1.0);
                }
                Condition::ThetaNonincreasing => tr.le(t, r_prev, 1.0),
                Condition::ThetaNondecreasing => tr.le(t, 1.0, r_prev),
                Condition::BlockWeights if t >= 2 => {
                    tr.le(t, r_prev * cur.gamma * (b - 1.0), prev.gamma * b);
                }
                Condition::BlockThetaGrowth if t >= 2 => {
                    let lhs = r_prev * (2.0 * mu * (b - 1.0) * cur.gamma / b + 1.0);
                    tr.le(t, lhs, 2.0 * mu * prev.gamma + 1.0);
                }
                _ => {}
            }
        }
        cur = next;
    }

    ValidationReport {
        policy: schedule.policy,
        k,
        results: trackers
            .into_iter()
            .map(|tr| ConditionResult {
                condition: tr.condition,
                passed: tr.first.is_none(),
                first_violation: tr.first,
                worst_excess: tr.worst,
            })
            .collect(),
        q_clamped: schedule.constant_policy().is_some_and(|c| c.q_clamped),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn oe_gsmvi_values() {
        let p = oe_gsmvi(2.0, 1.0, 1).unwrap();
        assert!(close(p.gamma, 0.25, 1e-15) && close(p.lambda, 2.0 / 3.0, 1e-15) && close(p.theta(), 1.5, 1e-15));
        let p = oe_gsmvi(1.0, 1.0, 3).unwrap();
        assert!(close(p.gamma, 0.5, 1e-15) && close(p.lambda, 0.5, 1e-15) && close(p.theta(), 8.0, 1e-14));
        let p = oe_gsmvi(1.0, 1e-14, 5).unwrap();
        assert!(close(p.lambda, 1.0, 1e-12) && close(p.theta(), 1.0, 1e-12));
        assert!(oe_gsmvi(1.0, 0.0, 1).is_err());
    }

    #[test]
    fn deterministic_constant_policies() {
        assert!(close(oe_gmvi(3.0, 1).unwrap().gamma, 1.0 / 9.0, 1e-15));
        assert!(close(oe_gmvi(1.0 / 3.0, 7).unwrap().gamma, 1.0, 1e-15));
        assert!(close(oe_mvi(2.0, 1).unwrap().gamma, 0.25, 1e-15));
        assert!(close(oe_mvi(0.5, 9).unwrap().gamma, 1.0, 1e-15));
        for t in [1, 10, 1000] {
            let p = oe_mvi(2.0, t).unwrap();
            assert_eq!((p.lambda, p.theta()), (1.0, 1.0));
            let p = oe_gmvi(2.0, t).unwrap();
            assert_eq!((p.lambda, p.theta()), (1.0, 1.0));
        }
    }

    #[test]
    fn decreasing_values() {
        // t0 = 16, θ0 = 17·16 = 272, γ0 = 1/15, θ1 = 18·17 = 306, γ1 = 1/16
        let p = soe_decreasing(4.0, 1.0, 1).unwrap();
        assert!(close(p.gamma, 1.0 / 16.0, 1e-15));
        assert!(close(p.theta(), 306.0, 1e-13));
        assert!(close(p.lambda, (272.0 / 15.0) / (306.0 / 16.0), 1e-13));
        assert!(close(p.lambda, 0.948_148_148_148, 1e-11));
        let t = 10_000_000;
        let p = soe_decreasing(4.0, 1.0, t).unwrap();
        assert!(close(p.gamma * t as f64, 1.0, 1e-5));
        for t in 1..50 {
            let a = soe_decreasing(3.0, 0.5, t).unwrap();
            let b = soe_decreasing(3.0, 0.5, t + 1).unwrap();
            let lhs = (b.log_theta - a.log_theta).exp() * b.gamma * b.lambda;
            assert!(close(lhs, a.gamma, 1e-13));
        }
    }

    #[test]
    fn constant_policy_values() {
        let c = soe_constant(1e6, 1.0, 1.0, 1.0, 100).unwrap();
        assert!(close(c.q, 1.0, 1e-15));
        assert!(close(c.gamma, (1.0 / 4e6f64).min(100f64.ln() / 100.0), 1e-15));
        let c = soe_constant(1.0, 1.0, 1.0, 1.0, 1_000_000).unwrap();
        // log(10⁶)/10⁶ ≪ 1/4: the second branch binds when σ² = V₁
        assert!(close(c.gamma, 1e6f64.ln() / 1e6, 1e-15));
        // k = 10, σ = 0.1: q = 3 and 3·log(10)/10 ≈ 0.69 > 1/4
        let c = soe_constant(1.0, 1.0, 0.1, 1.0, 10).unwrap();
        assert!(close(c.q, 3.0, 1e-14));
        assert!(close(c.gamma, 0.25, 1e-15));
        assert!(close(c.lambda * (2.0 * c.gamma + 1.0), 1.0, 1e-15));
        assert!(soe_constant(1.0, 1.0, 1.0, 1.0, 1).is_err());
        let c = soe_constant(1.0, 1.0, 1e6, 1.0, 10).unwrap();
        assert!(c.q_clamped && c.gamma > 0.0);
    }

    #[test]
    fn restart_values() {
        let plan = RestartPlan::new(4.0, 1.0, 1.0).unwrap();
        assert_eq!(plan.epoch_len(1), 128);
        assert_eq!(plan.epoch_len(2), 256);
        let big_t0 = RestartPlan::new(100.0, 1.0, 1.0).unwrap();
        // (2√2 − 1)·400 + 4 = 735.29…
        assert_eq!(big_t0.epoch_len(1), 736);
        let mut prev_end = 0;
        for s in 1..8 {
            let end = plan.epoch_end(s);
            assert!(end > prev_end);
            let start = plan.locate(prev_end + 1);
            assert_eq!((start.epoch, start.local), (s, 1));
            assert_eq!(plan.params(prev_end + 1).lambda, 0.0);
            let last = plan.locate(end);
            assert_eq!(last.local, plan.epoch_len(s));
            prev_end = end;
        }
        assert!(close(plan.epoch_len(12) as f64 / plan.epoch_len(11) as f64, 2.0, 1e-3));
        let (p, s) = soe_restart(4.0, 1.0, 1.0, 129).unwrap();
        assert_eq!((p.lambda, s), (0.0, 2));
    }

    #[test]
    fn stochastic_constant_policies() {
        let (p, m) = soe_gmvi(1.0, 99, 1).unwrap();
        assert_eq!((p.gamma, p.lambda, p.theta(), m), (0.25, 1.0, 1.0, 100));
        assert_eq!(soe_gmvi(1.0, 198, 3).unwrap().1 - 1, 2 * 99);

        let p = soe_mvi(1.0, 4).unwrap();
        assert!(close(p.gamma, 0.5, 1e-15));
        assert!(close(p.lambda, (4.0f64 / 3.0).sqrt(), 1e-15));
        assert_eq!(soe_mvi(1.0, 1).unwrap().lambda, 0.0);
        for t in 2..200 {
            let a = soe_mvi(2.0, t).unwrap();
            let b = soe_mvi(2.0, t + 1).unwrap();
            assert!(b.gamma < a.gamma && b.lambda < a.lambda && b.lambda > 1.0);
            assert!(close(b.gamma * b.lambda, a.gamma, 1e-14));
        }
    }

    #[test]
    fn block_policies() {
        let p = sboe_gsmvi(2.0, 1, 0.3, 4).unwrap();
        let q = oe_gsmvi(2.0, 0.3, 4).unwrap();
        assert!(close(p.gamma, q.gamma, 1e-15) && close(p.lambda, q.lambda, 1e-15));
        assert!(close(p.log_theta, q.log_theta, 1e-13));
        let p = sboe_gsmvi(1.0, 5, 0.1, 1).unwrap();
        assert!(close(p.gamma, 0.1, 1e-15));
        assert!(close(p.lambda, 5.08 / 1.02, 1e-14));
        assert!(close(p.lambda, 4.980_392_156_862_745, 1e-13));
        for t in 1..30 {
            let a = sboe_gsmvi(1.3, 4, 0.2, t).unwrap();
            let b = sboe_gsmvi(1.3, 4, 0.2, t + 1).unwrap();
            assert!(close((b.log_theta - a.log_theta).exp() * b.gamma * b.lambda, a.gamma * 4.0, 1e-12));
        }
        let p = sboe_mvi(1.0, 5, 1).unwrap();
        assert!(close(p.gamma, 0.05, 1e-15) && p.lambda == 5.0 && p.theta() == 1.0);
        let p = sboe_mvi(1.0, 1, 1).unwrap();
        assert!(close(p.gamma, 0.25, 1e-15) && p.lambda == 1.0);
        assert!(sboe_mvi(1.0, 0, 1).is_err());
        assert!(sboe_gsmvi(1.0, 0, 0.1, 1).is_err());
    }

    #[test]
    fn sa_values() {
        assert!(close(sa_classic(4.0, 1.0, 1).unwrap(), 1.0 / 17.0, 1e-15));
        let t = 10_000_000;
        assert!(close(sa_classic(4.0, 1.0, t).unwrap() * t as f64, 1.0, 1e-5));
        assert!(sa_classic(4.0, 1.0, 2).unwrap() < sa_classic(4.0, 1.0, 1).unwrap());
        assert!(sa_classic(4.0, 0.0, 1).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyName::ALL {
            assert_eq!(p.cli_name().parse::<PolicyName>().unwrap(), p);
        }
        assert_eq!("soe_decreasing".parse::<PolicyName>().unwrap(), PolicyName::SoeDecreasing);
        assert!("nope".parse::<PolicyName>().is_err());
    }

    fn inputs(l: f64, mu: f64) -> ScheduleInputs {
        ScheduleInputs::new(l, mu).sigma(1.0).v1(1.0).horizon(10_000).blocks(5, l / 2.0)
    }

    #[test]
    fn shipped_policies_validate() {
        for p in PolicyName::ALL {
            let s = Schedule::new(p, inputs(4.0, 0.5)).unwrap();
            let r = validate(&s, 10_000);
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn gmvi_bound_is_tight() {
        let s = Schedule::new(PolicyName::OeGmvi, inputs(3.0, 0.0)).unwrap();
        let r = validate(&s, 100);
        let res = r.results.iter().find(|c| c.condition == Condition::ExtrapolationBound { c: 9, block: false });
        assert!(res.unwrap().worst_excess.abs() < 1e-14);
    }

    #[test]
    fn doubled_gamma_fails_final_step() {
        let k = 500;
        let s = Schedule::new(PolicyName::OeGsmvi, inputs(4.0, 0.5)).unwrap().with_gamma_scale(2.0).unwrap();
        let r = validate(&s, k);
        assert!(!r.passed());
        let fin = r.results.iter().find(|c| c.condition == Condition::FinalStep { c2: 4 }).unwrap();
        assert_eq!(fin.first_violation, Some(k));
    }

    #[test]
    fn stochastic_mvi_tail_needs_enough_iterations() {
        // 16L²γ_t²λ_t² = 16/(t − 1), which is ≤ 1 only from t = 17 on.
        let s = Schedule::new(PolicyName::SoeMvi, inputs(1.0, 0.0)).unwrap();
        assert!(!validate(&s, 32).passed());
        assert!(validate(&s, 33).passed());
    }
}
