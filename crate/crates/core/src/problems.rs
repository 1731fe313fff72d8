//! Problem instances: affine (traffic-style) operators and GLM signal
//! estimation, each with an exact operator, an optional sampling oracle and
//! analytic constants.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{FeasibleSet, Point, ProxGeometry};
use crate::par::{map_indices, Execution};
use crate::rng::{RngStream, StreamTag};

/// Mini-batches at least this large are sampled in parallel.
const PAR_BATCH_MIN: usize = 64;

// ---------------------------------------------------------------------------
// Affine operators
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSpec {
    pub g: DMatrix<f64>,
    pub b: Point,
}

impl AffineSpec {
    pub fn new(g: DMatrix<f64>, b: Point) -> Result<Self> {
        if !g.is_square() {
            return Err(invalid(format!("G is {}x{}, expected square", g.nrows(), g.ncols())));
        }
        check_dim(g.nrows(), b.len())?;
        Ok(Self { g, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

pub fn affine_eval(spec: &AffineSpec, y: &Point) -> Result<Point> {
    check_dim(spec.dim(), y.len())?;
    Ok(&spec.g * y + &spec.b)
}

/// Spectral constants of a linear operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstants {
    pub lipschitz: f64,
    /// Strong-monotonicity modulus, clamped at zero.
    pub mu: f64,
    /// Unclamped `½λ_min(G + Gᵀ)`.
    pub mu_raw: f64,
}

impl SpectralConstants {
    /// True when the raw modulus had to be clamped.
    pub fn clamped(&self) -> bool {
        self.mu_raw < 0.0
    }
}

pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn lambda_min_sym(s: &DMatrix<f64>) -> f64 {
    s.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn lambda_max_sym(s: &DMatrix<f64>) -> f64 {
    s.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn affine_constants(spec: &AffineSpec) -> Result<SpectralConstants> {
    if !spec.g.is_square() {
        return Err(invalid("G must be square"));
    }
    let lipschitz = sigma_max(&spec.g);
    let sym = &spec.g + spec.g.transpose();
    let mu_raw = 0.5 * lambda_min_sym(&sym);
    Ok(SpectralConstants { lipschitz, mu: mu_raw.max(0.0), mu_raw })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![hi],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `diag(linspace(d₋, 1, n)) + d₋·10⁻²·Ĝ` with `Ĝ` uniform on [0,1], row-major.
fn perturbed_diagonal(n: usize, d_minus: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let diag = linspace(d_minus, 1.0, n);
    let mut m = DMatrix::zeros(n, n);
    let scale = d_minus * 1e-2;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = scale * rng.random::<f64>();
        }
        m[(i, i)] += diag[i];
    }
    m
}

// ---------------------------------------------------------------------------
// GLM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `f(s) = max{s, 0}`
    Hinge,
    /// `f(s) = min{1, max{s, 0}}`
    RampSigmoid,
}

impl Link {
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Link::Hinge => s.max(0.0),
            Link::RampSigmoid => s.clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSpec {
    pub link: Link,
    pub a: DMatrix<f64>,
    pub x_star: Point,
    pub radius: f64,
    pub sigma_y: f64,
    a_x_star: Point,
}

impl GlmSpec {
    pub fn new(link: Link, a: DMatrix<f64>, x_star: Point, radius: f64, sigma_y: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid("A must be square"));
        }
        check_dim(a.nrows(), x_star.len())?;
        if !(radius > 0.0) || !(sigma_y >= 0.0) {
            return Err(invalid("radius must be positive and sigma_y nonnegative"));
        }
        if ((x_star.norm() - radius) / radius).abs() > 1e-9 {
            return Err(invalid(format!("‖x*‖ = {} differs from R = {radius}", x_star.norm())));
        }
        let a_x_star = &a * &x_star;
        Ok(Self { link, a, x_star, radius, sigma_y, a_x_star })
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn a_is_identity(&self) -> bool {
        self.a == DMatrix::identity(self.dim(), self.dim())
    }

    /// One oracle draw given the precomputed product `Ax`.
    fn sample_with(&self, ax: &Point, rng: &mut ChaCha8Rng) -> Point {
        let n = self.dim();
        let eta = Point::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps: f64 = if self.sigma_y > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        let y = self.link.apply(eta.dot(&self.a_x_star)) + self.sigma_y * eps;
        let coef = self.link.apply(eta.dot(ax)) - y;
        eta * coef
    }

    /// Upper bound on `E‖F̃(x) − F(x)‖²` over the radius-R ball, using that
    /// both links are 1-Lipschitz and `E[‖η‖²(ηᵀv)²] = (n+2)‖v‖²`.
    pub fn variance_bound(&self) -> f64 {
        let n = self.dim() as f64;
        let s = sigma_max(&self.a);
        (n + 2.0) * s * s * (2.0 * self.radius).powi(2) + n * self.sigma_y * self.sigma_y
    }
}

/// Single draw `η(f(ηᵀAx) − y)`.
pub fn glm_sample(spec: &GlmSpec, x: &Point, rng: &mut ChaCha8Rng) -> Result<Point> {
    check_dim(spec.dim(), x.len())?;
    let ax = &spec.a * x;
    Ok(spec.sample_with(&ax, rng))
}

/// `½A(x − x*)`.
pub fn glm_exact_hinge(spec: &GlmSpec, x: &Point) -> Result<Point> {
    if spec.link != Link::Hinge {
        return Err(invalid("hinge operator requested for a non-hinge link"));
    }
    check_dim(spec.dim(), x.len())?;
    Ok((&spec.a * (x - &spec.x_star)) * 0.5)
}

/// `G_C(x) = ½ x erf(1/(√2‖x‖))`, with `G_C(0) = 0`.
pub fn ramp_g(x: &Point) -> Point {
    let r = x.norm();
    if r == 0.0 {
        return Point::zeros(x.len());
    }
    x * (0.5 * libm::erf(1.0 / (std::f64::consts::SQRT_2 * r)))
}

/// Analytic Jacobian of [`ramp_g`] for `x ≠ 0`.
pub fn ramp_jacobian(x: &Point) -> DMatrix<f64> {
    let n = x.len();
    let r = x.norm();
    let e = 0.5 * libm::erf(1.0 / (std::f64::consts::SQRT_2 * r));
    let c = (-1.0 / (2.0 * r * r)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * r.powi(3));
    DMatrix::identity(n, n) * e - (x * x.transpose()) * c
}

pub fn glm_exact_ramp(spec: &GlmSpec, x: &Point) -> Result<Point> {
    if spec.link != Link::RampSigmoid {
        return Err(invalid("ramp operator requested for a non-ramp link"));
    }
    if !spec.a_is_identity() {
        return Err(Error::MissingExactOperator);
    }
    check_dim(spec.dim(), x.len())?;
    Ok(ramp_g(x) - ramp_g(&spec.x_star))
}

/// Strong-monotonicity modulus of the ramp operator over the radius-R ball.
pub fn ramp_mu(radius: f64) -> f64 {
    0.5 * libm::erf(1.0 / (std::f64::consts::SQRT_2 * radius))
        - (-1.0 / (2.0 * radius * radius)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * radius)
}

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

pub type OperatorFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type SampleFn = Arc<dyn Fn(&Point, &mut ChaCha8Rng) -> Point + Send + Sync>;

#[derive(Clone)]
pub enum Operator {
    Affine(AffineSpec),
    Glm(GlmSpec),
    Custom { exact: OperatorFn, sample: Option<SampleFn> },
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Affine(s) => f.debug_tuple("Affine").field(&s.dim()).finish(),
            Operator::Glm(s) => f.debug_tuple("Glm").field(&s.link).field(&s.dim()).finish(),
            Operator::Custom { .. } => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Affine,
    Traffic,
    GlmHinge,
    GlmRamp,
    Custom,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemKind::Affine => "affine",
            ProblemKind::Traffic => "traffic",
            ProblemKind::GlmHinge => "glm_hinge",
            ProblemKind::GlmRamp => "glm_ramp",
            ProblemKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub lipschitz: f64,
    pub mu: f64,
    pub sigma: f64,
    pub l_omega: f64,
    /// `L̄ = max_i L_i` over the block partition, when one is set.
    pub block_lipschitz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VIProblem {
    pub kind: ProblemKind,
    pub set: FeasibleSet,
    pub operator: Operator,
    pub constants: Constants,
    pub known_solution: Option<Point>,
    pub block_sizes: Option<Vec<usize>>,
    /// Standard deviation scale of additive oracle noise on affine problems,
    /// normalised so that `E‖noise‖² = σ²`. `None` means no oracle.
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub geometry: ProxGeometry,
}

impl VIProblem {
    pub fn affine(set: FeasibleSet, spec: AffineSpec) -> Result<Self> {
        check_dim(set.dim(), spec.dim())?;
        let sc = affine_constants(&spec)?;
        Ok(Self {
            kind: ProblemKind::Affine,
            set,
            operator: Operator::Affine(spec),
            constants: Constants {
                lipschitz: sc.lipschitz,
                mu: sc.mu,
                sigma: 0.0,
                l_omega: 1.0,
                block_lipschitz: None,
            },
            known_solution: None,
            block_sizes: None,
            noise_sigma: None,
            seed: None,
            geometry: ProxGeometry::euclidean(),
        })
    }

    pub fn custom(set: FeasibleSet, exact: OperatorFn, sample: Option<SampleFn>, constants: Constants) -> Self {
        Self {
            kind: ProblemKind::Custom,
            set,
            operator: Operator::Custom { exact, sample },
            constants,
            known_solution: None,
            block_sizes: None,
            noise_sigma: None,
            seed: None,
            geometry: ProxGeometry::euclidean(),
        }
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn with_solution(mut self, x_star: Point) -> Self {
        self.known_solution = Some(x_star);
        self
    }

    /// Adds an additive Gaussian oracle with `E‖F̃ − F‖² = σ²`.
    pub fn with_additive_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(invalid("noise sigma must be nonnegative"));
        }
        if !matches!(self.operator, Operator::Affine(_)) {
            return Err(invalid("additive noise is only offered for affine operators"));
        }
        self.noise_sigma = Some(sigma);
        self.constants.sigma = sigma;
        Ok(self)
    }

    /// Sets a block partition and computes `L̄` for affine operators.
    pub fn with_blocks(mut self, sizes: Vec<usize>) -> Result<Self> {
        let ranges = ranges_of(&sizes);
        self.set.check_partition(&ranges)?;
        self.constants.block_lipschitz = match &self.operator {
            Operator::Affine(spec) => Some(
                ranges
                    .iter()
                    .map(|r| sigma_max(&spec.g.rows(r.start, r.len()).into_owned()))
                    .fold(0.0, f64::max),
            ),
            _ => self.constants.block_lipschitz.or(Some(self.constants.lipschitz)),
        };
        self.block_sizes = Some(sizes);
        Ok(self)
    }

    pub fn block_ranges(&self) -> Option<Vec<Range<usize>>> {
        self.block_sizes.as_deref().map(ranges_of)
    }

    pub fn affine_spec(&self) -> Option<&AffineSpec> {
        match &self.operator {
            Operator::Affine(s) => Some(s),
            _ => None,
        }
    }

    pub fn has_exact(&self) -> bool {
        match &self.operator {
            Operator::Glm(s) => s.link == Link::Hinge || s.a_is_identity(),
            _ => true,
        }
    }

    pub fn has_oracle(&self) -> bool {
        match &self.operator {
            Operator::Affine(_) => self.noise_sigma.is_some(),
            Operator::Glm(_) => true,
            Operator::Custom { sample, .. } => sample.is_some(),
        }
    }

    pub fn exact(&self, x: &Point) -> Result<Point> {
        check_dim(self.dim(), x.len())?;
        match &self.operator {
            Operator::Affine(spec) => affine_eval(spec, x),
            Operator::Glm(spec) => match spec.link {
                Link::Hinge => glm_exact_hinge(spec, x),
                Link::RampSigmoid => glm_exact_ramp(spec, x),
            },
            Operator::Custom { exact, .. } => Ok(exact(x)),
        }
    }

    /// Components `range` of `F(x)`.
    pub fn exact_rows(&self, x: &Point, range: Range<usize>) -> Result<Point> {
        match &self.operator {
            Operator::Affine(spec) => {
                let rows = spec.g.rows(range.start, range.len());
                Ok(rows * x + spec.b.rows(range.start, range.len()))
            }
            _ => Ok(self.exact(x)?.rows(range.start, range.len()).into_owned()),
        }
    }

    /// Mean of `m` oracle draws at `x`; draw `i` uses key `(t, i)` of `stream`.
    pub fn minibatch(&self, x: &Point, m: usize, stream: &RngStream, t: u64, exec: Execution) -> Result<Point> {
        if m == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        check_dim(self.dim(), x.len())?;
        match &self.operator {
            Operator::Affine(spec) => {
                let sigma = self.noise_sigma.ok_or(Error::MissingOracle)?;
                let fx = affine_eval(spec, x)?;
                let scale = sigma / (self.dim() as f64).sqrt();
                let n = self.dim();
                Ok(minibatch(
                    |i| {
                        let mut rng = stream.at(t, i as u64);
                        &fx + Point::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)) * scale
                    },
                    m,
                    exec,
                ))
            }
            Operator::Glm(spec) => {
                let ax = &spec.a * x;
                Ok(minibatch(|i| spec.sample_with(&ax, &mut stream.at(t, i as u64)), m, exec))
            }
            Operator::Custom { sample, .. } => {
                let sample = sample.as_ref().ok_or(Error::MissingOracle)?;
                Ok(minibatch(|i| sample(x, &mut stream.at(t, i as u64)), m, exec))
            }
        }
    }

    /// Runs OE with the strongly monotone schedule to high accuracy and stores
    /// the result as the known solution.
    pub fn with_reference_solution(mut self, tol: f64) -> Result<Self> {
        let x = solve_reference(&self, tol)?;
        self.known_solution = Some(x);
        Ok(self)
    }
}

pub(crate) fn ranges_of(sizes: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect()
}

/// Mean of `m` draws produced by `draw(i)`, summed in index order so the result
/// does not depend on the execution mode.
pub fn minibatch<D>(draw: D, m: usize, exec: Execution) -> Point
where
    D: Fn(usize) -> Point + Sync + Send,
{
    assert!(m >= 1, "batch size must be at least 1");
    if m == 1 {
        return draw(0);
    }
    let mode = if m >= PAR_BATCH_MIN { exec } else { Execution::Sequential };
    let draws = map_indices(mode, m, draw);
    let mut sum = draws[0].clone();
    for d in &draws[1..] {
        sum += d;
    }
    sum / m as f64
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub n: usize,
    pub num_od: usize,
    pub d_minus: f64,
    pub seed: u64,
    /// Per-block demands; unit demands when `None`.
    pub demands: Option<Vec<f64>>,
    pub b_value: f64,
}

impl TrafficParams {
    pub fn new(n: usize, num_od: usize, d_minus: f64, seed: u64) -> Self {
        Self { n, num_od, d_minus, seed, demands: None, b_value: 5.0 }
    }
}

pub fn traffic_generate(n: usize, num_od: usize, d_minus: f64, seed: u64) -> Result<VIProblem> {
    traffic_generate_with(&TrafficParams::new(n, num_od, d_minus, seed))
}

pub fn traffic_generate_with(p: &TrafficParams) -> Result<VIProblem> {
    if p.num_od == 0 || p.n == 0 || p.n % p.num_od != 0 {
        return Err(Error::IncompatiblePartition(format!(
            "{} arcs cannot be split into {} equal blocks",
            p.n, p.num_od
        )));
    }
    if !(p.d_minus > 0.0 && p.d_minus <= 1.0) {
        return Err(invalid(format!("d_minus = {} must lie in (0, 1]", p.d_minus)));
    }
    let mut rng = RngStream::new(p.seed, StreamTag::Generator).at(0, 0);
    let g = perturbed_diagonal(p.n, p.d_minus, &mut rng);
    let b = Point::from_element(p.n, p.b_value);
    let sizes = vec![p.n / p.num_od; p.num_od];
    let demands = p.demands.clone().unwrap_or_else(|| vec![1.0; p.num_od]);
    let set = FeasibleSet::simplex_product(sizes.clone(), demands)?;
    let mut prob = VIProblem::affine(set, AffineSpec::new(g, b)?)?;
    if prob.constants.mu <= 0.0 {
        return Err(invalid(format!(
            "generated operator is not strongly monotone (d_minus = {})",
            p.d_minus
        )));
    }
    prob.kind = ProblemKind::Traffic;
    prob.seed = Some(p.seed);
    prob.with_blocks(sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmParams {
    pub n: usize,
    pub link: Link,
    pub d_minus: f64,
    pub radius: f64,
    pub sigma_y: f64,
    pub seed: u64,
}

/// GLM instance over the radius-R ball. The ramp link always uses `A = I`.
pub fn glm_generate(p: &GlmParams) -> Result<VIProblem> {
    if p.n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(p.radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let stream = RngStream::new(p.seed, StreamTag::Generator);
    let a = match p.link {
        Link::Hinge => {
            if !(p.d_minus > 0.0 && p.d_minus <= 1.0) {
                return Err(invalid(format!("d_minus = {} must lie in (0, 1]", p.d_minus)));
            }
            perturbed_diagonal(p.n, p.d_minus, &mut stream.at(0, 0))
        }
        Link::RampSigmoid => DMatrix::identity(p.n, p.n),
    };
    let mut rng = stream.at(1, 0);
    let raw = Point::from_fn(p.n, |_, _| rng.random::<f64>());
    let x_star = &raw * (p.radius / raw.norm());
    glm_problem(GlmSpec::new(p.link, a, x_star, p.radius, p.sigma_y)?, Some(p.seed))
}

pub fn glm_problem(spec: GlmSpec, seed: Option<u64>) -> Result<VIProblem> {
    let n = spec.dim();
    let (lipschitz, mu, kind) = match spec.link {
        Link::Hinge => {
            let sym = &spec.a + spec.a.transpose();
            (0.5 * sigma_max(&spec.a), 0.25 * lambda_min_sym(&sym), ProblemKind::GlmHinge)
        }
        Link::RampSigmoid => {
            if !spec.a_is_identity() {
                // exact-operator metrics are unavailable; report conservative constants
                let sym = &spec.a + spec.a.transpose();
                (0.5 * sigma_max(&spec.a), 0.0f64.min(lambda_min_sym(&sym)), ProblemKind::GlmRamp)
            } else {
                (0.5, ramp_mu(spec.radius), ProblemKind::GlmRamp)
            }
        }
    };
    let set = FeasibleSet::ball(Point::zeros(n), spec.radius)?;
    let sigma = spec.variance_bound().sqrt();
    let x_star = spec.x_star.clone();
    Ok(VIProblem {
        kind,
        set,
        operator: Operator::Glm(spec),
        constants: Constants { lipschitz, mu: mu.max(0.0), sigma, l_omega: 1.0, block_lipschitz: None },
        known_solution: Some(x_star),
        block_sizes: None,
        noise_sigma: None,
        seed,
        geometry: ProxGeometry::euclidean(),
    })
}

// ---------------------------------------------------------------------------
// Reference solutions
// ---------------------------------------------------------------------------

pub const REFERENCE_MAX_ITERS: usize = 1_000_000;

/// High-accuracy solution of a strongly monotone problem by OE with
/// `γ = 1/(2L)`, `λ = (1 + μ/L)⁻¹`, started from the set's centre.
pub fn solve_reference(problem: &VIProblem, tol: f64) -> Result<Point> {
    let Constants { lipschitz: l, mu, .. } = problem.constants;
    if !(mu > 0.0) {
        return Err(invalid("reference solve needs a strongly monotone problem"));
    }
    let gamma = 1.0 / (2.0 * l);
    let lambda = 1.0 / (1.0 + mu / l);
    let set = &problem.set;
    let mut x = set.project(&set.analytic_center())?;
    let mut f = problem.exact(&x)?;
    let mut f_prev = f.clone();
    for _ in 0..REFERENCE_MAX_ITERS {
        let g = &f + (&f - &f_prev) * lambda;
        let mut next = &x - g * gamma;
        set.project_range_into(0..next.len(), &mut next)?;
        let f_next = problem.exact(&next)?;
        let step = &next - &x;
        let movement = 0.5 * step.norm_squared();
        let cert = (&f - &f_next + (&f - &f_prev) * lambda + step / gamma).norm();
        f_prev = f;
        f = f_next;
        x = next;
        if movement <= tol && cert <= tol {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence { iterations: REFERENCE_MAX_ITERS })
}

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SetFile {
    FullSpace { dim: usize },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    SimplexProduct { blocks: Vec<usize>, demands: Vec<f64> },
}

impl SetFile {
    fn from_set(set: &FeasibleSet) -> Self {
        match set {
            FeasibleSet::FullSpace { dim } => SetFile::FullSpace { dim: *dim },
            FeasibleSet::Ball { center, radius } => {
                SetFile::Ball { center: center.iter().cloned().collect(), radius: *radius }
            }
            FeasibleSet::Box { lower, upper } => SetFile::Box {
                lower: lower.iter().cloned().collect(),
                upper: upper.iter().cloned().collect(),
            },
            FeasibleSet::SimplexProduct { block_sizes, demands } => {
                SetFile::SimplexProduct { blocks: block_sizes.clone(), demands: demands.clone() }
            }
        }
    }

    fn to_set(&self) -> Result<FeasibleSet> {
        match self {
            SetFile::FullSpace { dim } => FeasibleSet::full_space(*dim),
            SetFile::Ball { center, radius } => FeasibleSet::ball(Point::from_vec(center.clone()), *radius),
            SetFile::Box { lower, upper } => {
                FeasibleSet::boxed(Point::from_vec(lower.clone()), Point::from_vec(upper.clone()))
            }
            SetFile::SimplexProduct { blocks, demands } => {
                FeasibleSet::simplex_product(blocks.clone(), demands.clone())
            }
        }
    }
}

/// Serialisable problem description; matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemFile {
    pub kind: String,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<Link>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demands: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetFile>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.iter().flatten().cloned()))
}

impl ProblemFile {
    pub fn from_problem(p: &VIProblem) -> Result<Self> {
        let mut f = ProblemFile { kind: p.kind.to_string(), seed: p.seed, ..Default::default() };
        match &p.operator {
            Operator::Affine(spec) => {
                f.g = Some(rows_of(&spec.g));
                f.b = Some(spec.b.iter().cloned().collect());
                f.noise_sigma = p.noise_sigma;
                f.x_star = p.known_solution.as_ref().map(|x| x.iter().cloned().collect());
                match &p.set {
                    FeasibleSet::SimplexProduct { block_sizes, demands } => {
                        f.blocks = Some(block_sizes.clone());
                        f.demands = Some(demands.clone());
                    }
                    other => f.set = Some(SetFile::from_set(other)),
                }
                if let Some(b) = &p.block_sizes {
                    f.blocks = Some(b.clone());
                }
            }
            Operator::Glm(spec) => {
                f.a = Some(rows_of(&spec.a));
                f.x_star = Some(spec.x_star.iter().cloned().collect());
                f.radius = Some(spec.radius);
                f.sigma_y = Some(spec.sigma_y);
                f.link = Some(spec.link);
            }
            Operator::Custom { .. } => return Err(invalid("custom operators are not serialisable")),
        }
        Ok(f)
    }

    pub fn to_problem(&self) -> Result<VIProblem> {
        match self.kind.as_str() {
            "affine" | "traffic" => {
                let g = matrix_of(self.g.as_deref().ok_or_else(|| invalid("missing G"))?)?;
                let b = Point::from_vec(self.b.clone().ok_or_else(|| invalid("missing b"))?);
                let set = match (&self.set, &self.blocks, &self.demands) {
                    (Some(s), _, _) => s.to_set()?,
                    (None, Some(bl), Some(d)) => FeasibleSet::simplex_product(bl.clone(), d.clone())?,
                    (None, Some(bl), None) => FeasibleSet::simplex_product(bl.clone(), vec![1.0; bl.len()])?,
                    (None, None, _) => FeasibleSet::full_space(b.len())?,
                };
                let mut p = VIProblem::affine(set, AffineSpec::new(g, b)?)?;
                if self.kind == "traffic" {
                    p.kind = ProblemKind::Traffic;
                }
                p.seed = self.seed;
                if let Some(s) = self.noise_sigma {
                    p = p.with_additive_noise(s)?;
                }
                if let Some(x) = &self.x_star {
                    p.known_solution = Some(Point::from_vec(x.clone()));
                }
                if let Some(bl) = &self.blocks {
                    p = p.with_blocks(bl.clone())?;
                }
                Ok(p)
            }
            "glm" | "glm_hinge" | "glm_ramp" => {
                let a = matrix_of(self.a.as_deref().ok_or_else(|| invalid("missing A"))?)?;
                let x_star = Point::from_vec(self.x_star.clone().ok_or_else(|| invalid("missing x_star"))?);
                let link = self.link.unwrap_or(if self.kind == "glm_ramp" {
                    Link::RampSigmoid
                } else {
                    Link::Hinge
                });
                let radius = self.radius.unwrap_or_else(|| x_star.norm());
                let spec = GlmSpec::new(link, a, x_star, radius, self.sigma_y.unwrap_or(0.0))?;
                glm_problem(spec, self.seed)
            }
            other => Err(invalid(format!("unknown problem kind '{other}'"))),
        }
    }
}
