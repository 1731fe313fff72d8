//! Feasible sets, Bregman distances and the prox-mapping.
//!
//! Only the Euclidean distance-generating function `ω(x) = ½‖x‖²` is
//! implemented, so every prox step is a Euclidean projection of
//! `x_t − γ g` onto the set.

use std::ops::Range;

use nalgebra::DVector;

use crate::error::{check_dim, invalid, Error, Result};

pub type Point = DVector<f64>;

/// Absolute slack for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
const NONNEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    FullSpace { dim: usize },
    Ball { center: Point, radius: f64 },
    Box { lower: Point, upper: Point },
    SimplexProduct { block_sizes: Vec<usize>, demands: Vec<f64> },
}

impl FeasibleSet {
    pub fn full_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        Ok(Self::FullSpace { dim })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSet(format!("ball radius {radius} must be positive")));
        }
        if center.is_empty() {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn boxed(lower: Point, upper: Point) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidSet("box requires lower <= upper".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn simplex_product(block_sizes: Vec<usize>, demands: Vec<f64>) -> Result<Self> {
        if block_sizes.is_empty() || block_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidSet("block sizes must be positive".into()));
        }
        if demands.len() != block_sizes.len() {
            return Err(Error::InvalidSet(format!(
                "{} demands for {} blocks",
                demands.len(),
                block_sizes.len()
            )));
        }
        if demands.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidSet("demands must be nonnegative".into()));
        }
        Ok(Self::SimplexProduct { block_sizes, demands })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::FullSpace { dim } => *dim,
            Self::Ball { center, .. } => center.len(),
            Self::Box { lower, .. } => lower.len(),
            Self::SimplexProduct { block_sizes, .. } => block_sizes.iter().sum(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Self::FullSpace { .. })
    }

    pub fn contains(&self, x: &Point) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Self::FullSpace { .. } => true,
            Self::Ball { center, radius } => (x - center).norm() <= radius + MEMBERSHIP_TOL,
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *v >= l - MEMBERSHIP_TOL && *v <= u + MEMBERSHIP_TOL),
            Self::SimplexProduct { demands, .. } => {
                self.simplex_ranges().zip(demands).all(|(r, &d)| {
                    let blk = x.rows(r.start, r.len());
                    (blk.sum() - d).abs() <= MEMBERSHIP_TOL && blk.iter().all(|&v| v >= -NONNEG_TOL)
                })
            }
        }
    }

    /// Coordinate ranges of the simplex factors (a single range otherwise).
    pub fn simplex_ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let sizes: Vec<usize> = match self {
            Self::SimplexProduct { block_sizes, .. } => block_sizes.clone(),
            _ => vec![self.dim()],
        };
        sizes.into_iter().scan(0usize, |start, s| {
            let r = *start..*start + s;
            *start += s;
            Some(r)
        })
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &Point) -> Result<Point> {
        check_dim(self.dim(), v.len())?;
        let mut out = v.clone();
        self.project_range_into(0..v.len(), &mut out)?;
        Ok(out)
    }

    /// Whether `ranges` splits the set into independent factors.
    pub fn check_partition(&self, ranges: &[Range<usize>]) -> Result<()> {
        let mut next = 0;
        for r in ranges {
            if r.start != next || r.is_empty() {
                return Err(Error::IncompatiblePartition("blocks must tile 0..n".into()));
            }
            next = r.end;
        }
        if next != self.dim() {
            return Err(Error::IncompatiblePartition(format!(
                "blocks cover {next} of {} coordinates",
                self.dim()
            )));
        }
        match self {
            Self::FullSpace { .. } | Self::Box { .. } => Ok(()),
            Self::Ball { .. } if ranges.len() == 1 => Ok(()),
            Self::Ball { .. } => Err(Error::IncompatiblePartition("a ball is not a product set".into())),
            Self::SimplexProduct { .. } => {
                let bounds: Vec<usize> = self.simplex_ranges().map(|r| r.end).collect();
                for r in ranges {
                    if r.start != 0 && !bounds.contains(&r.start) {
                        return Err(Error::IncompatiblePartition(format!(
                            "block starting at {} splits a simplex factor",
                            r.start
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Projects the coordinates `range` of `x` in place onto the matching factor.
    /// `range` must be compatible with the set's product structure.
    pub fn project_range_into(&self, range: Range<usize>, x: &mut Point) -> Result<()> {
        match self {
            Self::FullSpace { .. } => {}
            Self::Ball { center, radius } => {
                let dist = (&*x - center).norm();
                if dist > *radius {
                    let s = radius / dist;
                    for i in 0..x.len() {
                        x[i] = center[i] + s * (x[i] - center[i]);
                    }
                }
            }
            Self::Box { lower, upper } => {
                for i in range {
                    x[i] = x[i].clamp(lower[i], upper[i]);
                }
            }
            Self::SimplexProduct { demands, .. } => {
                for (r, &d) in self.simplex_ranges().zip(demands) {
                    if r.end <= range.start || r.start >= range.end {
                        continue;
                    }
                    let blk: Point = x.rows(r.start, r.len()).into_owned();
                    let p = project_simplex(&blk, d)?;
                    x.rows_mut(r.start, r.len()).copy_from(&p);
                }
            }
        }
        Ok(())
    }

    /// A natural interior reference point (origin for the full space).
    pub fn analytic_center(&self) -> Point {
        match self {
            Self::FullSpace { dim } => Point::zeros(*dim),
            Self::Ball { center, .. } => center.clone(),
            Self::Box { lower, upper } => (lower + upper) * 0.5,
            Self::SimplexProduct { demands, .. } => {
                let mut c = Point::zeros(self.dim());
                for (r, &d) in self.simplex_ranges().zip(demands) {
                    let n = r.len() as f64;
                    c.rows_mut(r.start, r.len()).fill(d / n);
                }
                c
            }
        }
    }

    /// `max_{x∈X} ½‖x1 − x‖²`, attained at an extreme point.
    pub fn max_bregman_from(&self, x1: &Point) -> Result<f64> {
        check_dim(self.dim(), x1.len())?;
        match self {
            Self::FullSpace { .. } => Err(Error::Unbounded),
            Self::Ball { center, radius } => Ok(0.5 * ((x1 - center).norm() + radius).powi(2)),
            Self::Box { lower, upper } => Ok(0.5
                * x1.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(v, (l, u))| (v - l).abs().max((v - u).abs()).powi(2))
                    .sum::<f64>()),
            Self::SimplexProduct { demands, .. } => {
                // ‖x1_i − d e_j‖² = ‖x1_i‖² − 2 d x1_ij + d², maximised at the smallest entry.
                let mut total = 0.0;
                for (r, &d) in self.simplex_ranges().zip(demands) {
                    let blk = x1.rows(r.start, r.len());
                    let min = blk.iter().cloned().fold(f64::INFINITY, f64::min);
                    total += blk.norm_squared() - 2.0 * d * min + d * d;
                }
                Ok(0.5 * total)
            }
        }
    }

    /// `max_{x,y∈X} ½‖x − y‖²`.
    pub fn bregman_diameter(&self) -> Result<f64> {
        match self {
            Self::FullSpace { .. } => Err(Error::Unbounded),
            Self::Ball { radius, .. } => Ok(2.0 * radius * radius),
            Self::Box { lower, upper } => Ok(0.5 * (upper - lower).norm_squared()),
            Self::SimplexProduct { block_sizes, demands } => Ok(block_sizes
                .iter()
                .zip(demands)
                .map(|(&s, &d)| if s >= 2 { d * d } else { 0.0 })
                .sum()),
        }
    }
}

/// Distance-generating function choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dgf {
    #[default]
    EuclideanHalfSquaredNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProxGeometry {
    pub dgf: Dgf,
}

impl ProxGeometry {
    pub fn euclidean() -> Self {
        Self::default()
    }

    /// Lipschitz constant of ∇ω.
    pub fn l_omega(&self) -> f64 {
        1.0
    }

    pub fn bregman(&self, x: &Point, y: &Point) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(0.5 * (x - y).norm_squared())
    }

    /// `argmin_{x∈X} γ⟨g, x⟩ + V(x_t, x)`.
    pub fn prox_step(&self, set: &FeasibleSet, x_t: &Point, g: &Point, gamma: f64) -> Result<Point> {
        check_dim(set.dim(), x_t.len())?;
        check_dim(set.dim(), g.len())?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("stepsize {gamma} must be positive")));
        }
        if !set.contains(x_t) {
            return Err(Error::NotFeasible);
        }
        let mut out = x_t - g * gamma;
        set.project_range_into(0..out.len(), &mut out)?;
        Ok(out)
    }

    /// Prox step restricted to the coordinates in `range`; other coordinates are
    /// copied from `x_t`. Inputs are trusted (solver inner loop).
    pub fn prox_block_into(
        &self,
        set: &FeasibleSet,
        range: Range<usize>,
        x_t: &Point,
        g_block: &[f64],
        gamma: f64,
        out: &mut Point,
    ) -> Result<()> {
        out.copy_from(x_t);
        for (k, i) in range.clone().enumerate() {
            out[i] = x_t[i] - gamma * g_block[k];
        }
        set.project_range_into(range, out)
    }
}

/// Euclidean projection of `v` onto `{x ≥ 0, Σx = d}` by sort-and-threshold.
pub fn project_simplex(v: &Point, d: f64) -> Result<Point> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(invalid(format!("simplex demand {d} must be nonnegative")));
    }
    if v.is_empty() {
        return Err(invalid("cannot project onto an empty simplex"));
    }
    if d == 0.0 {
        return Ok(Point::zeros(v.len()));
    }
    let mut u: Vec<f64> = v.iter().cloned().collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - d) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    let mut x = v.map(|vi| (vi - tau).max(0.0));
    // Rounding can leave the sum a few ulps away from d; spread the correction
    // over the support.
    let s = x.sum();
    if s > 0.0 && (s - d).abs() > 0.0 {
        x *= d / s;
    }
    Ok(x)
}

/// `argmin_{x∈X} ⟨c, x⟩`, ties going to the lowest coordinate index.
pub fn linear_minimize(set: &FeasibleSet, c: &Point) -> Result<Point> {
    check_dim(set.dim(), c.len())?;
    match set {
        FeasibleSet::FullSpace { .. } => Err(Error::Unbounded),
        FeasibleSet::Ball { center, radius } => {
            let n = c.norm();
            if n == 0.0 {
                Ok(center.clone())
            } else {
                Ok(center - c * (radius / n))
            }
        }
        FeasibleSet::Box { lower, upper } => Ok(Point::from_fn(c.len(), |i, _| {
            if c[i] < 0.0 {
                upper[i]
            } else {
                lower[i]
            }
        })),
        FeasibleSet::SimplexProduct { demands, .. } => {
            let mut x = Point::zeros(c.len());
            for (r, &d) in set.simplex_ranges().zip(demands) {
                let mut best = r.start;
                for i in r.clone() {
                    if c[i] < c[best] {
                        best = i;
                    }
                }
                x[best] = d;
            }
            Ok(x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    #[test]
    fn bregman_examples() {
        let g = ProxGeometry::euclidean();
        assert_eq!(g.bregman(&p(&[1.0, 2.0]), &p(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(g.bregman(&p(&[0.0, 0.0]), &p(&[3.0, 4.0])).unwrap(), 12.5);
        assert_eq!(g.bregman(&p(&[1.0, 1.0]), &p(&[1.0, 2.0])).unwrap(), 0.5);
        assert!(matches!(
            g.bregman(&p(&[1.0]), &p(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn prox_examples() {
        let g = ProxGeometry::euclidean();
        let full = FeasibleSet::full_space(2).unwrap();
        let x = g.prox_step(&full, &p(&[1.0, 1.0]), &p(&[2.0, 0.0]), 0.5).unwrap();
        assert_eq!(x, p(&[0.0, 1.0]));

        let ball = FeasibleSet::ball(p(&[0.0, 0.0]), 1.0).unwrap();
        let x = g.prox_step(&ball, &p(&[1.0, 0.0]), &p(&[-2.0, -4.0]), 1.0).unwrap();
        assert!((x - p(&[0.6, 0.8])).norm() < 1e-15);

        let simplex = FeasibleSet::simplex_product(vec![2], vec![1.0]).unwrap();
        let x = g.prox_step(&simplex, &p(&[0.5, 0.5]), &p(&[-1.5, 0.5]), 1.0).unwrap();
        assert_eq!(x, p(&[1.0, 0.0]));
    }

    #[test]
    fn prox_rejects_bad_input() {
        let g = ProxGeometry::euclidean();
        let ball = FeasibleSet::ball(p(&[0.0, 0.0]), 1.0).unwrap();
        assert!(matches!(
            g.prox_step(&ball, &p(&[2.0, 0.0]), &p(&[0.0, 0.0]), 1.0),
            Err(Error::NotFeasible)
        ));
        assert!(g.prox_step(&ball, &p(&[0.0, 0.0]), &p(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn simplex_projection_examples() {
        assert_eq!(project_simplex(&p(&[0.5, 0.5]), 1.0).unwrap(), p(&[0.5, 0.5]));
        assert_eq!(project_simplex(&p(&[2.0, 0.0]), 1.0).unwrap(), p(&[1.0, 0.0]));
        assert_eq!(project_simplex(&p(&[1.0, 1.0, 1.0]), 3.0).unwrap(), p(&[1.0, 1.0, 1.0]));
        assert!(project_simplex(&p(&[1.0]), -1.0).is_err());
        assert_eq!(project_simplex(&p(&[3.0, -1.0]), 0.0).unwrap(), p(&[0.0, 0.0]));
    }

    #[test]
    fn linear_minimize_examples() {
        let s = FeasibleSet::simplex_product(vec![3], vec![1.0]).unwrap();
        assert_eq!(linear_minimize(&s, &p(&[3.0, 1.0, 2.0])).unwrap(), p(&[0.0, 1.0, 0.0]));
        // tie → lowest index
        assert_eq!(linear_minimize(&s, &p(&[1.0, 1.0, 2.0])).unwrap(), p(&[1.0, 0.0, 0.0]));
        let b = FeasibleSet::ball(p(&[0.0, 0.0]), 2.0).unwrap();
        assert_eq!(linear_minimize(&b, &p(&[0.0, 1.0])).unwrap(), p(&[0.0, -2.0]));
        assert_eq!(linear_minimize(&b, &p(&[0.0, 0.0])).unwrap(), p(&[0.0, 0.0]));
        let bx = FeasibleSet::boxed(p(&[0.0, 0.0]), p(&[1.0, 1.0])).unwrap();
        assert_eq!(linear_minimize(&bx, &p(&[-1.0, 1.0])).unwrap(), p(&[1.0, 0.0]));
        let f = FeasibleSet::full_space(2).unwrap();
        assert!(matches!(linear_minimize(&f, &p(&[1.0, 0.0])), Err(Error::Unbounded)));
    }

    #[test]
    fn set_invariants_enforced() {
        assert!(FeasibleSet::ball(p(&[0.0]), 0.0).is_err());
        assert!(FeasibleSet::boxed(p(&[1.0]), p(&[0.0])).is_err());
        assert!(FeasibleSet::simplex_product(vec![2, 2], vec![1.0]).is_err());
        assert!(FeasibleSet::simplex_product(vec![2, 0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn membership() {
        let s = FeasibleSet::simplex_product(vec![2, 1], vec![1.0, 2.0]).unwrap();
        assert!(s.contains(&p(&[0.3, 0.7, 2.0])));
        assert!(!s.contains(&p(&[0.3, 0.6, 2.0])));
        assert!(!s.contains(&p(&[1.1, -0.1, 2.0])));
        assert!(!s.contains(&p(&[0.5, 0.5])));
        let b = FeasibleSet::ball(p(&[1.0, 1.0]), 1.0).unwrap();
        assert!(b.contains(&p(&[2.0, 1.0])));
        assert!(!b.contains(&p(&[2.1, 1.0])));
    }

    #[test]
    fn extreme_distances() {
        let s = FeasibleSet::simplex_product(vec![2, 3], vec![1.0, 2.0]).unwrap();
        let x1 = s.analytic_center();
        // block 1: ½‖(0.5,0.5) − (1,0)‖² = 0.25; block 2: ½‖(2/3,2/3,2/3) − (2,0,0)‖² = 4/3
        assert!((s.max_bregman_from(&x1).unwrap() - (0.25 + 4.0 / 3.0)).abs() < 1e-14);
        assert_eq!(s.bregman_diameter().unwrap(), 5.0);
        let b = FeasibleSet::ball(p(&[0.0, 0.0]), 2.0).unwrap();
        assert_eq!(b.max_bregman_from(&p(&[1.0, 0.0])).unwrap(), 4.5);
        assert_eq!(b.bregman_diameter().unwrap(), 8.0);
        let bx = FeasibleSet::boxed(p(&[0.0, 0.0]), p(&[1.0, 2.0])).unwrap();
        assert_eq!(bx.max_bregman_from(&p(&[0.25, 0.0])).unwrap(), 0.5 * (0.5625 + 4.0));
    }

    #[test]
    fn partitions() {
        let s = FeasibleSet::simplex_product(vec![2, 2], vec![1.0, 1.0]).unwrap();
        assert!(s.check_partition(&[0..2, 2..4]).is_ok());
        assert!(s.check_partition(&[0..4]).is_ok());
        assert!(s.check_partition(&[0..1, 1..4]).is_err());
        assert!(s.check_partition(&[0..2]).is_err());
        let b = FeasibleSet::ball(p(&[0.0, 0.0]), 1.0).unwrap();
        assert!(b.check_partition(&[0..1, 1..2]).is_err());
    }
}
