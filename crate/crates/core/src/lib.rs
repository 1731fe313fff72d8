//! Operator extrapolation methods for monotone variational inequalities:
//! deterministic (OE), stochastic (SOE) and stochastic block (SBOE) variants,
//! together with problem generators, quality metrics and a benchmark harness.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{FeasibleSet, Point, ProxGeometry};
pub use problems::VIProblem;
pub use schedules::{PolicyName, Schedule, ScheduleInputs, StepParams};
pub use solvers::{RunOptions, Trajectory};
