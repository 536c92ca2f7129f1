//! Differentially private empirical risk minimization over convex bodies.
//!
//! Noisy mirror descent, objective perturbation and private Frank-Wolfe,
//! calibrated by the geometry of the constraint set, plus a non-private
//! oracle and a sweep harness for measuring excess empirical risk.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod optim;
pub mod oracle;
pub mod potentials;
pub mod privacy;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{BodyKind, ConvexBody, WidthEstimate};
pub use harness::{generate_lasso, run_sweep, summarize, ExperimentSpec, RiskRecord};
pub use losses::{DataProfile, Dataset, Loss, LossSpec};
pub use oracle::{excess_risk, solve_exact, OracleSolution};
pub use potentials::{Potential, PotentialSpec};
pub use privacy::{Covariance, Mechanism, NoisePlan, PrivacyBudget};
pub use solvers::{solve, Algorithm, SolverConfig, SolverReport, StepSchedule};
