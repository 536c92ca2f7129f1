//! Shared fixtures for the benchmarks.

use dperm::{generate_lasso, Algorithm, ConvexBody, Dataset, LossSpec, PotentialSpec, PrivacyBudget, SolverConfig};

pub fn lasso(n: usize, p: usize) -> Dataset {
    generate_lasso(n, p, 4.min(p), 0.1, 1).expect("valid generator parameters")
}

pub fn budget() -> PrivacyBudget {
    PrivacyBudget::new(1.0, 1e-6).expect("valid budget")
}

/// A solver config on the unit l1 ball with a fixed step count and width, so
/// that a benchmark measures the iterations and nothing else.
pub fn config(algorithm: Algorithm, p: usize, steps: usize) -> SolverConfig {
    let body = ConvexBody::l1_ball(p, 1.0).expect("positive radius");
    let mut cfg = SolverConfig::new(algorithm, body, LossSpec::squared(), budget()).with_steps(steps);
    cfg.gaussian_width = Some((2.0 * (2.0 * p as f64).ln()).sqrt());
    if algorithm == Algorithm::NoisyMd {
        cfg = cfg.with_potential(PotentialSpec::SquaredL2 { center: None });
    }
    cfg
}
