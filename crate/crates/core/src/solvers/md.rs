use std::time::Instant;

use super::{expect_algorithm, finish, md_potential, resolve_defaults, Algorithm, IterationTrace, SolverConfig, SolverReport, StepSchedule};
use crate::error::Result;
use crate::losses::{Dataset, Loss, Objective};
use crate::potentials::Potential;
use crate::privacy::{sample_gaussian_vec, CovarianceFactor};
use crate::rng::{stream_rng, streams, StreamRng};

/// Noise added to each full gradient.
enum GradientNoise {
    Gaussian { sigma: f64, rng: StreamRng },
    SubGaussian { factor: CovarianceFactor, rng: StreamRng },
}

impl GradientNoise {
    fn perturb(&mut self, g: &mut [f64]) {
        match self {
            GradientNoise::Gaussian { sigma, rng } => {
                if *sigma > 0.0 {
                    let b = sample_gaussian_vec(g.len(), *sigma, rng);
                    g.iter_mut().zip(&b).for_each(|(a, n)| *a += n);
                }
            }
            GradientNoise::SubGaussian { factor, rng } => {
                let b = factor.sample(rng);
                g.iter_mut().zip(&b).for_each(|(a, n)| *a += n);
            }
        }
    }
}

/// Mirror descent from the potential's initial state. Step `t` (producing
/// `theta_{t+1}`) uses `eta(t)`; the output is the mean of `theta_1..theta_T`.
fn run(
    pot: &Potential,
    objective: &Objective,
    steps: usize,
    eta: impl Fn(usize) -> f64,
    noise: &mut GradientNoise,
    record: bool,
) -> Result<(Vec<f64>, Option<IterationTrace>)> {
    let mut state = pot.initial_state();
    let mut theta = pot.to_point(&state);
    let mut sum = theta.clone();
    let mut trace = record.then(IterationTrace::default);
    if let Some(tr) = trace.as_mut() {
        tr.iterates.push(theta.clone());
    }
    for t in 1..steps {
        let mut g = objective.grad(&theta);
        noise.perturb(&mut g);
        let step = eta(t);
        state = pot.mirror_step(&state, &pot.pull_back(&g), step)?;
        theta = pot.to_point(&state);
        sum.iter_mut().zip(&theta).for_each(|(a, b)| *a += b);
        if let Some(tr) = trace.as_mut() {
            tr.iterates.push(theta.clone());
            tr.step_sizes.push(step);
        }
    }
    let avg = sum.iter().map(|a| a / steps as f64).collect();
    Ok((avg, trace))
}

/// Private mirror descent with per-step Gaussian gradient noise, or with
/// the configured sub-Gaussian noise when `gradient_noise` is set.
pub fn noisy_mirror_descent(cfg: &SolverConfig, data: &Dataset) -> Result<SolverReport> {
    let started = Instant::now();
    expect_algorithm(cfg, Algorithm::NoisyMd)?;
    let resolved = resolve_defaults(cfg, data)?;
    let pot = md_potential(cfg)?;
    let loss = Loss::new(cfg.loss.clone())?;
    let objective = Objective::new(&loss, data);
    let mut noise = match &cfg.gradient_noise {
        Some(cov) => GradientNoise::SubGaussian {
            factor: CovarianceFactor::new(data.dim(), cov)?,
            rng: stream_rng(cfg.seed, streams::SUB_GAUSSIAN),
        },
        None => GradientNoise::Gaussian {
            sigma: resolved.plan.mechanism.sigma(),
            rng: stream_rng(cfg.seed, streams::GRADIENT_NOISE),
        },
    };
    let kappa = resolved.constants.potential_scale.unwrap_or(1.0);
    let eta = resolved.eta.expect("mirror descent resolves eta") * kappa;
    let steps = resolved.steps;
    let (theta, trace) = run(&pot, &objective, steps, |_| eta, &mut noise, cfg.record_trace)?;
    let theta = clamp_into(cfg, theta)?;
    Ok(finish(cfg, resolved, theta, steps, true, trace, started))
}

/// Mirror descent for `Delta`-strongly convex losses with `eta_t = 2/(Delta t)`.
pub fn strongly_convex_md(cfg: &SolverConfig, data: &Dataset) -> Result<SolverReport> {
    let started = Instant::now();
    expect_algorithm(cfg, Algorithm::StronglyConvexMd)?;
    let resolved = resolve_defaults(cfg, data)?;
    let pot = md_potential(cfg)?;
    let loss = Loss::new(cfg.loss.clone())?;
    let objective = Objective::new(&loss, data);
    let mut noise = GradientNoise::Gaussian {
        sigma: resolved.plan.mechanism.sigma(),
        rng: stream_rng(cfg.seed, streams::GRADIENT_NOISE),
    };
    let delta = resolved.constants.strong_convexity.expect("resolved");
    let schedule = resolved.schedule.unwrap_or(StepSchedule::StronglyConvex);
    let eta = move |t: usize| match schedule {
        StepSchedule::Constant { value } => value,
        _ => 2.0 / (delta * t as f64),
    };
    let steps = resolved.steps;
    let (theta, trace) = run(&pot, &objective, steps, eta, &mut noise, cfg.record_trace)?;
    let theta = clamp_into(cfg, theta)?;
    Ok(finish(cfg, resolved, theta, steps, true, trace, started))
}

/// The average of feasible points is feasible up to rounding; projectable
/// bodies get the rounding removed.
fn clamp_into(cfg: &SolverConfig, theta: Vec<f64>) -> Result<Vec<f64>> {
    if cfg.body.supports_projection() && !cfg.body.contains(&theta)? {
        cfg.body.euclidean_project(&theta)
    } else {
        Ok(theta)
    }
}
