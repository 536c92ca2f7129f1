use std::time::Instant;

use super::{expect_algorithm, finish, resolve_defaults, Algorithm, IterationTrace, SolverConfig, SolverReport, StepSchedule};
use crate::error::Result;
use crate::linalg::dot;
use crate::losses::{Dataset, Loss, Objective};
use crate::privacy::{report_noisy_min, sample_gaussian_vec};
use crate::rng::{stream_rng, streams};

/// Mixing weight of the step that produces `theta_{t+1}`. The open-loop rule
/// is the classical `2/(k+2)` with `k = t - 1`, so the first step moves all
/// the way to the selected vertex.
fn mixing_weight(schedule: StepSchedule, t: usize, steps: usize) -> f64 {
    match schedule {
        StepSchedule::FwFixedHorizon => 1.0 / (steps as f64 + 2.0),
        StepSchedule::Constant { value } => value,
        _ => 2.0 / (t as f64 + 1.0),
    }
}

fn mix(theta: &mut [f64], s: &[f64], mu: f64) {
    theta.iter_mut().zip(s).for_each(|(a, b)| *a = (1.0 - mu) * *a + mu * b);
}

/// Frank-Wolfe over a vertex-enumerable body, selecting each vertex by
/// report-noisy-min over the Laplace-perturbed scores `<v, grad L(theta_t)>`.
pub fn private_fw_polytope(cfg: &SolverConfig, data: &Dataset) -> Result<SolverReport> {
    let started = Instant::now();
    expect_algorithm(cfg, Algorithm::FwPolytope)?;
    let resolved = resolve_defaults(cfg, data)?;
    let loss = Loss::new(cfg.loss.clone())?;
    let objective = Objective::new(&loss, data);
    let scale = resolved.plan.mechanism.laplace_scale();
    let schedule = resolved.schedule.unwrap_or(StepSchedule::FwOpenLoop);
    let steps = resolved.steps;
    let k = cfg.body.vertex_count().expect("validated");
    let mut rng = stream_rng(cfg.seed, streams::SELECTION_NOISE);

    let mut weights = vec![1.0 / k as f64; k];
    let mut theta = cfg.body.center();
    let mut trace = IterationTrace::default();
    if cfg.record_trace {
        trace.iterates.push(theta.clone());
    }
    for t in 1..steps {
        let g = objective.grad(&theta);
        let scores = cfg.body.vertex_scores(&g).expect("vertex-enumerable");
        let i = report_noisy_min(&scores, scale, &mut rng)?;
        let v = cfg.body.vertex(i).expect("index in range");
        let mu = mixing_weight(schedule, t, steps);
        trace.gaps.push(dot(&g, &theta) - scores[i]);
        trace.selected.push(i);
        trace.step_sizes.push(mu);
        mix(&mut theta, &v, mu);
        weights.iter_mut().for_each(|w| *w *= 1.0 - mu);
        weights[i] += mu;
        if cfg.record_trace {
            trace.iterates.push(theta.clone());
        }
    }
    trace.weights = weights;
    Ok(finish(cfg, resolved, theta, steps, true, Some(trace).filter(|_| cfg.record_trace), started))
}

/// Frank-Wolfe with a Gaussian-perturbed gradient passed to the exact linear
/// minimization oracle of the body.
pub fn private_fw_general(cfg: &SolverConfig, data: &Dataset) -> Result<SolverReport> {
    let started = Instant::now();
    expect_algorithm(cfg, Algorithm::FwGeneral)?;
    let resolved = resolve_defaults(cfg, data)?;
    let loss = Loss::new(cfg.loss.clone())?;
    let objective = Objective::new(&loss, data);
    let sigma = resolved.plan.mechanism.sigma();
    let schedule = resolved.schedule.unwrap_or(StepSchedule::FwOpenLoop);
    let steps = resolved.steps;
    let mut rng = stream_rng(cfg.seed, streams::GRADIENT_NOISE);

    let mut theta = cfg.body.center();
    let mut trace = cfg.record_trace.then(IterationTrace::default);
    if let Some(tr) = trace.as_mut() {
        tr.iterates.push(theta.clone());
    }
    for t in 1..steps {
        let g = objective.grad(&theta);
        let mut noisy = g.clone();
        let b = sample_gaussian_vec(noisy.len(), sigma, &mut rng);
        noisy.iter_mut().zip(&b).for_each(|(a, n)| *a += n);
        let s = cfg.body.lmo(&noisy)?;
        let mu = mixing_weight(schedule, t, steps);
        let gap = dot(&g, &theta) - dot(&g, &s);
        mix(&mut theta, &s, mu);
        if let Some(tr) = trace.as_mut() {
            tr.gaps.push(gap);
            tr.step_sizes.push(mu);
            tr.iterates.push(theta.clone());
        }
    }
    Ok(finish(cfg, resolved, theta, steps, true, trace, started))
}
