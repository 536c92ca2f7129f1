use std::time::Instant;

use super::{expect_algorithm, finish, resolve_defaults, Algorithm, SolverConfig, SolverReport, OBJPERT_MAX_ITER, OBJPERT_TOL};
use crate::error::Result;
use crate::linalg::{axpy, dot, sub};
use crate::losses::{Dataset, Loss, Objective};
use crate::optim::{minimize, Smooth};
use crate::privacy::sample_gaussian_vec;
use crate::rng::{stream_rng, streams};

/// `L(theta) + zeta/2 ||theta - theta_0||^2 + <b, theta>`
pub(super) struct Perturbed<'a> {
    pub(super) objective: Objective<'a>,
    pub(super) zeta: f64,
    pub(super) anchor: Vec<f64>,
    pub(super) b: Vec<f64>,
}

impl Smooth for Perturbed<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let d = sub(x, &self.anchor);
        self.objective.value(x) + 0.5 * self.zeta * dot(&d, &d) + dot(&self.b, x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.objective.grad(x);
        if self.zeta > 0.0 {
            axpy(self.zeta, &sub(x, &self.anchor), &mut g);
        }
        axpy(1.0, &self.b, &mut g);
        g
    }
}

/// One Gaussian linear perturbation of the objective, plus a proximal term
/// toward the anchor when the loss is not curved enough on its own; the
/// output is the exact minimizer of the perturbed problem.
pub fn objective_perturbation(cfg: &SolverConfig, data: &Dataset) -> Result<SolverReport> {
    let started = Instant::now();
    expect_algorithm(cfg, Algorithm::ObjPert)?;
    let mut resolved = resolve_defaults(cfg, data)?;
    let loss = Loss::new(cfg.loss.clone())?;
    let (sigma, zeta) = match resolved.plan.mechanism {
        crate::privacy::Mechanism::ObjPert { sigma, zeta } => (sigma, zeta),
        _ => unreachable!("objective perturbation resolves its own mechanism"),
    };
    let mut rng = stream_rng(cfg.seed, streams::OBJECTIVE_NOISE);
    let b = sample_gaussian_vec(data.dim(), sigma, &mut rng);
    let anchor = cfg.anchor.clone().unwrap_or_else(|| cfg.body.center());
    let f = Perturbed {
        objective: Objective::new(&loss, data),
        zeta,
        anchor: anchor.clone(),
        b,
    };
    let m = minimize(&cfg.body, &f, &anchor, OBJPERT_TOL, OBJPERT_MAX_ITER)?;
    resolved.plan.note(format!(
        "inner solve: {} in {} iterations, gap {:.2e}{}",
        m.method,
        m.iterations,
        m.gap,
        if m.converged { "" } else { " (iteration cap reached, best iterate returned)" }
    ));
    if !m.converged {
        log::warn!("objective perturbation stopped at the iteration cap with gap {:.3e}", m.gap);
    }
    Ok(finish(cfg, resolved, m.theta, m.iterations, m.converged, None, started))
}
