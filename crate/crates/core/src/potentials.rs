//! Mirror maps for mirror descent.
//!
//! A [`Potential`] is bound to the body it lives on. Most potentials work
//! directly on points `theta` of the body. The polytope q-norm potential
//! instead works on vertex weights `alpha` in the probability simplex, with
//! `theta = sum_i alpha_i v_i`; its "state" is therefore `k`-dimensional.
//! [`Potential::to_point`] and [`Potential::pull_back`] translate between the
//! two spaces, so solvers can treat every potential uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{project_simplex, BodyKind, ConvexBody, MEMBERSHIP_TOL};
use crate::linalg::{dot, norm1, norm2, norm_q, sub};

/// Floor applied to entropy coordinates before taking logarithms.
pub const ENTROPY_FLOOR: f64 = 1e-12;

const PROX_MAX_ITER: usize = 10_000;
const PROX_TOL: f64 = 1e-8;

/// Configuration form of a potential, as it appears in solver configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    SquaredL2 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    NegativeEntropy,
    PolytopeQNorm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<f64>,
    },
    GroupedL1,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// `1/2 ||theta - center||_2^2`
    SquaredL2 { center: Vec<f64> },
    /// `sum theta_i ln theta_i` on the simplex
    NegativeEntropy,
    /// `||alpha||_q^2 / (4 (q - 1))` on vertex weights
    PolytopeQNorm { q: f64, vertices: Vec<Vec<f64>> },
    /// `1/(M xi) sum_j ||theta^(j)||_2^M` over blocks of `group` coordinates
    GroupedL1 {
        group: usize,
        exponent: f64,
        xi: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceNorm {
    L2,
    L1,
    /// l1 norm of the vertex-weight vector, an upper bound on the gauge of
    /// `conv(V u -V)` at the represented point.
    CoefficientL1,
    GroupedL1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    domain: ConvexBody,
}

/// Default exponent for the polytope potential with `k` vertices.
pub fn default_polytope_q(k: usize) -> f64 {
    if k >= 8 {
        let l = (k as f64).ln();
        l / (l - 1.0)
    } else {
        2.0
    }
}

impl Potential {
    pub fn new(spec: &PotentialSpec, domain: &ConvexBody) -> Result<Self> {
        let kind = match spec {
            PotentialSpec::SquaredL2 { center } => {
                let center = match center {
                    Some(c) => {
                        check_dim(domain.dim(), c.len())?;
                        if !domain.contains(c)? {
                            return Err(Error::InvalidParameter(
                                "squared-l2 center must lie in the domain".into(),
                            ));
                        }
                        c.clone()
                    }
                    None => domain.center(),
                };
                PotentialKind::SquaredL2 { center }
            }
            PotentialSpec::NegativeEntropy => {
                if !matches!(domain.kind(), BodyKind::Simplex) {
                    return Err(Error::Unsupported(
                        "negative entropy is defined on the simplex only".into(),
                    ));
                }
                PotentialKind::NegativeEntropy
            }
            PotentialSpec::PolytopeQNorm { q } => {
                let vertices = domain.vertices().ok_or_else(|| {
                    Error::Unsupported("polytope q-norm potential needs a vertex list".into())
                })?;
                let q = q.unwrap_or_else(|| default_polytope_q(vertices.len()));
                if !(q > 1.0 && q <= 2.0) {
                    return Err(Error::InvalidParameter(format!("q must lie in (1, 2], got {q}")));
                }
                PotentialKind::PolytopeQNorm { q, vertices }
            }
            PotentialSpec::GroupedL1 => {
                let group = match domain.kind() {
                    BodyKind::GroupedL1Ball { group, .. } => *group,
                    _ => {
                        return Err(Error::Unsupported(
                            "grouped-l1 potential needs a grouped-l1 ball domain".into(),
                        ))
                    }
                };
                let blocks = domain.dim().div_ceil(group);
                let (exponent, xi) = grouped_parameters(blocks);
                PotentialKind::GroupedL1 {
                    group,
                    exponent,
                    xi,
                }
            }
        };
        Ok(Potential {
            kind,
            domain: domain.clone(),
        })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn domain(&self) -> &ConvexBody {
        &self.domain
    }

    /// Dimension of the mirror-descent state.
    pub fn state_dim(&self) -> usize {
        match &self.kind {
            PotentialKind::PolytopeQNorm { vertices, .. } => vertices.len(),
            _ => self.domain.dim(),
        }
    }

    /// Canonical starting state: the body's center, or uniform vertex weights.
    pub fn initial_state(&self) -> Vec<f64> {
        match &self.kind {
            PotentialKind::PolytopeQNorm { vertices, .. } => {
                vec![1.0 / vertices.len() as f64; vertices.len()]
            }
            _ => self.domain.center(),
        }
    }

    pub fn to_point(&self, state: &[f64]) -> Vec<f64> {
        match &self.kind {
            PotentialKind::PolytopeQNorm { vertices, .. } => {
                let mut theta = vec![0.0; self.domain.dim()];
                for (a, v) in state.iter().zip(vertices) {
                    crate::linalg::axpy(*a, v, &mut theta);
                }
                theta
            }
            _ => state.to_vec(),
        }
    }

    /// Chain rule: a gradient at `theta` expressed in state coordinates.
    pub fn pull_back(&self, grad_theta: &[f64]) -> Vec<f64> {
        match &self.kind {
            PotentialKind::PolytopeQNorm { vertices, .. } => {
                vertices.iter().map(|v| dot(v, grad_theta)).collect()
            }
            _ => grad_theta.to_vec(),
        }
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        check_dim(self.state_dim(), s.len())?;
        check_finite(s, "potential argument")?;
        let inside = match &self.kind {
            PotentialKind::PolytopeQNorm { .. } => {
                s.iter().all(|&a| a >= -MEMBERSHIP_TOL)
                    && (s.iter().sum::<f64>() - 1.0).abs() <= 1e-6
            }
            _ => self.domain.contains(s)?,
        };
        if inside {
            Ok(())
        } else {
            Err(Error::OutsideDomain("potential evaluated off its domain".into()))
        }
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.value_unchecked(s))
    }

    fn value_unchecked(&self, s: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::SquaredL2 { center } => {
                0.5 * s.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
            }
            PotentialKind::NegativeEntropy => s
                .iter()
                .map(|&a| {
                    let a = a.max(ENTROPY_FLOOR);
                    a * a.ln()
                })
                .sum(),
            PotentialKind::PolytopeQNorm { q, .. } => {
                let n = norm_q(s, *q);
                n * n / (4.0 * (q - 1.0))
            }
            PotentialKind::GroupedL1 {
                group,
                exponent,
                xi,
            } => {
                s.chunks(*group)
                    .map(|b| norm2(b).powf(*exponent))
                    .sum::<f64>()
                    / (exponent * xi)
            }
        }
    }

    pub fn grad(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(self.grad_unchecked(s))
    }

    fn grad_unchecked(&self, s: &[f64]) -> Vec<f64> {
        match &self.kind {
            PotentialKind::SquaredL2 { center } => sub(s, center),
            PotentialKind::NegativeEntropy => {
                s.iter().map(|&a| a.max(ENTROPY_FLOOR).ln() + 1.0).collect()
            }
            PotentialKind::PolytopeQNorm { q, .. } => {
                let n = norm_q(s, *q);
                if n == 0.0 {
                    return vec![0.0; s.len()];
                }
                let c = n.powf(2.0 - q) / (2.0 * (q - 1.0));
                s.iter()
                    .map(|&a| c * a.signum() * a.abs().powf(q - 1.0))
                    .collect()
            }
            PotentialKind::GroupedL1 {
                group,
                exponent,
                xi,
            } => {
                let mut g = Vec::with_capacity(s.len());
                for b in s.chunks(*group) {
                    let n = norm2(b);
                    if n == 0.0 {
                        g.extend(std::iter::repeat_n(0.0, b.len()));
                    } else {
                        let f = n.powf(exponent - 2.0) / xi;
                        g.extend(b.iter().map(|x| f * x));
                    }
                }
                g
            }
        }
    }

    /// `Psi(a) - Psi(b) - <grad Psi(b), a - b>`.
    pub fn bregman(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_state(a)?;
        self.check_state(b)?;
        Ok(self.bregman_unchecked(a, b))
    }

    fn bregman_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let gb = self.grad_unchecked(b);
        let d = self.value_unchecked(a) - self.value_unchecked(b) - dot(&gb, &sub(a, b));
        d.max(0.0)
    }

    /// Strong-convexity modulus with respect to [`Potential::reference_norm`].
    pub fn strong_convexity_modulus(&self) -> f64 {
        match &self.kind {
            PotentialKind::SquaredL2 { .. } | PotentialKind::NegativeEntropy => 1.0,
            // 1/2 w.r.t. ||.||_q, and ||a||_1 <= k^(1-1/q) ||a||_q
            PotentialKind::PolytopeQNorm { q, vertices } => {
                let k = vertices.len() as f64;
                0.5 / k.powf(2.0 * (1.0 - 1.0 / q))
            }
            PotentialKind::GroupedL1 { exponent, .. } => {
                let r = match self.domain.kind() {
                    BodyKind::GroupedL1Ball { radius, .. } => *radius,
                    _ => 1.0,
                };
                if r > 1.0 {
                    r.powf(exponent - 2.0)
                } else {
                    1.0
                }
            }
        }
    }

    pub fn reference_norm(&self) -> ReferenceNorm {
        match &self.kind {
            PotentialKind::SquaredL2 { .. } => ReferenceNorm::L2,
            PotentialKind::NegativeEntropy => ReferenceNorm::L1,
            PotentialKind::PolytopeQNorm { .. } => ReferenceNorm::CoefficientL1,
            PotentialKind::GroupedL1 { .. } => ReferenceNorm::GroupedL1,
        }
    }

    /// The reference norm of a state-space vector.
    pub fn norm_of(&self, v: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::SquaredL2 { .. } => norm2(v),
            PotentialKind::NegativeEntropy | PotentialKind::PolytopeQNorm { .. } => norm1(v),
            PotentialKind::GroupedL1 { group, .. } => crate::geometry::grouped_norm(v, *group),
        }
    }

    /// Upper bound on the potential over its domain. The entropy is reported
    /// with its `+ln p` shift, which makes it nonnegative on the simplex.
    pub fn max_over_domain(&self) -> Result<f64> {
        Ok(match &self.kind {
            PotentialKind::SquaredL2 { .. } => {
                let d = self.domain.l2_diameter();
                0.5 * d * d
            }
            PotentialKind::NegativeEntropy => (self.domain.dim() as f64).ln(),
            // ||alpha||_q <= ||alpha||_1 = 1 on the simplex; attained at vertices
            PotentialKind::PolytopeQNorm { q, .. } => 1.0 / (4.0 * (q - 1.0)),
            PotentialKind::GroupedL1 { exponent, xi, .. } => {
                let r = match self.domain.kind() {
                    BodyKind::GroupedL1Ball { radius, .. } => *radius,
                    _ => unreachable!("checked at construction"),
                };
                r.powf(*exponent) / (exponent * xi)
            }
        })
    }

    /// The potential evaluated at a point `theta` of the body. For the
    /// polytope potential this is `||theta||_{C,q}^2 / (4 (q - 1))`, where
    /// `||theta||_{C,q}` is the smallest q-norm of a nonnegative representation
    /// of `theta` over the symmetrized vertex set.
    pub fn point_value(&self, theta: &[f64]) -> Result<f64> {
        match &self.kind {
            PotentialKind::PolytopeQNorm { q, vertices } => {
                check_dim(self.domain.dim(), theta.len())?;
                check_finite(theta, "potential argument")?;
                let n = representation_q_norm(vertices, theta, *q)?;
                Ok(n * n / (4.0 * (q - 1.0)))
            }
            _ => self.value(theta),
        }
    }

    /// `argmin_{s in domain} <eta g, s> + B(s, s_t)`, with `g` already in state
    /// coordinates (see [`Potential::pull_back`]).
    pub fn mirror_step(&self, s_t: &[f64], g: &[f64], eta: f64) -> Result<Vec<f64>> {
        self.check_state(s_t)?;
        check_dim(self.state_dim(), g.len())?;
        check_finite(g, "mirror-step gradient")?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {eta}")));
        }
        match &self.kind {
            PotentialKind::SquaredL2 { .. } => {
                let x: Vec<f64> = s_t.iter().zip(g).map(|(a, b)| a - eta * b).collect();
                self.domain.euclidean_project(&x)
            }
            PotentialKind::NegativeEntropy => Ok(entropic_step(s_t, g, eta)),
            PotentialKind::PolytopeQNorm { q, .. } => {
                let gs = self.grad_unchecked(s_t);
                let c: Vec<f64> = g.iter().zip(&gs).map(|(gi, si)| eta * gi - si).collect();
                Ok(qnorm_simplex_prox(&c, *q))
            }
            PotentialKind::GroupedL1 { .. } => self.projected_prox(s_t, g, eta),
        }
    }

    /// Largest violation of the mirror-step optimality condition
    /// `<eta g + grad Psi(s) - grad Psi(s_t), u - s> >= 0` over the probes `u`.
    pub fn variational_violation(
        &self,
        s_t: &[f64],
        g: &[f64],
        eta: f64,
        s: &[f64],
        probes: &[Vec<f64>],
    ) -> f64 {
        let gs = self.grad_unchecked(s);
        let gt = self.grad_unchecked(s_t);
        let field: Vec<f64> = (0..s.len()).map(|i| eta * g[i] + gs[i] - gt[i]).collect();
        probes
            .iter()
            .map(|u| -dot(&field, &sub(u, s)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Projected gradient with backtracking on the prox objective, for
    /// potentials without a closed-form step.
    fn projected_prox(&self, s_t: &[f64], g: &[f64], eta: f64) -> Result<Vec<f64>> {
        let gt = self.grad_unchecked(s_t);
        let c: Vec<f64> = g.iter().zip(&gt).map(|(gi, ti)| eta * gi - ti).collect();
        let objective = |s: &[f64]| dot(&c, s) + self.value_unchecked(s);
        let mut s = s_t.to_vec();
        let mut f = objective(&s);
        let mut step = 1.0;
        for _ in 0..PROX_MAX_ITER {
            let grad: Vec<f64> = c
                .iter()
                .zip(self.grad_unchecked(&s))
                .map(|(a, b)| a + b)
                .collect();
            loop {
                let trial: Vec<f64> = s.iter().zip(&grad).map(|(x, d)| x - step * d).collect();
                let next = self.domain.euclidean_project(&trial)?;
                let diff = sub(&next, &s);
                let f_next = objective(&next);
                let model = f + dot(&grad, &diff) + dot(&diff, &diff) / (2.0 * step);
                if f_next <= model + 1e-15 * f.abs().max(1.0) || step < 1e-16 {
                    let residual = norm2(&diff) / step;
                    s = next;
                    f = f_next;
                    if residual <= PROX_TOL {
                        return Ok(s);
                    }
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
        }
        Err(Error::NotConverged {
            what: "mirror-step inner solve",
            iterations: PROX_MAX_ITER,
            residual: f64::NAN,
        })
    }
}

/// Exponent `M` and scale `xi` of the grouped-l1 potential for a given
/// number of blocks.
fn grouped_parameters(blocks: usize) -> (f64, f64) {
    match blocks {
        1 => (2.0, 1.0),
        2 => (2.0, 0.5),
        b => {
            let l = (b as f64).ln();
            (1.0 + 1.0 / l, 1.0 / (std::f64::consts::E * l))
        }
    }
}

/// Multiplicative-weights update, computed in log space.
fn entropic_step(s_t: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    let logits: Vec<f64> = s_t
        .iter()
        .zip(g)
        .map(|(a, gi)| a.max(ENTROPY_FLOOR).ln() - eta * gi)
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    let floored: Vec<f64> = w.iter().map(|x| (x / z).max(ENTROPY_FLOOR)).collect();
    let z: f64 = floored.iter().sum();
    floored.iter().map(|x| x / z).collect()
}

/// `argmin_{alpha in simplex} <c, alpha> + ||alpha||_q^2 / (4 (q - 1))`.
///
/// With `r = ||alpha||_q` fixed, the KKT conditions give
/// `alpha_i = ((nu - c_i)_+ / A(r))^(1/(q-1))` with `A(r) = r^(2-q) / (2(q-1))`
/// and `nu` fixed by `sum alpha = 1`. The q-norm `h(r)` of that solution is
/// nonincreasing in `r`, so the self-consistent `r` is found by bisection.
fn qnorm_simplex_prox(c: &[f64], q: f64) -> Vec<f64> {
    let k = c.len();
    let power = 1.0 / (q - 1.0);
    let c_min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let solve_for = |a_scale: f64| -> Vec<f64> {
        let weights = |nu: f64| -> Vec<f64> {
            c.iter()
                .map(|ci| ((nu - ci).max(0.0) / a_scale).powf(power))
                .collect()
        };
        let (mut lo, mut hi) = (c_min, c_min + a_scale);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if weights(mid).iter().sum::<f64>() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = weights(hi);
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    };
    let a_of = |r: f64| r.powf(2.0 - q) / (2.0 * (q - 1.0));
    if (q - 2.0).abs() < 1e-15 {
        return solve_for(a_of(1.0));
    }
    let (mut lo, mut hi) = ((k as f64).powf(1.0 / q - 1.0), 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let h = norm_q(&solve_for(a_of(mid)), q);
        if h > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve_for(a_of(0.5 * (lo + hi)))
}

/// `min ||alpha||_q` over `alpha >= 0` with `W alpha = theta`, where `W` is the
/// deduplicated set `V u -V`. Solved through the smooth concave dual
/// `max_lambda <lambda, theta> - 1/2 ||(W^T lambda)_+||_{q*}^2` by accelerated
/// gradient ascent with backtracking; the primal weights are the dual gradient
/// map `alpha = grad h(W^T lambda)`.
fn representation_q_norm(vertices: &[Vec<f64>], theta: &[f64], q: f64) -> Result<f64> {
    let mut w: Vec<Vec<f64>> = Vec::with_capacity(2 * vertices.len());
    for v in vertices {
        for cand in [v.clone(), v.iter().map(|x| -x).collect::<Vec<f64>>()] {
            if !w.iter().any(|u| u == &cand) {
                w.push(cand);
            }
        }
    }
    if theta.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let qs = q / (q - 1.0);
    let p = theta.len();
    let primal = |lambda: &[f64]| -> Vec<f64> {
        let u: Vec<f64> = w.iter().map(|col| dot(col, lambda).max(0.0)).collect();
        let n = norm_q(&u, qs);
        if n == 0.0 {
            return vec![0.0; u.len()];
        }
        let f = n.powf(2.0 - qs);
        u.iter().map(|x| f * x.powf(qs - 1.0)).collect()
    };
    let dual = |lambda: &[f64]| -> f64 {
        let u: Vec<f64> = w.iter().map(|col| dot(col, lambda).max(0.0)).collect();
        let n = norm_q(&u, qs);
        dot(lambda, theta) - 0.5 * n * n
    };
    let residual = |alpha: &[f64]| -> Vec<f64> {
        let mut r = theta.to_vec();
        for (a, col) in alpha.iter().zip(&w) {
            crate::linalg::axpy(-a, col, &mut r);
        }
        r
    };
    let scale = norm2(theta);
    let mut lambda = vec![0.0; p];
    let mut y = lambda.clone();
    let mut t = 1.0f64;
    let mut step = 1.0;
    for _ in 0..200_000 {
        let alpha = primal(&y);
        let grad = residual(&alpha);
        let fy = dual(&y);
        let next = loop {
            let cand: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            let fc = dual(&cand);
            if fc >= fy + 0.5 * step * dot(&grad, &grad) - 1e-15 * fy.abs().max(1.0)
                || step < 1e-14
            {
                break cand;
            }
            step *= 0.5;
        };
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let restart = dual(&next) < dual(&lambda);
        y = if restart {
            t = 1.0;
            next.clone()
        } else {
            t = t_next;
            next.iter()
                .zip(&lambda)
                .map(|(a, b)| a + momentum * (a - b))
                .collect()
        };
        lambda = next;
        step *= 1.2;
        let alpha = primal(&lambda);
        let r = norm2(&residual(&alpha));
        if r <= 1e-11 * scale.max(1.0) {
            return Ok(norm_q(&alpha, q));
        }
        if norm2(&lambda) > 1e12 * (1.0 + scale) {
            return Err(Error::OutsideDomain(
                "point has no representation over the vertex set".into(),
            ));
        }
    }
    Err(Error::NotConverged {
        what: "q-norm representation",
        iterations: 200_000,
        residual: norm2(&residual(&primal(&lambda))),
    })
}

/// Projects a state onto the potential's domain. Used by tests and by the
/// coefficient-space solvers.
pub fn project_state(pot: &Potential, s: &[f64]) -> Result<Vec<f64>> {
    match pot.kind() {
        PotentialKind::PolytopeQNorm { .. } => Ok(project_simplex(s, 1.0)),
        _ => pot.domain().euclidean_project(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cross2() -> ConvexBody {
        ConvexBody::polytope(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap()
    }

    #[test]
    fn value_and_grad_examples() {
        let ball = ConvexBody::l2_ball(2, 10.0).unwrap();
        let sq = Potential::new(&PotentialSpec::SquaredL2 { center: None }, &ball).unwrap();
        assert_eq!(sq.value(&[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(sq.grad(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let s2 = ConvexBody::simplex(2).unwrap();
        let ent = Potential::new(&PotentialSpec::NegativeEntropy, &s2).unwrap();
        assert!((ent.value(&[0.5, 0.5]).unwrap() - (-std::f64::consts::LN_2)).abs() < 1e-12);

        let qn = Potential::new(&PotentialSpec::PolytopeQNorm { q: Some(2.0) }, &cross2()).unwrap();
        assert!((qn.point_value(&[0.6, 0.0]).unwrap() - 0.09).abs() < 1e-9);
    }

    #[test]
    fn representation_norm_matches_lp_for_q_one_limit() {
        // for q close to 1 the representation norm approaches the l1 gauge
        let qn = Potential::new(&PotentialSpec::PolytopeQNorm { q: Some(1.05) }, &cross2()).unwrap();
        let v = qn.point_value(&[0.5, 0.5]).unwrap();
        // ||(0.5, 0.5)||_q with q = 1.05
        let n = (2.0 * 0.5f64.powf(1.05)).powf(1.0 / 1.05);
        assert!((v - n * n / (4.0 * 0.05)).abs() < 1e-6 * v);
    }

    #[test]
    fn domain_checks() {
        let ball = ConvexBody::l2_ball(2, 1.0).unwrap();
        assert!(Potential::new(&PotentialSpec::NegativeEntropy, &ball).is_err());
        assert!(Potential::new(&PotentialSpec::GroupedL1, &ball).is_err());
        assert!(Potential::new(&PotentialSpec::PolytopeQNorm { q: None }, &ball).is_err());
        assert!(
            Potential::new(&PotentialSpec::PolytopeQNorm { q: Some(2.5) }, &cross2()).is_err()
        );
        let sq = Potential::new(&PotentialSpec::SquaredL2 { center: None }, &ball).unwrap();
        assert!(matches!(sq.value(&[2.0, 0.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn bregman_examples() {
        let ball = ConvexBody::l2_ball(2, 1.0).unwrap();
        let sq = Potential::new(&PotentialSpec::SquaredL2 { center: None }, &ball).unwrap();
        assert!((sq.bregman(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sq.bregman(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);

        let s2 = ConvexBody::simplex(2).unwrap();
        let ent = Potential::new(&PotentialSpec::NegativeEntropy, &s2).unwrap();
        let kl = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((kl - 0.510826).abs() < 1e-6);
        assert!((ent.bregman(&[0.5, 0.5], &[0.9, 0.1]).unwrap() - kl).abs() < 1e-12);
    }

    #[test]
    fn entropic_step_example() {
        let s2 = ConvexBody::simplex(2).unwrap();
        let ent = Potential::new(&PotentialSpec::NegativeEntropy, &s2).unwrap();
        let out = ent
            .mirror_step(&[0.5, 0.5], &[std::f64::consts::LN_2, 0.0], 1.0)
            .unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-12 && (out[1] - 2.0 / 3.0).abs() < 1e-12);
        let probes: Vec<Vec<f64>> = (0..=10).map(|i| vec![i as f64 / 10.0, 1.0 - i as f64 / 10.0]).collect();
        let viol = ent.variational_violation(&[0.5, 0.5], &[std::f64::consts::LN_2, 0.0], 1.0, &out, &probes);
        assert!(viol <= 1e-12);
    }

    #[test]
    fn zero_gradient_keeps_state() {
        let pots = all_potentials();
        for pot in &pots {
            let s = pot.initial_state();
            let out = pot.mirror_step(&s, &vec![0.0; s.len()], 0.7).unwrap();
            for (a, b) in out.iter().zip(&s) {
                assert!((a - b).abs() < 1e-7, "{:?}", pot.kind());
            }
        }
    }

    #[test]
    fn squared_l2_step_is_projected_gradient() {
        let ball = ConvexBody::l2_ball(3, 1.0).unwrap();
        let sq = Potential::new(&PotentialSpec::SquaredL2 { center: None }, &ball).unwrap();
        let out = sq.mirror_step(&[0.1, 0.2, 0.3], &[5.0, -1.0, 0.0], 0.5).unwrap();
        let expected = ball.euclidean_project(&[0.1 - 2.5, 0.2 + 0.5, 0.3]).unwrap();
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn bad_step_size() {
        let ball = ConvexBody::l2_ball(1, 1.0).unwrap();
        let sq = Potential::new(&PotentialSpec::SquaredL2 { center: None }, &ball).unwrap();
        assert!(sq.mirror_step(&[0.0], &[1.0], 0.0).is_err());
        assert!(sq.mirror_step(&[0.0], &[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn max_over_domain_examples() {
        let ball = ConvexBody::l2_ball(3, 1.0).unwrap();
        let sq = Potential::new(&PotentialSpec::SquaredL2 { center: None }, &ball).unwrap();
        assert!(sq.max_over_domain().unwrap() <= 2.0);

        let s4 = ConvexBody::simplex(4).unwrap();
        let ent = Potential::new(&PotentialSpec::NegativeEntropy, &s4).unwrap();
        assert!((ent.max_over_domain().unwrap() - 4f64.ln()).abs() < 1e-15);

        // 16 vertices, default q = ln 16 / (ln 16 - 1): 1/(4(q-1)) = (ln 16 - 1)/4
        let l1 = ConvexBody::l1_ball(8, 1.0).unwrap();
        let qn = Potential::new(&PotentialSpec::PolytopeQNorm { q: None }, &l1).unwrap();
        let m = qn.max_over_domain().unwrap();
        assert!((m - (16f64.ln() - 1.0) / 4.0).abs() < 1e-12);
        assert!(m <= 16f64.ln() / 4.0);
    }

    #[test]
    fn default_q_schedule() {
        assert_eq!(default_polytope_q(4), 2.0);
        assert_eq!(default_polytope_q(7), 2.0);
        let q = default_polytope_q(16);
        assert!((q - 16f64.ln() / (16f64.ln() - 1.0)).abs() < 1e-15);
        // k^(1 - 1/q) = e at the default exponent
        assert!((16f64.powf(1.0 - 1.0 / q) - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn polytope_max_is_attained_on_random_hulls() {
        let mut rng = crate::rng::stream_rng(11, 0);
        for _ in 0..20 {
            let k = rng.random_range(8..20);
            let vertices = (0..k)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let body = ConvexBody::polytope(vertices).unwrap();
            let pot = Potential::new(&PotentialSpec::PolytopeQNorm { q: None }, &body).unwrap();
            let bound = pot.max_over_domain().unwrap();
            for _ in 0..50 {
                let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                let z: f64 = raw.iter().sum();
                let alpha: Vec<f64> = raw.iter().map(|x| x / z).collect();
                assert!(pot.value(&alpha).unwrap() <= bound + 1e-12);
            }
            let mut vertex = vec![0.0; k];
            vertex[0] = 1.0;
            assert!((pot.value(&vertex).unwrap() - bound).abs() < 1e-12);
        }
    }

    pub(crate) fn all_potentials() -> Vec<Potential> {
        let l2 = ConvexBody::l2_ball(4, 1.0).unwrap();
        let simplex = ConvexBody::simplex(5).unwrap();
        let l1 = ConvexBody::l1_ball(6, 1.0).unwrap();
        let grouped1 = ConvexBody::grouped_l1_ball(6, 1.0, 2).unwrap();
        let grouped2 = ConvexBody::grouped_l1_ball(4, 1.0, 2).unwrap();
        let grouped3 = ConvexBody::grouped_l1_ball(3, 2.0, 3).unwrap();
        let tri = ConvexBody::polytope(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        vec![
            Potential::new(&PotentialSpec::SquaredL2 { center: None }, &l2).unwrap(),
            Potential::new(&PotentialSpec::SquaredL2 { center: None }, &simplex).unwrap(),
            Potential::new(&PotentialSpec::NegativeEntropy, &simplex).unwrap(),
            Potential::new(&PotentialSpec::PolytopeQNorm { q: None }, &l1).unwrap(),
            Potential::new(&PotentialSpec::PolytopeQNorm { q: None }, &tri).unwrap(),
            Potential::new(&PotentialSpec::GroupedL1, &grouped1).unwrap(),
            Potential::new(&PotentialSpec::GroupedL1, &grouped2).unwrap(),
            Potential::new(&PotentialSpec::GroupedL1, &grouped3).unwrap(),
        ]
    }

    fn random_state(pot: &Potential, rng: &mut crate::rng::StreamRng) -> Vec<f64> {
        let raw: Vec<f64> = (0..pot.state_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut s = project_state(pot, &raw).unwrap();
        if matches!(pot.kind(), PotentialKind::NegativeEntropy | PotentialKind::PolytopeQNorm { .. }) {
            // keep away from the boundary where the potential is not smooth
            let k = s.len() as f64;
            s.iter_mut().for_each(|x| *x = 0.9 * *x + 0.1 / k);
        }
        s
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(3, 0);
        for pot in all_potentials() {
            for _ in 0..20 {
                let s = random_state(&pot, &mut rng);
                let t = random_state(&pot, &mut rng);
                let d = sub(&t, &s);
                let h = 1e-6;
                let fwd: Vec<f64> = s.iter().zip(&d).map(|(a, b)| a + h * b).collect();
                let bwd: Vec<f64> = s.iter().zip(&d).map(|(a, b)| a - h * b).collect();
                let fd = (pot.value_unchecked(&fwd) - pot.value_unchecked(&bwd)) / (2.0 * h);
                let an = dot(&pot.grad(&s).unwrap(), &d);
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "{:?}: {fd} vs {an}", pot.kind());
            }
        }
    }

    #[test]
    fn bregman_dominates_modulus() {
        let mut rng = crate::rng::stream_rng(5, 0);
        for pot in all_potentials() {
            let m = pot.strong_convexity_modulus();
            for _ in 0..200 {
                let a = random_state(&pot, &mut rng);
                let b = random_state(&pot, &mut rng);
                let n = pot.norm_of(&sub(&a, &b));
                let d = pot.bregman(&a, &b).unwrap();
                assert!(d >= 0.5 * m * n * n - 1e-10, "{:?}: {d} < {}", pot.kind(), 0.5 * m * n * n);
            }
        }
    }

    #[test]
    fn mirror_step_satisfies_optimality() {
        let mut rng = crate::rng::stream_rng(9, 0);
        for pot in all_potentials() {
            for _ in 0..10 {
                let s_t = random_state(&pot, &mut rng);
                let g: Vec<f64> = (0..pot.state_dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let eta = rng.random_range(0.05..2.0);
                let out = pot.mirror_step(&s_t, &g, eta).unwrap();
                assert!(pot.check_state(&out).is_ok(), "{:?}", pot.kind());
                let probes: Vec<Vec<f64>> = (0..40).map(|_| random_state(&pot, &mut rng)).collect();
                let viol = pot.variational_violation(&s_t, &g, eta, &out, &probes);
                assert!(viol <= 1e-6, "{:?}: violation {viol}", pot.kind());
                // the step never does worse than staying put
                let obj = |s: &[f64]| eta * dot(&g, s) + pot.bregman_unchecked(s, &s_t);
                assert!(obj(&out) <= obj(&s_t) + 1e-9);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn entropy_step_stays_on_simplex(
            g in proptest::collection::vec(-50.0f64..50.0, 4),
            eta in 0.01f64..10.0,
        ) {
            let s4 = ConvexBody::simplex(4).unwrap();
            let ent = Potential::new(&PotentialSpec::NegativeEntropy, &s4).unwrap();
            let out = ent.mirror_step(&[0.25; 4], &g, eta).unwrap();
            proptest::prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(out.iter().all(|x| *x > 0.0));
        }
    }
}
