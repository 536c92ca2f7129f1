//! Non-private reference optima and the excess empirical risk
//! `R(theta; D) = L(theta; D) - min_{theta in C} L(theta; D)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BodyKind, ConvexBody};
use crate::linalg::{dot, norm1};
use crate::losses::{Dataset, Loss, LossKind, LossSpec, Objective};
use crate::optim::minimize;
use crate::solvers::SolverReport;

pub const ORACLE_MAX_ITER: usize = 10_000_000;
const CD_MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub theta_star: Vec<f64>,
    pub optimum_value: f64,
    /// Frank-Wolfe duality gap at `theta_star`; bounds its suboptimality.
    pub gap_certificate: f64,
    pub method: String,
    /// Optimum found by coordinate descent, for squared loss on an l1 ball.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<f64>,
}

/// `1e-9 (1 + |L(center)|)`; the starting value stands in for the optimum,
/// which it bounds from above.
pub fn default_tolerance(loss: &Loss, data: &Dataset, body: &ConvexBody) -> f64 {
    let start = Objective::new(loss, data).value(&body.center());
    1e-9 * (1.0 + start.abs())
}

/// Minimizes the empirical loss over `body` to duality gap `tol`.
pub fn solve_exact(body: &ConvexBody, loss: &Loss, data: &Dataset, tol: f64) -> Result<OracleSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("oracle tolerance must be positive, got {tol}")));
    }
    crate::error::check_dim(body.dim(), data.dim())?;
    let objective = Objective::new(loss, data);
    let m = minimize(body, &objective, &body.center(), tol, ORACLE_MAX_ITER)?;
    if !m.converged {
        return Err(Error::NotConverged {
            what: "oracle",
            iterations: m.iterations,
            residual: m.gap,
        });
    }
    let mut sol = OracleSolution {
        theta_star: m.theta,
        optimum_value: m.value,
        gap_certificate: m.gap,
        method: m.method.to_string(),
        cross_check: None,
    };
    if let (LossKind::SquaredError, BodyKind::L1Ball { radius }) = (&loss.spec().kind, body.kind()) {
        let (theta, value) = lasso_coordinate_descent(data, loss.ridge(), *radius, tol)?;
        sol.cross_check = Some(value);
        // the lower bound value - gap still certifies the better point
        if value < sol.optimum_value {
            sol.theta_star = theta;
            sol.optimum_value = value;
            sol.method.push_str(" (improved by coordinate descent)");
        }
    }
    Ok(sol)
}

type CacheKey = (u64, String, String, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<OracleSolution>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<OracleSolution>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// [`solve_exact`] at the default tolerance, memoized per dataset, body and
/// loss. Concurrent callers may solve the same key twice; both results agree.
pub fn solve_cached(body: &ConvexBody, spec: &LossSpec, data: &Dataset) -> Result<Arc<OracleSolution>> {
    let loss = Loss::new(spec.clone())?;
    let tol = default_tolerance(&loss, data, body);
    let key = (
        data.fingerprint(),
        body.to_json()?,
        serde_json::to_string(spec)?,
        tol.to_bits(),
    );
    if let Some(hit) = cache().lock().expect("oracle cache").get(&key) {
        return Ok(hit.clone());
    }
    let sol = Arc::new(solve_exact(body, &loss, data, tol)?);
    cache().lock().expect("oracle cache").insert(key, sol.clone());
    Ok(sol)
}

/// `L(theta) - L(theta*)`. Values below `-gap_certificate` are impossible up
/// to rounding and are clamped there with a warning.
pub fn excess_risk(
    theta: &[f64],
    oracle: &OracleSolution,
    loss: &Loss,
    data: &Dataset,
    body: &ConvexBody,
) -> Result<f64> {
    if !body.contains(theta)? {
        return Err(Error::OutsideDomain("excess risk of an infeasible point".into()));
    }
    let r = Objective::new(loss, data).value(theta) - oracle.optimum_value;
    let floor = -oracle.gap_certificate;
    if r < floor {
        log::warn!("excess risk {r:.3e} below -gap {floor:.3e}; clamped");
        return Ok(floor);
    }
    Ok(r)
}

/// Fills `report.excess_risk` against `oracle`.
pub fn attach_excess_risk(
    report: &mut SolverReport,
    oracle: &OracleSolution,
    loss: &Loss,
    data: &Dataset,
    body: &ConvexBody,
) -> Result<f64> {
    let r = excess_risk(&report.theta_priv, oracle, loss, data, body)?;
    report.excess_risk = Some(r);
    Ok(r)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent on `1/2 theta^T H theta - c^T theta + lambda ||theta||_1`
/// from `theta`, with `H = X^T X / n + ridge I` and `c = X^T y / n`.
fn cd_penalized(h: &[f64], c: &[f64], lambda: f64, theta: &mut [f64], tol: f64) {
    let p = c.len();
    let mut ht: Vec<f64> = (0..p).map(|i| dot(&h[i * p..(i + 1) * p], theta)).collect();
    for _ in 0..CD_MAX_SWEEPS {
        let mut biggest = 0.0f64;
        for j in 0..p {
            let hjj = h[j * p + j];
            if hjj <= 0.0 {
                continue;
            }
            let old = theta[j];
            let z = c[j] - (ht[j] - hjj * old);
            let new = soft_threshold(z, lambda) / hjj;
            let d = new - old;
            if d != 0.0 {
                theta[j] = new;
                for i in 0..p {
                    ht[i] += h[i * p + j] * d;
                }
                biggest = biggest.max(d.abs() * hjj.sqrt());
            }
        }
        if biggest * biggest <= tol * 1e-3 {
            break;
        }
    }
}

/// Constrained LASSO over the l1 ball of radius `r` through the penalized
/// path: bisection on `lambda` until the penalized solution sits on the
/// sphere, then scaled into the ball.
pub fn lasso_coordinate_descent(data: &Dataset, ridge: f64, r: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    let p = data.dim();
    let g = data.gram();
    let mut h = g.xtx.clone();
    for i in 0..p {
        h[i * p + i] += ridge;
    }
    let c = &g.xty;
    let value = |t: &[f64]| {
        let ht: Vec<f64> = (0..p).map(|i| dot(&h[i * p..(i + 1) * p], t)).collect();
        0.5 * dot(t, &ht) - dot(c, t) + 0.5 * g.yty
    };
    let mut theta = vec![0.0; p];
    cd_penalized(&h, c, 0.0, &mut theta, tol);
    if norm1(&theta) <= r {
        let v = value(&theta);
        return Ok((theta, v));
    }
    // lambda_max: the smallest penalty with solution 0
    let (mut lo, mut hi) = (0.0, c.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let mut best = vec![0.0; p];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        cd_penalized(&h, c, mid, &mut theta, tol);
        let n1 = norm1(&theta);
        if n1 > r {
            lo = mid;
        } else {
            hi = mid;
            best.copy_from_slice(&theta);
        }
        if (n1 - r).abs() * (1.0 + mid) <= 0.1 * tol || hi - lo <= 1e-16 * hi.max(1e-300) {
            break;
        }
    }
    let n1 = norm1(&theta);
    let candidate = if n1 > r {
        theta.iter().map(|t| t * r / n1).collect::<Vec<_>>()
    } else {
        theta
    };
    let (vc, vb) = (value(&candidate), value(&best));
    Ok(if vc <= vb { (candidate, vc) } else { (best, vb) })
}
