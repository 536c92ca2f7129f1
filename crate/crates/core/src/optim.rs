//! Accurate smooth minimization over a convex body, certified by the
//! Frank-Wolfe duality gap `max_{s in C} <grad f(x), x - s>`, which bounds
//! `f(x) - min_C f` from above.
//!
//! Bodies with a Euclidean projection are handled by accelerated projected
//! gradient with backtracking and adaptive restart. Polytopes known only by
//! their vertices are solved in vertex-weight space over the simplex.

use crate::error::{Error, Result};
use crate::geometry::{project_simplex, ConvexBody};
use crate::linalg::{argmin, axpy, dot, mat_t_vec};

pub trait Smooth {
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

impl<F: Smooth + ?Sized> Smooth for &F {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (**self).grad(x)
    }
}

impl Smooth for crate::losses::Objective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        crate::losses::Objective::value(self, x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        crate::losses::Objective::grad(self, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Duality gap at `theta`; an upper bound on its suboptimality.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: &'static str,
}

/// Minimizes `f` over `body` until the duality gap is at most `tol`.
/// Returns the best certified iterate with `converged = false` if
/// `max_iter` runs out first.
pub fn minimize(
    body: &ConvexBody,
    f: &dyn Smooth,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Minimum> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if body.supports_projection() {
        let x0 = body.euclidean_project(start)?;
        let project = |x: &[f64]| body.euclidean_project(x).expect("projectable body");
        let gap = |x: &[f64], g: &[f64]| {
            let s = body.lmo(g).expect("finite gradient");
            dot(g, x) - dot(g, &s)
        };
        let (theta, value, gap, iterations, converged) =
            accelerated(f, x0, project, gap, tol, max_iter);
        Ok(Minimum {
            theta,
            value,
            gap,
            iterations,
            converged,
            method: "accelerated projected gradient",
        })
    } else {
        let vertices = body.vertices().ok_or_else(|| {
            Error::Unsupported("body has neither a projection nor a vertex list".into())
        })?;
        let (k, p) = (vertices.len(), body.dim());
        let flat: Vec<f64> = vertices.iter().flatten().copied().collect();
        let lift = |a: &[f64]| mat_t_vec(&flat, p, a);
        let lifted = Lifted { f, flat: &flat, p };
        let a0 = vec![1.0 / k as f64; k];
        let _ = start;
        let gap = |a: &[f64], g: &[f64]| dot(g, a) - g[argmin(g)];
        let (alpha, value, gap, iterations, converged) =
            accelerated(&lifted, a0, |a: &[f64]| project_simplex(a, 1.0), gap, tol, max_iter);
        Ok(Minimum {
            theta: lift(&alpha),
            value,
            gap,
            iterations,
            converged,
            method: "accelerated projected gradient on vertex weights",
        })
    }
}

/// `alpha -> f(V^T alpha)` for row-major vertices `V`.
struct Lifted<'a> {
    f: &'a dyn Smooth,
    flat: &'a [f64],
    p: usize,
}

impl Smooth for Lifted<'_> {
    fn value(&self, a: &[f64]) -> f64 {
        self.f.value(&mat_t_vec(self.flat, self.p, a))
    }
    fn grad(&self, a: &[f64]) -> Vec<f64> {
        let g = self.f.grad(&mat_t_vec(self.flat, self.p, a));
        crate::linalg::mat_vec(self.flat, self.p, &g)
    }
}

fn accelerated(
    f: &dyn Smooth,
    x0: Vec<f64>,
    project: impl Fn(&[f64]) -> Vec<f64>,
    gap_at: impl Fn(&[f64], &[f64]) -> f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, f64, usize, bool) {
    let mut x = x0;
    let mut fx = f.value(&x);
    let mut gx = f.grad(&x);
    let mut best = (x.clone(), fx, gap_at(&x, &gx).max(0.0));
    if best.2 <= tol {
        return (best.0, best.1, best.2, 0, true);
    }
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    for it in 1..=max_iter {
        let (fy, gy) = if it == 1 || y == x {
            (fx, gx.clone())
        } else {
            (f.value(&y), f.grad(&y))
        };
        let (z, fz) = loop {
            let trial: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let z = project(&trial);
            let fz = f.value(&z);
            let mut d = z.clone();
            axpy(-1.0, &y, &mut d);
            let model = fy + dot(&gy, &d) + 0.5 * lip * dot(&d, &d);
            if fz <= model + 1e-13 * fy.abs().max(1.0) || lip > 1e300 {
                break (z, fz);
            }
            lip *= 2.0;
        };
        if fz > fx && y != x {
            // momentum overshot: restart from the last accepted point
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = z.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = z;
        fx = fz;
        t = t_next;
        lip *= 0.9;
        gx = f.grad(&x);
        let gap = gap_at(&x, &gx).max(0.0);
        if gap < best.2 || (gap == best.2 && fx < best.1) {
            best = (x.clone(), fx, gap);
        }
        if gap <= tol {
            return (x, fx, gap, it, true);
        }
    }
    (best.0, best.1, best.2, max_iter, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        h: Vec<f64>,
        c: Vec<f64>,
    }

    impl Smooth for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            let p = self.c.len();
            0.5 * dot(x, &crate::linalg::mat_vec(&self.h, p, x)) - dot(&self.c, x)
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            let p = self.c.len();
            let mut g = crate::linalg::mat_vec(&self.h, p, x);
            axpy(-1.0, &self.c, &mut g);
            g
        }
    }

    #[test]
    fn interior_optimum_matches_closed_form() {
        // H = diag(2, 1), c = (0.2, -0.3): optimum (0.1, -0.3) inside the unit ball
        let q = Quadratic {
            h: vec![2.0, 0.0, 0.0, 1.0],
            c: vec![0.2, -0.3],
        };
        let ball = ConvexBody::l2_ball(2, 1.0).unwrap();
        let m = minimize(&ball, &q, &[0.0, 0.0], 1e-12, 10_000).unwrap();
        assert!(m.converged);
        assert!((m.theta[0] - 0.1).abs() < 1e-9 && (m.theta[1] + 0.3).abs() < 1e-9);
    }

    #[test]
    fn vertex_space_agrees_with_projection() {
        let q = Quadratic {
            h: vec![1.0, 0.3, 0.3, 0.5],
            c: vec![2.0, -1.0],
        };
        let l1 = ConvexBody::l1_ball(2, 1.0).unwrap();
        let poly = ConvexBody::polytope(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let a = minimize(&l1, &q, &[0.0, 0.0], 1e-11, 100_000).unwrap();
        let b = minimize(&poly, &q, &[0.0, 0.0], 1e-11, 100_000).unwrap();
        assert!(a.converged && b.converged, "{a:?} {b:?}");
        assert!((a.value - b.value).abs() < 1e-10);
        assert!(poly.contains(&b.theta).unwrap());
    }

    #[test]
    fn reports_non_convergence() {
        let q = Quadratic {
            h: vec![1.0, 0.0, 0.0, 1e-6],
            c: vec![5.0, 5.0],
        };
        let ball = ConvexBody::l2_ball(2, 1.0).unwrap();
        let m = minimize(&ball, &q, &[0.0, 0.0], 1e-15, 3).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
        assert!(minimize(&ball, &q, &[0.0, 0.0], 0.0, 3).is_err());
    }
}
