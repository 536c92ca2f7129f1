//! Convex constraint sets.
//!
//! A [`ConvexBody`] is a closed, bounded convex set in `R^p` given either in
//! closed form (balls, simplex, box) or as the convex hull of an explicit
//! vertex list. Every body exposes a linear minimization oracle, which is all
//! the Frank-Wolfe solvers need; bodies with cheap Euclidean projections also
//! expose [`ConvexBody::euclidean_project`].

use std::path::Path;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{dist2, dot, norm1, norm2, norm_inf};
use crate::rng::{stream_rng, streams};

/// Absolute tolerance on the defining inequalities of every body.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Explicit polytopes larger than this are rejected.
pub const MAX_POLYTOPE_VERTICES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodyKind {
    L2Ball { radius: f64 },
    L1Ball { radius: f64 },
    Simplex,
    /// Convex hull of the listed vertices (V-representation).
    Polytope { vertices: Vec<Vec<f64>> },
    /// Unit ball of the grouped l1 norm: the sum over consecutive blocks of
    /// `group` coordinates of the blocks' l2 norms, scaled by `radius`.
    GroupedL1Ball { radius: f64, group: usize },
    /// The cube `[lo, hi]^p`.
    Box { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BodyDocument {
    dimension: usize,
    #[serde(flatten)]
    kind: BodyKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BodyDocument", into = "BodyDocument")]
pub struct ConvexBody {
    kind: BodyKind,
    dim: usize,
    symmetric: bool,
}

impl TryFrom<BodyDocument> for ConvexBody {
    type Error = Error;

    fn try_from(doc: BodyDocument) -> Result<Self> {
        ConvexBody::new(doc.kind, doc.dimension)
    }
}

impl From<ConvexBody> for BodyDocument {
    fn from(body: ConvexBody) -> Self {
        BodyDocument {
            dimension: body.dim,
            kind: body.kind,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl ConvexBody {
    pub fn new(kind: BodyKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let symmetric = match &kind {
            BodyKind::L2Ball { radius } | BodyKind::L1Ball { radius } => {
                check_radius(*radius)?;
                true
            }
            BodyKind::GroupedL1Ball { radius, group } => {
                check_radius(*radius)?;
                if *group == 0 {
                    return Err(Error::InvalidParameter("group size must be positive".into()));
                }
                true
            }
            BodyKind::Simplex => false,
            BodyKind::Box { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidParameter(format!("bad box bounds [{lo}, {hi}]")));
                }
                *lo == -*hi
            }
            BodyKind::Polytope { vertices } => {
                if vertices.is_empty() {
                    return Err(Error::InvalidParameter("polytope needs at least one vertex".into()));
                }
                if vertices.len() > MAX_POLYTOPE_VERTICES {
                    return Err(Error::InvalidParameter(format!(
                        "polytope has {} vertices, limit is {MAX_POLYTOPE_VERTICES}",
                        vertices.len()
                    )));
                }
                for v in vertices {
                    check_dim(dim, v.len())?;
                    check_finite(v, "polytope vertex")?;
                }
                polytope_is_symmetric(vertices)?
            }
        };
        Ok(ConvexBody {
            kind,
            dim,
            symmetric,
        })
    }

    pub fn l2_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(BodyKind::L2Ball { radius }, dim)
    }

    pub fn l1_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(BodyKind::L1Ball { radius }, dim)
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        Self::new(BodyKind::Simplex, dim)
    }

    pub fn polytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vertices
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidParameter("polytope needs at least one vertex".into()))?;
        Self::new(BodyKind::Polytope { vertices }, dim)
    }

    pub fn grouped_l1_ball(dim: usize, radius: f64, group: usize) -> Result<Self> {
        Self::new(BodyKind::GroupedL1Ball { radius, group }, dim)
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(BodyKind::Box { lo, hi }, dim)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Polytope from a headerless CSV file, one vertex per row.
    pub fn polytope_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut vertices = Vec::new();
        for row in reader.records() {
            let row = row?;
            let v = row
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::InvalidParameter(format!("bad vertex entry {f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            vertices.push(v);
        }
        Self::polytope(vertices)
    }

    pub fn kind(&self) -> &BodyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Number of vertices when the body is the hull of a finite, enumerable
    /// vertex set.
    pub fn vertex_count(&self) -> Option<usize> {
        match &self.kind {
            BodyKind::L1Ball { .. } => Some(2 * self.dim),
            BodyKind::Simplex => Some(self.dim),
            BodyKind::Polytope { vertices } => Some(vertices.len()),
            _ => None,
        }
    }

    /// Vertex `i` in the canonical order: `+r e_1..+r e_p, -r e_1..-r e_p` for
    /// the l1 ball, `e_1..e_p` for the simplex, list order for polytopes.
    pub fn vertex(&self, i: usize) -> Option<Vec<f64>> {
        let p = self.dim;
        match &self.kind {
            BodyKind::L1Ball { radius } if i < 2 * p => {
                let mut v = vec![0.0; p];
                v[i % p] = if i < p { *radius } else { -*radius };
                Some(v)
            }
            BodyKind::Simplex if i < p => {
                let mut v = vec![0.0; p];
                v[i] = 1.0;
                Some(v)
            }
            BodyKind::Polytope { vertices } => vertices.get(i).cloned(),
            _ => None,
        }
    }

    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        let k = self.vertex_count()?;
        (0..k).map(|i| self.vertex(i)).collect()
    }

    /// `<s_i, d>` for every vertex `s_i`, in canonical vertex order.
    pub fn vertex_scores(&self, d: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            BodyKind::L1Ball { radius } => {
                let mut s: Vec<f64> = d.iter().map(|x| radius * x).collect();
                s.extend(d.iter().map(|x| -radius * x));
                Some(s)
            }
            BodyKind::Simplex => Some(d.to_vec()),
            BodyKind::Polytope { vertices } => Some(vertices.iter().map(|v| dot(v, d)).collect()),
            _ => None,
        }
    }

    /// Deterministic interior-ish reference point: the center of balls and
    /// boxes, the barycenter of simplices and polytopes.
    pub fn center(&self) -> Vec<f64> {
        let p = self.dim;
        match &self.kind {
            BodyKind::L2Ball { .. } | BodyKind::L1Ball { .. } | BodyKind::GroupedL1Ball { .. } => {
                vec![0.0; p]
            }
            BodyKind::Simplex => vec![1.0 / p as f64; p],
            BodyKind::Box { lo, hi } => vec![0.5 * (lo + hi); p],
            BodyKind::Polytope { vertices } => {
                let mut c = vec![0.0; p];
                for v in vertices {
                    crate::linalg::axpy(1.0 / vertices.len() as f64, v, &mut c);
                }
                c
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("point"));
        }
        let tol = MEMBERSHIP_TOL;
        Ok(match &self.kind {
            BodyKind::L2Ball { radius } => norm2(x) <= radius + tol,
            BodyKind::L1Ball { radius } => norm1(x) <= radius + tol,
            BodyKind::GroupedL1Ball { radius, group } => grouped_norm(x, *group) <= radius + tol,
            BodyKind::Simplex => {
                x.iter().all(|&v| v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            BodyKind::Box { lo, hi } => x.iter().all(|&v| v >= lo - tol && v <= hi + tol),
            BodyKind::Polytope { vertices } => hull_residual(vertices, x)? <= tol,
        })
    }

    /// A minimizer of `<direction, theta>` over the body. Vertex bodies return
    /// a vertex; ties go to the lowest vertex or coordinate index.
    pub fn lmo(&self, direction: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, direction.len())?;
        if direction.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("lmo direction"));
        }
        let p = self.dim;
        Ok(match &self.kind {
            BodyKind::L2Ball { radius } => {
                let n = norm2(direction);
                if n == 0.0 {
                    let mut v = vec![0.0; p];
                    v[0] = *radius;
                    v
                } else {
                    direction.iter().map(|d| -radius * d / n).collect()
                }
            }
            BodyKind::GroupedL1Ball { radius, group } => {
                let mut best = 0;
                let mut best_norm = -1.0;
                for (b, chunk) in direction.chunks(*group).enumerate() {
                    let n = norm2(chunk);
                    if n > best_norm {
                        best_norm = n;
                        best = b;
                    }
                }
                let mut v = vec![0.0; p];
                let start = best * group;
                if best_norm == 0.0 {
                    v[0] = *radius;
                } else {
                    for (i, d) in direction.iter().enumerate().skip(start).take(*group) {
                        v[i] = -radius * d / best_norm;
                    }
                }
                v
            }
            BodyKind::Box { lo, hi } => direction
                .iter()
                .map(|&d| if d < 0.0 { *hi } else { *lo })
                .collect(),
            BodyKind::L1Ball { .. } | BodyKind::Simplex | BodyKind::Polytope { .. } => {
                let i = self.lmo_index(direction)?;
                self.vertex(i).expect("index from lmo_index is valid")
            }
        })
    }

    /// Index of the LMO vertex for vertex-enumerable bodies.
    pub fn lmo_index(&self, direction: &[f64]) -> Result<usize> {
        check_dim(self.dim, direction.len())?;
        if direction.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("lmo direction"));
        }
        let scores = self
            .vertex_scores(direction)
            .ok_or_else(|| Error::Unsupported("body has no enumerable vertex list".into()))?;
        Ok(crate::linalg::argmin(&scores))
    }

    /// Gauge `min { r >= 0 : v in rC }` of a centrally symmetric body.
    pub fn minkowski_norm(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        check_finite(v, "minkowski_norm argument")?;
        if !self.symmetric {
            return Err(Error::Unsupported(
                "Minkowski norm needs a centrally symmetric body".into(),
            ));
        }
        match &self.kind {
            BodyKind::L2Ball { radius } => Ok(norm2(v) / radius),
            BodyKind::L1Ball { radius } => Ok(norm1(v) / radius),
            BodyKind::GroupedL1Ball { radius, group } => Ok(grouped_norm(v, *group) / radius),
            BodyKind::Box { hi, .. } => {
                if *hi == 0.0 {
                    if norm_inf(v) == 0.0 {
                        Ok(0.0)
                    } else {
                        Err(Error::OutsideDomain("vector outside the span of a degenerate box".into()))
                    }
                } else {
                    Ok(norm_inf(v) / hi)
                }
            }
            BodyKind::Polytope { vertices } => polytope_gauge(vertices, v),
            BodyKind::Simplex => unreachable!("simplex is never symmetric"),
        }
    }

    /// `max_{w in C} |<w, v>|`.
    pub fn dual_norm(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        if v.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite("dual_norm argument"));
        }
        Ok(self.dual_norm_unchecked(v))
    }

    fn dual_norm_unchecked(&self, v: &[f64]) -> f64 {
        match &self.kind {
            BodyKind::L2Ball { radius } => radius * norm2(v),
            BodyKind::L1Ball { radius } => radius * norm_inf(v),
            BodyKind::Simplex => norm_inf(v),
            BodyKind::GroupedL1Ball { radius, group } => {
                radius * v.chunks(*group).map(norm2).fold(0.0, f64::max)
            }
            BodyKind::Box { lo, hi } => {
                let (mut lo_side, mut hi_side) = (0.0, 0.0);
                for &x in v {
                    lo_side += (lo * x).min(hi * x);
                    hi_side += (lo * x).max(hi * x);
                }
                hi_side.max(-lo_side)
            }
            BodyKind::Polytope { vertices } => {
                vertices.iter().map(|w| dot(w, v).abs()).fold(0.0, f64::max)
            }
        }
    }

    /// `max_{a, b in C} ||a - b||_2`.
    pub fn l2_diameter(&self) -> f64 {
        let p = self.dim as f64;
        match &self.kind {
            BodyKind::L2Ball { radius }
            | BodyKind::L1Ball { radius }
            | BodyKind::GroupedL1Ball { radius, .. } => 2.0 * radius,
            BodyKind::Simplex => {
                if self.dim > 1 {
                    2f64.sqrt()
                } else {
                    0.0
                }
            }
            BodyKind::Box { lo, hi } => (hi - lo) * p.sqrt(),
            BodyKind::Polytope { vertices } => {
                let mut best = 0.0f64;
                for (i, a) in vertices.iter().enumerate() {
                    for b in &vertices[i + 1..] {
                        best = best.max(dist2(a, b));
                    }
                }
                best
            }
        }
    }

    /// `max_{theta in C} ||theta||_1`.
    pub fn l1_radius(&self) -> f64 {
        let p = self.dim as f64;
        match &self.kind {
            BodyKind::L2Ball { radius } => radius * p.sqrt(),
            BodyKind::L1Ball { radius } => *radius,
            BodyKind::GroupedL1Ball { radius, group } => radius * (self.dim.min(*group) as f64).sqrt(),
            BodyKind::Simplex => 1.0,
            BodyKind::Box { lo, hi } => p * lo.abs().max(hi.abs()),
            BodyKind::Polytope { vertices } => vertices.iter().map(|v| norm1(v)).fold(0.0, f64::max),
        }
    }

    /// `max_{theta in C} ||theta||_2`.
    pub fn l2_radius(&self) -> f64 {
        let p = self.dim as f64;
        match &self.kind {
            BodyKind::L2Ball { radius }
            | BodyKind::L1Ball { radius }
            | BodyKind::GroupedL1Ball { radius, .. } => *radius,
            BodyKind::Simplex => 1.0,
            BodyKind::Box { lo, hi } => p.sqrt() * lo.abs().max(hi.abs()),
            BodyKind::Polytope { vertices } => vertices.iter().map(|v| norm2(v)).fold(0.0, f64::max),
        }
    }

    /// `max_{theta in C} ||theta||_inf`.
    pub fn linf_radius(&self) -> f64 {
        match &self.kind {
            BodyKind::L2Ball { radius }
            | BodyKind::L1Ball { radius }
            | BodyKind::GroupedL1Ball { radius, .. } => *radius,
            BodyKind::Simplex => 1.0,
            BodyKind::Box { lo, hi } => lo.abs().max(hi.abs()),
            BodyKind::Polytope { vertices } => vertices.iter().map(|v| norm_inf(v)).fold(0.0, f64::max),
        }
    }

    /// The smallest symmetric body of a supported kind containing `C` and
    /// `-C`: the body itself when symmetric, the unit l1 ball for the simplex,
    /// `conv(V u -V)` for polytopes, and the symmetric cube for boxes.
    pub fn symmetric_hull(&self) -> Result<ConvexBody> {
        if self.symmetric {
            return Ok(self.clone());
        }
        match &self.kind {
            BodyKind::Simplex => ConvexBody::l1_ball(self.dim, 1.0),
            BodyKind::Box { lo, hi } => {
                let m = lo.abs().max(hi.abs());
                ConvexBody::cube(self.dim, -m, m)
            }
            BodyKind::Polytope { vertices } => {
                let mut all = vertices.clone();
                for v in vertices {
                    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
                    if !all.iter().any(|w| w == &neg) {
                        all.push(neg);
                    }
                }
                ConvexBody::polytope(all)
            }
            _ => unreachable!("balls are symmetric"),
        }
    }

    /// `r * C`.
    pub fn scaled(&self, r: f64) -> Result<ConvexBody> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {r}")));
        }
        let kind = match &self.kind {
            BodyKind::L2Ball { radius } => BodyKind::L2Ball { radius: radius * r },
            BodyKind::L1Ball { radius } => BodyKind::L1Ball { radius: radius * r },
            BodyKind::GroupedL1Ball { radius, group } => BodyKind::GroupedL1Ball {
                radius: radius * r,
                group: *group,
            },
            BodyKind::Box { lo, hi } => BodyKind::Box {
                lo: lo * r,
                hi: hi * r,
            },
            BodyKind::Simplex => BodyKind::Polytope {
                vertices: (0..self.dim)
                    .map(|i| {
                        let mut v = vec![0.0; self.dim];
                        v[i] = r;
                        v
                    })
                    .collect(),
            },
            BodyKind::Polytope { vertices } => BodyKind::Polytope {
                vertices: vertices
                    .iter()
                    .map(|v| v.iter().map(|x| x * r).collect())
                    .collect(),
            },
        };
        ConvexBody::new(kind, self.dim)
    }

    /// Monte-Carlo estimate of `E_g sup_{w in C} |<g, w>|` for standard
    /// Gaussian `g`. Samples are drawn in fixed chunks on independent streams
    /// so the estimate does not depend on the number of worker threads.
    pub fn gaussian_width_mc(&self, samples: usize, seed: u64) -> Result<WidthEstimate> {
        if samples == 0 {
            return Err(Error::InvalidParameter("samples must be at least 1".into()));
        }
        const CHUNK: usize = 1024;
        let chunks = samples.div_ceil(CHUNK);
        let partial: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream_rng(seed, (streams::WIDTH_ESTIMATE << 32) | c as u64);
                let count = CHUNK.min(samples - c * CHUNK);
                let mut g = vec![0.0; self.dim];
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..count {
                    for gi in g.iter_mut() {
                        *gi = StandardNormal.sample(&mut rng);
                    }
                    let v = self.dual_norm_unchecked(&g);
                    s += v;
                    s2 += v * v;
                }
                (s, s2)
            })
            .collect();
        let (sum, sum_sq) = partial
            .iter()
            .fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
        let m = samples as f64;
        let mean = sum / m;
        let var = if samples > 1 {
            ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(WidthEstimate {
            mean,
            std_error: (var / m).sqrt(),
            samples,
            seed,
        })
    }

    /// `argmin_{theta in C} ||theta - x||_2`.
    pub fn euclidean_project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_finite(x, "projection argument")?;
        match &self.kind {
            BodyKind::L2Ball { radius } => {
                let n = norm2(x);
                Ok(if n <= *radius {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * radius / n).collect()
                })
            }
            BodyKind::Simplex => Ok(project_simplex(x, 1.0)),
            BodyKind::L1Ball { radius } => Ok(project_l1_ball(x, *radius)),
            BodyKind::Box { lo, hi } => Ok(x.iter().map(|v| v.clamp(*lo, *hi)).collect()),
            BodyKind::GroupedL1Ball { radius, group } => {
                let norms: Vec<f64> = x.chunks(*group).map(norm2).collect();
                let shrunk = project_l1_ball(&norms, *radius);
                let mut out = x.to_vec();
                for ((chunk, n), s) in out.chunks_mut(*group).zip(&norms).zip(&shrunk) {
                    let f = if *n > 0.0 { s / n } else { 0.0 };
                    chunk.iter_mut().for_each(|v| *v *= f);
                }
                Ok(out)
            }
            BodyKind::Polytope { .. } => Err(Error::Unsupported(
                "Euclidean projection onto a general polytope".into(),
            )),
        }
    }

    pub fn supports_projection(&self) -> bool {
        !matches!(self.kind, BodyKind::Polytope { .. })
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("radius must be positive, got {r}")))
    }
}

pub fn grouped_norm(x: &[f64], group: usize) -> f64 {
    x.chunks(group).map(norm2).sum()
}

/// Projection onto `{theta >= 0, sum theta = z}` by the sort-and-threshold rule.
pub fn project_simplex(x: &[f64], z: f64) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - z) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    x.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Projection onto `{theta : ||theta||_1 <= r}`.
pub fn project_l1_ball(x: &[f64], r: f64) -> Vec<f64> {
    if norm1(x) <= r {
        return x.to_vec();
    }
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let w = project_simplex(&abs, r);
    x.iter()
        .zip(w)
        .map(|(v, wi)| if *v < 0.0 { -wi } else { wi })
        .collect()
}

fn lp_error(e: minilp::Error) -> Error {
    Error::LinearProgram(e.to_string())
}

/// `min ||V alpha - x||_1` over `alpha` in the probability simplex.
fn hull_residual(vertices: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    let p = x.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let alphas: Vec<_> = vertices
        .iter()
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let slack_pos: Vec<_> = (0..p).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let slack_neg: Vec<_> = (0..p).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for j in 0..p {
        let mut row: Vec<_> = vertices
            .iter()
            .zip(&alphas)
            .filter(|(v, _)| v[j] != 0.0)
            .map(|(v, a)| (*a, v[j]))
            .collect();
        row.push((slack_pos[j], 1.0));
        row.push((slack_neg[j], -1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, x[j]);
    }
    let ones: Vec<_> = alphas.iter().map(|a| (*a, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    let sol = lp.solve().map_err(lp_error)?;
    Ok(sol.objective().max(0.0))
}

/// `min sum |alpha_i|` subject to `V alpha = v`.
fn polytope_gauge(vertices: &[Vec<f64>], v: &[f64]) -> Result<f64> {
    let p = v.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let pos: Vec<_> = vertices
        .iter()
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    let neg: Vec<_> = vertices
        .iter()
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for j in 0..p {
        let mut row = Vec::new();
        for (i, vert) in vertices.iter().enumerate() {
            if vert[j] != 0.0 {
                row.push((pos[i], vert[j]));
                row.push((neg[i], -vert[j]));
            }
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, v[j]);
    }
    match lp.solve() {
        Ok(sol) => Ok(sol.objective().max(0.0)),
        Err(minilp::Error::Infeasible) => Err(Error::OutsideDomain(
            "vector is outside the span of the polytope's vertices".into(),
        )),
        Err(e) => Err(lp_error(e)),
    }
}

fn polytope_is_symmetric(vertices: &[Vec<f64>]) -> Result<bool> {
    for v in vertices {
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let exact = vertices
            .iter()
            .any(|w| w.iter().zip(&neg).all(|(a, b)| (a - b).abs() <= MEMBERSHIP_TOL));
        if !exact && hull_residual(vertices, &neg)? > MEMBERSHIP_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
