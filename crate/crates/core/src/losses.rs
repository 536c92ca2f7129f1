//! Datasets and the per-record convex losses the solvers minimize.
//!
//! Every loss is the 1/n-normalized average `L(theta; D) = (1/n) sum_i l(theta; d_i)`.
//! For the squared error `l = 1/2 (<x, theta> - y)^2`, so that
//! `L = 1/(2n) ||X theta - y||^2`.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{BodyKind, ConvexBody};
use crate::linalg::{axpy, dot, norm2, norm_inf, pairwise_sum, scale};
use crate::rng::StreamRng;

/// Rows per leaf of the gradient reduction tree.
const CHUNK: usize = 256;
const PARALLEL_MIN_ROWS: usize = 8192;
const BINARY_MAGIC: &[u8; 8] = b"DPERMBIN";
const BINARY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataProfile {
    #[default]
    Unrestricted,
    /// `||x||_inf <= 1` and `|y| <= 1` on every record.
    Lasso,
}

/// Sufficient statistics of the squared loss.
#[derive(Clone, Debug)]
pub struct Gram {
    /// `X^T X / n`, row-major `p x p`
    pub xtx: Vec<f64>,
    /// `X^T y / n`
    pub xty: Vec<f64>,
    /// `y^T y / n`
    pub yty: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    profile: DataProfile,
    gram: OnceLock<Gram>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.x == other.x && self.y == other.y && self.profile == other.profile
    }
}

impl Dataset {
    /// Builds a dataset from row-major features. Under the LASSO profile an
    /// out-of-range record is rejected, never clipped.
    pub fn new(p: usize, x: Vec<f64>, y: Vec<f64>, profile: DataProfile) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("feature dimension must be positive".into()));
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_dim(p * y.len(), x.len())?;
        check_finite(&x, "features")?;
        check_finite(&y, "labels")?;
        if profile == DataProfile::Lasso {
            for (i, (row, yi)) in x.chunks_exact(p).zip(&y).enumerate() {
                if norm_inf(row) > 1.0 {
                    return Err(Error::RecordRejected {
                        index: i,
                        reason: format!("||x||_inf = {} exceeds 1", norm_inf(row)),
                    });
                }
                if yi.abs() > 1.0 {
                    return Err(Error::RecordRejected {
                        index: i,
                        reason: format!("|y| = {} exceeds 1", yi.abs()),
                    });
                }
            }
        }
        Ok(Dataset {
            p,
            x,
            y,
            profile,
            gram: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, profile: DataProfile) -> Result<Self> {
        let p = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut x = Vec::with_capacity(p * rows.len());
        for r in rows {
            check_dim(p, r.len())?;
            x.extend_from_slice(r);
        }
        Dataset::new(p, x, y, profile)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn profile(&self) -> DataProfile {
        self.profile
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn records(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.p).zip(self.y.iter().copied())
    }

    /// The first `n` records.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return Err(Error::InvalidParameter(format!(
                "prefix length {n} outside 1..={}",
                self.n()
            )));
        }
        Dataset::new(self.p, self.x[..n * self.p].to_vec(), self.y[..n].to_vec(), self.profile)
    }

    /// Stable in-process fingerprint of the contents, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::hash::DefaultHasher::new();
        self.p.hash(&mut h);
        self.profile.hash(&mut h);
        for v in self.x.iter().chain(&self.y) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn gram(&self) -> &Gram {
        self.gram.get_or_init(|| {
            let (n, p) = (self.n() as f64, self.p);
            let mut xtx = vec![0.0; p * p];
            let mut xty = vec![0.0; p];
            for (row, yi) in self.records() {
                for (j, xj) in row.iter().enumerate() {
                    if *xj == 0.0 {
                        continue;
                    }
                    axpy(*xj, row, &mut xtx[j * p..(j + 1) * p]);
                    xty[j] += xj * yi;
                }
            }
            xtx.iter_mut().for_each(|v| *v /= n);
            xty.iter_mut().for_each(|v| *v /= n);
            let yty = pairwise_sum(&self.y.iter().map(|v| v * v).collect::<Vec<_>>()) / n;
            Gram { xtx, xty, yty }
        })
    }

    /// Reads `x_1, ..., x_p, y` rows. A header row is detected and skipped.
    pub fn from_csv(path: impl AsRef<Path>, profile: DataProfile) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut p = None;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::RecordRejected {
                        index: y.len(),
                        reason: e.to_string(),
                    })
                }
            };
            if values.len() < 2 {
                return Err(Error::RecordRejected {
                    index: y.len(),
                    reason: "need at least one feature and a label".into(),
                });
            }
            let width = *p.get_or_insert(values.len() - 1);
            check_dim(width + 1, values.len())?;
            x.extend_from_slice(&values[..width]);
            y.push(values[width]);
        }
        Dataset::new(p.ok_or(Error::EmptyDataset)?, x, y, profile)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, yi) in self.records() {
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            fields.push(yi.to_string());
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Compact little-endian row format: magic, version, n, p, profile byte,
    /// then `n` rows of `p + 1` doubles.
    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&(self.n() as u64).to_le_bytes())?;
        out.write_all(&(self.p as u64).to_le_bytes())?;
        out.write_all(&[matches!(self.profile, DataProfile::Lasso) as u8])?;
        for (row, yi) in self.records() {
            for v in row.iter().chain(std::iter::once(&yi)) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::InvalidParameter("not a dataset file".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != BINARY_VERSION {
            return Err(Error::Unsupported(format!("dataset format version {version}")));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let p = u64::from_le_bytes(b8) as usize;
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag)?;
        let profile = if flag[0] == 1 {
            DataProfile::Lasso
        } else {
            DataProfile::Unrestricted
        };
        let (mut x, mut y) = (Vec::with_capacity(n * p), Vec::with_capacity(n));
        for _ in 0..n {
            for j in 0..=p {
                input.read_exact(&mut b8)?;
                let v = f64::from_le_bytes(b8);
                if j < p {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        Dataset::new(p, x, y, profile)
    }
}

/// A black-box per-record loss. Custom losses must declare their constants.
pub trait RecordLoss: Send + Sync {
    fn value(&self, theta: &[f64], x: &[f64], y: f64) -> f64;
    /// Adds `scale * grad l(theta; (x, y))` into `out`.
    fn add_grad(&self, theta: &[f64], x: &[f64], y: f64, scale: f64, out: &mut [f64]);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    Huber { delta: f64 },
    Custom { name: String },
}

/// Constants supplied by the user. Any value given here overrides the
/// derived one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
    /// Strong convexity relative to the solver's potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_convexity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    #[serde(flatten)]
    pub kind: LossKind,
    /// Adds `ridge/2 ||theta||^2` to every record's loss.
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub constants: DeclaredConstants,
}

impl LossSpec {
    pub fn squared() -> Self {
        LossSpec {
            kind: LossKind::SquaredError,
            ridge: 0.0,
            constants: DeclaredConstants::default(),
        }
    }

    pub fn ridge(ridge: f64) -> Self {
        LossSpec {
            ridge,
            ..LossSpec::squared()
        }
    }

    pub fn huber(delta: f64) -> Self {
        LossSpec {
            kind: LossKind::Huber { delta },
            ..LossSpec::squared()
        }
    }
}

#[derive(Clone)]
pub struct Loss {
    spec: LossSpec,
    hook: Option<Arc<dyn RecordLoss>>,
}

impl fmt::Debug for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Loss")
            .field("spec", &self.spec)
            .field("hook", &self.hook.as_ref().map(|_| ".."))
            .finish()
    }
}

fn validate_constants(c: &DeclaredConstants) -> Result<()> {
    let all = [
        c.l1_lipschitz,
        c.l2_lipschitz,
        c.curvature,
        c.lambda_max,
        c.lambda_min,
        c.strong_convexity,
    ];
    if all.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("declared constants must be finite and nonnegative".into()));
    }
    if let (Some(lo), Some(hi)) = (c.lambda_min, c.lambda_max) {
        if lo > hi {
            return Err(Error::InvalidParameter("lambda_min exceeds lambda_max".into()));
        }
    }
    Ok(())
}

impl Loss {
    pub fn new(spec: LossSpec) -> Result<Self> {
        if !(spec.ridge.is_finite() && spec.ridge >= 0.0) {
            return Err(Error::InvalidParameter("ridge must be finite and nonnegative".into()));
        }
        validate_constants(&spec.constants)?;
        match &spec.kind {
            LossKind::Custom { name } => Err(Error::Unsupported(format!(
                "custom loss `{name}` needs a hook; use Loss::custom"
            ))),
            LossKind::Huber { delta } if !(*delta > 0.0 && delta.is_finite()) => Err(
                Error::InvalidParameter(format!("huber delta must be positive, got {delta}")),
            ),
            _ => Ok(Loss { spec, hook: None }),
        }
    }

    /// A user loss. Both Lipschitz constants are mandatory: the privacy
    /// calibration depends on them and they are never guessed.
    pub fn custom(
        name: impl Into<String>,
        hook: Arc<dyn RecordLoss>,
        constants: DeclaredConstants,
    ) -> Result<Self> {
        validate_constants(&constants)?;
        if constants.l1_lipschitz.is_none() || constants.l2_lipschitz.is_none() {
            return Err(Error::MissingConstant(
                "custom losses must declare l1_lipschitz and l2_lipschitz".into(),
            ));
        }
        Ok(Loss {
            spec: LossSpec {
                kind: LossKind::Custom { name: name.into() },
                ridge: 0.0,
                constants,
            },
            hook: Some(hook),
        })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn ridge(&self) -> f64 {
        self.spec.ridge
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.spec.kind, LossKind::SquaredError)
    }

    fn record_value(&self, theta: &[f64], x: &[f64], y: f64) -> f64 {
        let base = match &self.spec.kind {
            LossKind::SquaredError => {
                let r = dot(x, theta) - y;
                0.5 * r * r
            }
            LossKind::Huber { delta } => {
                let r = (dot(x, theta) - y).abs();
                if r <= *delta {
                    0.5 * r * r
                } else {
                    delta * (r - 0.5 * delta)
                }
            }
            LossKind::Custom { .. } => self.hook.as_ref().expect("custom hook").value(theta, x, y),
        };
        base + 0.5 * self.spec.ridge * dot(theta, theta)
    }

    fn add_record_grad(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) {
        match &self.spec.kind {
            LossKind::SquaredError => axpy(dot(x, theta) - y, x, out),
            LossKind::Huber { delta } => axpy((dot(x, theta) - y).clamp(-delta, *delta), x, out),
            LossKind::Custom { .. } => {
                self.hook.as_ref().expect("custom hook").add_grad(theta, x, y, 1.0, out)
            }
        }
        if self.spec.ridge > 0.0 {
            axpy(self.spec.ridge, theta, out);
        }
    }

    fn check_theta(&self, theta: &[f64], data: &Dataset) -> Result<()> {
        check_dim(data.dim(), theta.len())?;
        check_finite(theta, "theta")
    }

    /// `(1/n) sum_i l(theta; d_i)`, summed over a fixed pairwise tree.
    pub fn loss(&self, theta: &[f64], data: &Dataset) -> Result<f64> {
        self.check_theta(theta, data)?;
        let values: Vec<f64> = data
            .records()
            .map(|(x, y)| self.record_value(theta, x, y))
            .collect();
        Ok(pairwise_sum(&values) / data.n() as f64)
    }

    pub fn grad_single(&self, theta: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
        check_dim(theta.len(), x.len())?;
        check_finite(theta, "theta")?;
        let mut g = vec![0.0; theta.len()];
        self.add_record_grad(theta, x, y, &mut g);
        Ok(g)
    }

    /// `(1/n) sum_i grad l(theta; d_i)`. Rows are summed in fixed chunks and
    /// the chunk sums combined over a fixed tree, so the result does not
    /// depend on whether the chunks ran in parallel.
    pub fn grad(&self, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        self.check_theta(theta, data)?;
        let p = data.dim();
        let chunk_sum = |c: usize| {
            let mut acc = vec![0.0; p];
            let end = ((c + 1) * CHUNK).min(data.n());
            for i in c * CHUNK..end {
                self.add_record_grad(theta, data.row(i), data.label(i), &mut acc);
            }
            acc
        };
        let chunks = data.n().div_ceil(CHUNK);
        let partial: Vec<Vec<f64>> = if data.n() >= PARALLEL_MIN_ROWS {
            (0..chunks).into_par_iter().map(chunk_sum).collect()
        } else {
            (0..chunks).map(chunk_sum).collect()
        };
        let mut g = tree_sum(partial);
        let n = data.n() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Ok(g)
    }

    /// Upper bound on `|<x, theta> - y|`-driven gradient magnitudes, as the
    /// pair `(L1, L2)`: Lipschitz constants w.r.t. the l1 and l2 norms on
    /// `theta`, i.e. bounds on `||grad l||_inf` and `||grad l||_2`.
    ///
    /// Under the LASSO profile the bound covers the whole declared record
    /// domain; otherwise it is the worst case over the records present.
    pub fn lipschitz_constants(&self, body: &ConvexBody, data: &Dataset) -> Result<(f64, f64)> {
        check_dim(body.dim(), data.dim())?;
        let declared = (self.spec.constants.l1_lipschitz, self.spec.constants.l2_lipschitz);
        if let (Some(l1), Some(l2)) = declared {
            return Ok((l1, l2));
        }
        let cap = match &self.spec.kind {
            LossKind::SquaredError => f64::INFINITY,
            LossKind::Huber { delta } => *delta,
            LossKind::Custom { name } => {
                return Err(Error::MissingConstant(format!(
                    "Lipschitz constants for custom loss `{name}`"
                )))
            }
        };
        let (mut l1, mut l2) = match data.profile() {
            DataProfile::Lasso => {
                // ||x||_inf <= 1 gives |<x, theta>| <= ||theta||_1
                let residual = (body.l1_radius() + 1.0).min(cap);
                (residual, residual * (data.dim() as f64).sqrt())
            }
            DataProfile::Unrestricted => {
                let (mut a, mut b) = (0.0f64, 0.0f64);
                for (x, y) in data.records() {
                    // <x, theta> ranges over [lo, hi] on the body
                    let lo = dot(x, &body.lmo(x)?);
                    let hi = dot(x, &body.lmo(&scale(x, -1.0))?);
                    let residual = (hi - y).abs().max((lo - y).abs()).min(cap);
                    a = a.max(residual * norm_inf(x));
                    b = b.max(residual * norm2(x));
                }
                (a, b)
            }
        };
        l1 += self.spec.ridge * body.linf_radius();
        l2 += self.spec.ridge * body.l2_radius();
        Ok((declared.0.unwrap_or(l1), declared.1.unwrap_or(l2)))
    }

    /// Bounds on the eigenvalues of the per-record Hessians.
    pub fn hessian_eig_bounds(&self, data: &Dataset) -> Result<(f64, f64)> {
        let c = &self.spec.constants;
        if let (Some(lo), Some(hi)) = (c.lambda_min, c.lambda_max) {
            return Ok((lo, hi));
        }
        if let LossKind::Custom { name } = &self.spec.kind {
            return Err(Error::MissingConstant(format!("Hessian bounds for custom loss `{name}`")));
        }
        // x x^T has eigenvalues ||x||^2 and 0 (the latter only when p >= 2);
        // the Huber Hessian is either x x^T or 0
        let p = data.dim();
        let huber = matches!(self.spec.kind, LossKind::Huber { .. });
        let (lo, hi) = match data.profile() {
            DataProfile::Lasso => (0.0, p as f64),
            DataProfile::Unrestricted => {
                let sq: Vec<f64> = data.records().map(|(x, _)| dot(x, x)).collect();
                let hi = sq.iter().cloned().fold(0.0, f64::max);
                let lo = if p >= 2 || huber {
                    0.0
                } else {
                    sq.iter().cloned().fold(f64::INFINITY, f64::min)
                };
                (lo, hi)
            }
        };
        let r = self.spec.ridge;
        Ok((c.lambda_min.unwrap_or(lo + r), c.lambda_max.unwrap_or(hi + r)))
    }

    /// Strong convexity w.r.t. the squared-l2 potential, declared or implied
    /// by the ridge term.
    pub fn strong_convexity(&self) -> Option<f64> {
        self.spec
            .constants
            .strong_convexity
            .or((self.spec.ridge > 0.0).then_some(self.spec.ridge))
    }

    /// Upper bound on the curvature constant
    /// `sup (2/g^2) (L(a + g(b - a)) - L(a) - g <b - a, grad L(a)>)` over
    /// `a, b` in the body and `g` in (0, 1]. For a quadratic with Hessian `H`
    /// this is `max_{a,b} (a-b)^T H (a-b)`.
    pub fn curvature_bound(&self, body: &ConvexBody, data: &Dataset) -> Result<f64> {
        check_dim(body.dim(), data.dim())?;
        if let Some(c) = self.spec.constants.curvature {
            return Ok(c);
        }
        if let LossKind::Custom { name } = &self.spec.kind {
            return Err(Error::MissingConstant(format!("curvature for custom loss `{name}`")));
        }
        // the Huber second derivative is at most 1, so the squared bound holds
        let h = &data.gram().xtx;
        let d = body.l2_diameter();
        Ok(quadratic_curvature(body, h, data.dim())? + self.spec.ridge * d * d)
    }

    /// Largest curvature expression over sampled triples; a lower bound on
    /// the curvature constant.
    pub fn curvature_empirical(
        &self,
        body: &ConvexBody,
        data: &Dataset,
        trials: usize,
        rng: &mut StreamRng,
    ) -> Result<f64> {
        check_dim(body.dim(), data.dim())?;
        if trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        let mut best = 0.0f64;
        for _ in 0..trials {
            let a = sample_point(body, rng)?;
            let b = sample_point(body, rng)?;
            let gamma: f64 = 1.0 - rng.random::<f64>();
            let c: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + gamma * (v - u)).collect();
            let g = self.grad(&a, data)?;
            let step: Vec<f64> = c.iter().zip(&a).map(|(u, v)| u - v).collect();
            let rem = self.loss(&c, data)? - self.loss(&a, data)? - dot(&step, &g);
            best = best.max(2.0 * rem / (gamma * gamma));
        }
        Ok(best)
    }
}

/// `max_{a, b in C} (a - b)^T H (a - b)` or an upper bound on it, for a
/// PSD row-major `h`.
pub fn quadratic_curvature(body: &ConvexBody, h: &[f64], p: usize) -> Result<f64> {
    let form = |v: &[f64]| dot(v, &crate::linalg::mat_vec(h, p, v));
    let diag = |j: usize| h[j * p + j];
    Ok(match body.kind() {
        BodyKind::L2Ball { radius } => 4.0 * radius * radius * max_eigenvalue(h, p),
        BodyKind::L1Ball { radius } => 4.0 * radius * radius * (0..p).map(diag).fold(0.0, f64::max),
        BodyKind::Simplex => {
            let mut best = 0.0f64;
            for i in 0..p {
                for j in i + 1..p {
                    best = best.max(diag(i) + diag(j) - 2.0 * h[i * p + j]);
                }
            }
            best
        }
        BodyKind::GroupedL1Ball { radius, group } => {
            let mut best = 0.0f64;
            for start in (0..p).step_by(*group) {
                let end = (start + group).min(p);
                let m = end - start;
                let mut block = Vec::with_capacity(m * m);
                for i in start..end {
                    block.extend_from_slice(&h[i * p + start..i * p + end]);
                }
                best = best.max(max_eigenvalue(&block, m));
            }
            4.0 * radius * radius * best
        }
        BodyKind::Box { lo, hi } => {
            // a - b ranges over the cube [-w, w]^p
            let w = hi - lo;
            let abs_sum: f64 = h.iter().map(|v| v.abs()).sum();
            (w * w * abs_sum).min(w * w * p as f64 * max_eigenvalue(h, p))
        }
        BodyKind::Polytope { vertices } => {
            let values: Vec<f64> = vertices.iter().map(|v| form(v)).collect();
            let symmetric_bound = 4.0 * values.iter().cloned().fold(0.0, f64::max);
            if body.is_symmetric() || vertices.len() > 2000 {
                // ||X(a - b)|| <= ||Xa|| + ||Xb||
                symmetric_bound
            } else {
                let mut best = 0.0f64;
                for i in 0..vertices.len() {
                    for j in i + 1..vertices.len() {
                        let d: Vec<f64> = vertices[i].iter().zip(&vertices[j]).map(|(a, b)| a - b).collect();
                        best = best.max(form(&d));
                    }
                }
                best
            }
        }
    })
}

pub(crate) fn max_eigenvalue(h: &[f64], p: usize) -> f64 {
    let m = DMatrix::from_row_slice(p, p, h);
    SymmetricEigen::new(m).eigenvalues.max().max(0.0)
}

/// A random point of the body, biased toward the boundary: an extreme point
/// in a Gaussian direction, mixed with a second one.
pub fn sample_point(body: &ConvexBody, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let mut extreme = || -> Result<Vec<f64>> {
        let dir: Vec<f64> = (0..body.dim())
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        body.lmo(&dir)
    };
    let a = extreme()?;
    let b = extreme()?;
    let w: f64 = rng.random();
    let w = if w < 0.5 { 1.0 } else { w };
    Ok(a.iter().zip(&b).map(|(u, v)| w * u + (1.0 - w) * v).collect())
}

fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Value and gradient of the empirical loss, through the Gram matrix when
/// the loss is quadratic and that is cheaper than a pass over the records.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    loss: &'a Loss,
    data: &'a Dataset,
    quadratic: bool,
}

impl<'a> Objective<'a> {
    pub fn new(loss: &'a Loss, data: &'a Dataset) -> Self {
        let quadratic = loss.is_quadratic() && data.dim() <= data.n();
        if quadratic {
            data.gram();
        }
        Objective {
            loss,
            data,
            quadratic,
        }
    }

    pub fn loss(&self) -> &Loss {
        self.loss
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        if self.quadratic {
            let g = self.data.gram();
            let h = crate::linalg::mat_vec(&g.xtx, self.dim(), theta);
            0.5 * dot(theta, &h) - dot(&g.xty, theta)
                + 0.5 * g.yty
                + 0.5 * self.loss.ridge() * dot(theta, theta)
        } else {
            self.loss.loss(theta, self.data).expect("dimension checked")
        }
    }

    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        if self.quadratic {
            let g = self.data.gram();
            let mut out = crate::linalg::mat_vec(&g.xtx, self.dim(), theta);
            out.iter_mut().zip(&g.xty).for_each(|(a, b)| *a -= b);
            if self.loss.ridge() > 0.0 {
                axpy(self.loss.ridge(), theta, &mut out);
            }
            out
        } else {
            self.loss.grad(theta, self.data).expect("dimension checked")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_data(n: usize, p: usize, seed: u64, profile: DataProfile) -> Dataset {
        let mut rng = stream_rng(seed, 0);
        let x = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Dataset::new(p, x, y, profile).unwrap()
    }

    #[test]
    fn loss_examples() {
        let sq = Loss::new(LossSpec::squared()).unwrap();
        let single = Dataset::from_rows(&[vec![2.0, -1.0]], vec![3.0], DataProfile::Unrestricted).unwrap();
        assert_eq!(sq.loss(&[0.0, 0.0], &single).unwrap(), 4.5);
        assert_eq!(sq.grad(&[0.0, 0.0], &single).unwrap(), vec![-6.0, 3.0]);

        let d = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, -1.0],
            DataProfile::Lasso,
        )
        .unwrap();
        assert!((sq.loss(&[0.5, 0.5], &d).unwrap() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn normal_equations_zero_gradient() {
        // 3x2 system whose least-squares solution is (1, 2)
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let y = vec![1.0, 2.0, 3.0];
        let d = Dataset::from_rows(&rows, y, DataProfile::Unrestricted).unwrap();
        let sq = Loss::new(LossSpec::squared()).unwrap();
        let g = sq.grad(&[1.0, 2.0], &d).unwrap();
        assert!(norm2(&g) < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_records() {
        let err = Dataset::from_rows(&[vec![0.5], vec![1.5]], vec![0.0, 0.0], DataProfile::Lasso);
        assert!(matches!(err, Err(Error::RecordRejected { index: 1, .. })));
        let err = Dataset::from_rows(&[vec![0.5]], vec![-1.01], DataProfile::Lasso);
        assert!(matches!(err, Err(Error::RecordRejected { index: 0, .. })));
        assert!(Dataset::from_rows(&[vec![1.5]], vec![3.0], DataProfile::Unrestricted).is_ok());
        assert!(matches!(
            Dataset::new(2, vec![], vec![], DataProfile::Unrestricted),
            Err(Error::EmptyDataset)
        ));
        assert!(Dataset::new(1, vec![f64::NAN], vec![0.0], DataProfile::Unrestricted).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let sq = Loss::new(LossSpec::squared()).unwrap();
        let ball = ConvexBody::l1_ball(4, 1.0).unwrap();
        let lasso = random_data(50, 4, 1, DataProfile::Lasso);
        let (l1, l2) = sq.lipschitz_constants(&ball, &lasso).unwrap();
        assert_eq!(l1, 2.0);
        assert_eq!(l2, 4.0);

        let zeros = Dataset::new(3, vec![0.0; 6], vec![0.0; 2], DataProfile::Unrestricted).unwrap();
        let b3 = ConvexBody::l1_ball(3, 1.0).unwrap();
        assert_eq!(sq.lipschitz_constants(&b3, &zeros).unwrap(), (0.0, 0.0));

        let e1 = Dataset::from_rows(&[vec![1.0, 0.0]], vec![0.0], DataProfile::Unrestricted).unwrap();
        let b2 = ConvexBody::l1_ball(2, 1.0).unwrap();
        assert_eq!(sq.lipschitz_constants(&b2, &e1).unwrap().1, 1.0);
    }

    #[test]
    fn lasso_l1_lipschitz_holds_empirically() {
        let sq = Loss::new(LossSpec::squared()).unwrap();
        let p = 6;
        let ball = ConvexBody::l1_ball(p, 1.0).unwrap();
        let lasso = random_data(5, p, 2, DataProfile::Lasso);
        let (l1, l2) = sq.lipschitz_constants(&ball, &lasso).unwrap();
        let mut rng = stream_rng(7, 0);
        let mut worst = 0.0f64;
        for _ in 0..100_000 {
            let theta = sample_point(&ball, &mut rng).unwrap();
            // extreme records push the bound
            let x: Vec<f64> = (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let y = if rng.random::<bool>() { 1.0 } else { rng.random_range(-1.0..1.0) };
            let g = sq.grad_single(&theta, &x, y).unwrap();
            worst = worst.max(norm_inf(&g));
            assert!(norm2(&g) <= l2 + 1e-12);
        }
        assert!(worst <= l1 + 1e-12);
        assert!(worst > 1.9, "bound should be nearly attained, got {worst}");
    }

    #[test]
    fn custom_loss_needs_constants() {
        struct Linear;
        impl RecordLoss for Linear {
            fn value(&self, theta: &[f64], _x: &[f64], y: f64) -> f64 {
                y * theta[0]
            }
            fn add_grad(&self, _theta: &[f64], _x: &[f64], y: f64, scale: f64, out: &mut [f64]) {
                out[0] += scale * y;
            }
        }
        assert!(matches!(
            Loss::custom("lin", Arc::new(Linear), DeclaredConstants::default()),
            Err(Error::MissingConstant(_))
        ));
        let spec = LossSpec {
            kind: LossKind::Custom { name: "lin".into() },
            ridge: 0.0,
            constants: DeclaredConstants::default(),
        };
        assert!(Loss::new(spec).is_err());

        let constants = DeclaredConstants {
            l1_lipschitz: Some(1.0),
            l2_lipschitz: Some(1.0),
            ..Default::default()
        };
        let lin = Loss::custom("lin", Arc::new(Linear), constants).unwrap();
        let body = ConvexBody::l2_ball(1, 1.0).unwrap();
        let d = random_data(10, 1, 3, DataProfile::Lasso);
        assert_eq!(lin.lipschitz_constants(&body, &d).unwrap(), (1.0, 1.0));
        assert!(lin.curvature_bound(&body, &d).is_err());
        // a linear loss has no second-order term
        let mut rng = stream_rng(1, 0);
        assert!(lin.curvature_empirical(&body, &d, 200, &mut rng).unwrap() < 1e-9);
    }

    #[test]
    fn curvature_examples() {
        let sq = Loss::new(LossSpec::squared()).unwrap();
        let id = Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], DataProfile::Lasso).unwrap();
        let l1 = ConvexBody::l1_ball(2, 1.0).unwrap();
        assert!((sq.curvature_bound(&l1, &id).unwrap() - 2.0).abs() < 1e-15);

        let zero = Dataset::new(2, vec![0.0; 4], vec![1.0, -1.0], DataProfile::Lasso).unwrap();
        assert_eq!(sq.curvature_bound(&l1, &zero).unwrap(), 0.0);

        let one = Dataset::from_rows(&[vec![1.0]], vec![0.0], DataProfile::Unrestricted).unwrap();
        let seg = ConvexBody::cube(1, -1.0, 1.0).unwrap();
        assert!((sq.curvature_bound(&seg, &one).unwrap() - 4.0).abs() < 1e-12);
        let mut rng = stream_rng(2, 0);
        let emp = sq.curvature_empirical(&seg, &one, 2000, &mut rng).unwrap();
        assert!(emp <= 4.0 + 1e-9 && emp > 3.9, "{emp}");

        let lasso = random_data(200, 10, 4, DataProfile::Lasso);
        let l1 = ConvexBody::l1_ball(10, 1.0).unwrap();
        assert!(sq.curvature_bound(&l1, &lasso).unwrap() <= 4.0);
    }

    #[test]
    fn hessian_examples() {
        let sq = Loss::new(LossSpec::squared()).unwrap();
        let d = Dataset::from_rows(&[vec![1.0, 1.0]], vec![0.0], DataProfile::Unrestricted).unwrap();
        assert_eq!(sq.hessian_eig_bounds(&d).unwrap(), (0.0, 2.0));
        let z = Dataset::new(3, vec![0.0; 3], vec![0.0], DataProfile::Unrestricted).unwrap();
        assert_eq!(sq.hessian_eig_bounds(&z).unwrap(), (0.0, 0.0));
        let mut rng = stream_rng(3, 0);
        let x: Vec<f64> = (0..50 * 20).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let signs = Dataset::new(50, x, vec![0.0; 20], DataProfile::Lasso).unwrap();
        assert_eq!(sq.hessian_eig_bounds(&signs).unwrap().1, 50.0);
        let r = Loss::new(LossSpec::ridge(0.5)).unwrap();
        assert_eq!(r.hessian_eig_bounds(&d).unwrap(), (0.5, 2.5));
    }

    #[test]
    fn curvature_empirical_below_bound_on_small_instances() {
        let mut rng = stream_rng(5, 0);
        for trial in 0..1000 {
            let p = rng.random_range(1..=8);
            let n = rng.random_range(1..=16);
            let data = random_data(n, p, 100 + trial, DataProfile::Unrestricted);
            let body = match trial % 6 {
                0 => ConvexBody::l2_ball(p, rng.random_range(0.1..2.0)).unwrap(),
                1 => ConvexBody::l1_ball(p, rng.random_range(0.1..2.0)).unwrap(),
                2 => ConvexBody::simplex(p).unwrap(),
                3 => ConvexBody::cube(p, -0.5, 1.0).unwrap(),
                4 => ConvexBody::grouped_l1_ball(p, 1.0, 2.min(p)).unwrap(),
                _ => {
                    let k = rng.random_range(1..6);
                    let v = (0..k).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                    ConvexBody::polytope(v).unwrap()
                }
            };
            let ridge = if trial % 3 == 0 { 0.3 } else { 0.0 };
            let loss = Loss::new(LossSpec::ridge(ridge)).unwrap();
            let bound = loss.curvature_bound(&body, &data).unwrap();
            let emp = loss.curvature_empirical(&body, &data, 20, &mut rng).unwrap();
            assert!(emp <= bound * (1.0 + 1e-9) + 1e-12, "trial {trial}: {emp} > {bound}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_and_records() {
        let data = random_data(300, 5, 6, DataProfile::Unrestricted);
        let mut rng = stream_rng(6, 1);
        for spec in [LossSpec::squared(), LossSpec::huber(0.3), LossSpec::ridge(0.7)] {
            let loss = Loss::new(spec).unwrap();
            for _ in 0..20 {
                let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = loss.grad(&theta, &data).unwrap();
                for j in 0..5 {
                    let h = 1e-6;
                    let mut a = theta.clone();
                    let mut b = theta.clone();
                    a[j] += h;
                    b[j] -= h;
                    let fd = (loss.loss(&a, &data).unwrap() - loss.loss(&b, &data).unwrap()) / (2.0 * h);
                    assert!((fd - g[j]).abs() <= 1e-5);
                }
                let mut avg = vec![0.0; 5];
                for (x, y) in data.records() {
                    axpy(1.0 / 300.0, &loss.grad_single(&theta, x, y).unwrap(), &mut avg);
                }
                for (a, b) in avg.iter().zip(&g) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn parallel_gradient_is_bit_identical() {
        let data = random_data(20_000, 4, 8, DataProfile::Unrestricted);
        let loss = Loss::new(LossSpec::huber(0.5)).unwrap();
        let theta = [0.1, -0.2, 0.3, 0.05];
        let par = loss.grad(&theta, &data).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| loss.grad(&theta, &data).unwrap());
        assert_eq!(par, seq);
    }

    #[test]
    fn gram_objective_matches_records() {
        let data = random_data(500, 6, 9, DataProfile::Lasso);
        let loss = Loss::new(LossSpec::ridge(0.1)).unwrap();
        let obj = Objective::new(&loss, &data);
        let theta = [0.2, -0.1, 0.0, 0.3, 0.1, -0.3];
        assert!((obj.value(&theta) - loss.loss(&theta, &data).unwrap()).abs() < 1e-13);
        for (a, b) in obj.grad(&theta).iter().zip(loss.grad(&theta, &data).unwrap()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let data = random_data(17, 3, 10, DataProfile::Lasso);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        data.to_csv(&path).unwrap();
        assert_eq!(Dataset::from_csv(&path, DataProfile::Lasso).unwrap(), data);

        let mut buf = Vec::new();
        data.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 1 + 17 * 4 * 8);
        assert_eq!(Dataset::read_binary(buf.as_slice()).unwrap(), data);
        assert!(Dataset::read_binary(&b"garbage!xxxxxxxx"[..]).is_err());

        std::fs::write(&path, "0.5,2.0\n0.1\n").unwrap();
        assert!(Dataset::from_csv(&path, DataProfile::Unrestricted).is_err());
        std::fs::write(&path, "0.5,2.0\n").unwrap();
        assert!(matches!(
            Dataset::from_csv(&path, DataProfile::Lasso),
            Err(Error::RecordRejected { index: 0, .. })
        ));
    }

    #[test]
    fn spec_json_shape() {
        let spec: LossSpec = serde_json::from_str(r#"{"kind":"huber","delta":0.5,"ridge":0.1}"#).unwrap();
        assert_eq!(spec.kind, LossKind::Huber { delta: 0.5 });
        assert_eq!(spec.ridge, 0.1);
        let sq: LossSpec = serde_json::from_str(r#"{"kind":"squared_error"}"#).unwrap();
        assert_eq!(sq, LossSpec::squared());
        assert!(Loss::new(LossSpec::huber(-1.0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn lipschitz_bounds_hold_on_records(
            seed in 0u64..1000,
            radius in 0.1f64..3.0,
        ) {
            let p = 4;
            let data = random_data(8, p, seed, DataProfile::Unrestricted);
            let body = ConvexBody::l2_ball(p, radius).unwrap();
            let loss = Loss::new(LossSpec::huber(0.7)).unwrap();
            let (l1, l2) = loss.lipschitz_constants(&body, &data).unwrap();
            let mut rng = stream_rng(seed, 1);
            for _ in 0..50 {
                let theta = sample_point(&body, &mut rng).unwrap();
                for (x, y) in data.records() {
                    let g = loss.grad_single(&theta, x, y).unwrap();
                    proptest::prop_assert!(norm_inf(&g) <= l1 + 1e-12);
                    proptest::prop_assert!(norm2(&g) <= l2 + 1e-12);
                }
            }
        }
    }
}
