//! Noise calibration and the mechanisms the solvers draw from.
//!
//! All logarithms are natural. Every calibration returns its value together
//! with a human-readable derivation line, collected into a [`NoisePlan`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::linalg::argmin;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    /// Disables all noise. Step counts are still derived from `epsilon`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub non_private: bool,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let b = PrivacyBudget {
            epsilon,
            delta,
            non_private: false,
        };
        b.validate()?;
        Ok(b)
    }

    /// The same budget with noise switched off.
    pub fn without_noise(self) -> Self {
        PrivacyBudget {
            non_private: true,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// True unless noise is disabled, either explicitly or by an infinite epsilon.
    pub fn is_private(&self) -> bool {
        !self.non_private && self.epsilon.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Gaussian noise of standard deviation `sigma` per coordinate per step.
    GaussianPerStep { sigma: f64 },
    /// Laplace noise of scale `scale` on every candidate score per step.
    LaplacePerScore { scale: f64 },
    /// One Gaussian linear term of deviation `sigma` plus a `zeta/2` quadratic.
    ObjPert { sigma: f64, zeta: f64 },
}

impl Mechanism {
    pub fn sigma(&self) -> f64 {
        match self {
            Mechanism::GaussianPerStep { sigma } | Mechanism::ObjPert { sigma, .. } => *sigma,
            Mechanism::LaplacePerScore { .. } => 0.0,
        }
    }

    pub fn laplace_scale(&self) -> f64 {
        match self {
            Mechanism::LaplacePerScore { scale } => *scale,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub mechanism: Mechanism,
    pub steps: usize,
    /// One line per substituted value or formula, in the order applied.
    pub trace: Vec<String>,
}

impl NoisePlan {
    pub fn new(mechanism: Mechanism, steps: usize) -> Self {
        NoisePlan {
            mechanism,
            steps,
            trace: Vec::new(),
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.trace.push(line.into());
    }
}

/// Per-step Gaussian deviation of noisy mirror descent:
/// `sigma^2 = 32 L^2 T ln^2(T/delta) / (eps n)^2`.
pub fn md_sigma(l2: f64, steps: usize, budget: &PrivacyBudget, n: usize) -> Result<f64> {
    budget.validate()?;
    if !(l2 >= 0.0 && l2.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter("md_sigma needs L >= 0 and n >= 1".into()));
    }
    let t = steps as f64;
    if t / budget.delta <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "ln(T/delta) degenerates for T = {steps}, delta = {}",
            budget.delta
        )));
    }
    if !budget.is_private() {
        return Ok(0.0);
    }
    Ok((32.0 * l2 * l2 * t).sqrt() * (t / budget.delta).ln() / (budget.epsilon * n as f64))
}

/// Gaussian deviation for Frank-Wolfe with a noisy gradient:
/// `sigma^2 = 32 L^2 T ln^2(n/delta) / (eps n)^2`.
pub fn fw_gaussian_sigma(l2: f64, steps: usize, budget: &PrivacyBudget, n: usize) -> Result<f64> {
    budget.validate()?;
    if !(l2 >= 0.0 && l2.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter("fw_gaussian_sigma needs L >= 0 and n >= 1".into()));
    }
    if !budget.is_private() {
        return Ok(0.0);
    }
    let t = steps as f64;
    Ok((32.0 * l2 * l2 * t).sqrt() * (n as f64 / budget.delta).ln() / (budget.epsilon * n as f64))
}

/// Laplace scale of the per-vertex scores in polytope Frank-Wolfe:
/// `b = L1 ||C||_1 sqrt(8 T ln(1/delta)) / (n eps)`.
pub fn fw_laplace_scale(
    l1: f64,
    l1_radius: f64,
    steps: usize,
    budget: &PrivacyBudget,
    n: usize,
) -> Result<f64> {
    budget.validate()?;
    if !(l1 >= 0.0 && l1_radius >= 0.0 && l1.is_finite() && l1_radius.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(
            "fw_laplace_scale needs finite L1, ||C||_1 >= 0 and n >= 1".into(),
        ));
    }
    if !budget.is_private() || steps == 0 {
        return Ok(0.0);
    }
    let t = steps as f64;
    Ok(l1 * l1_radius * (8.0 * t * (1.0 / budget.delta).ln()).sqrt() / (n as f64 * budget.epsilon))
}

/// `(sigma, zeta)` for objective perturbation:
/// `sigma = L sqrt(2 ln(1/delta)) / (n eps)`,
/// `zeta = max(2 lambda_max / (n eps) - lambda_min, 0)`.
pub fn objpert_plan(
    l2: f64,
    lambda_max: f64,
    lambda_min: f64,
    budget: &PrivacyBudget,
    n: usize,
) -> Result<(f64, f64)> {
    budget.validate()?;
    if lambda_min > lambda_max || lambda_min < 0.0 || !lambda_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= lambda_min <= lambda_max, got {lambda_min}, {lambda_max}"
        )));
    }
    if !(l2 >= 0.0 && l2.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter("objpert_plan needs L >= 0 and n >= 1".into()));
    }
    if !budget.is_private() {
        return Ok((0.0, 0.0));
    }
    let ne = n as f64 * budget.epsilon;
    let sigma = l2 * (2.0 * (1.0 / budget.delta).ln()).sqrt() / ne;
    let zeta = (2.0 * lambda_max / ne - lambda_min).max(0.0);
    Ok((sigma, zeta))
}

pub fn sample_gaussian_vec<R: Rng + ?Sized>(p: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; p];
    }
    (0..p)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Inverse-CDF draw from `Lap(scale)` using one uniform variate.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Index minimizing `score_i + Lap(scale)`; ties go to the lowest index.
/// With `scale = 0` no randomness is consumed.
pub fn report_noisy_min<R: Rng + ?Sized>(scores: &[f64], scale: f64, rng: &mut R) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter("no candidates to select from".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("candidate scores"));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("Laplace scale must be >= 0, got {scale}")));
    }
    if scale == 0.0 {
        return Ok(argmin(scores));
    }
    let noisy: Vec<f64> = scores.iter().map(|s| s + sample_laplace(scale, rng)).collect();
    Ok(argmin(&noisy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Diagonal(Vec<f64>),
    /// Row-major `p x p`.
    Full(Vec<f64>),
}

/// Symmetric square root of a covariance, ready for repeated sampling.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    p: usize,
    root: Option<DMatrix<f64>>,
    diag_root: Vec<f64>,
}

impl CovarianceFactor {
    pub fn new(p: usize, cov: &Covariance) -> Result<Self> {
        match cov {
            Covariance::Diagonal(d) => {
                crate::error::check_dim(p, d.len())?;
                check_finite(d, "covariance")?;
                if d.iter().any(|v| *v < 0.0) {
                    return Err(Error::InvalidParameter("covariance has a negative variance".into()));
                }
                Ok(CovarianceFactor {
                    p,
                    root: None,
                    diag_root: d.iter().map(|v| v.sqrt()).collect(),
                })
            }
            Covariance::Full(m) => {
                crate::error::check_dim(p * p, m.len())?;
                check_finite(m, "covariance")?;
                let mat = DMatrix::from_row_slice(p, p, m);
                let asym = (&mat - mat.transpose()).amax();
                let scale = mat.amax().max(f64::MIN_POSITIVE);
                if asym > 1e-12 * scale {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
                let eig = SymmetricEigen::new(mat);
                if eig.eigenvalues.min() < -1e-10 * scale {
                    return Err(Error::InvalidParameter(
                        "covariance is not positive semi-definite".into(),
                    ));
                }
                let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                let u = eig.eigenvectors;
                let root = &u * DMatrix::from_diagonal(&sqrt_vals) * u.transpose();
                Ok(CovarianceFactor {
                    p,
                    root: Some(root),
                    diag_root: Vec::new(),
                })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        match &self.root {
            Some(root) => (root * DVector::from_vec(z)).iter().copied().collect(),
            None => z.iter().zip(&self.diag_root).map(|(a, s)| a * s).collect(),
        }
    }
}

/// One zero-mean Gaussian draw with the given covariance.
pub fn sub_gaussian_noise<R: Rng + ?Sized>(p: usize, cov: &Covariance, rng: &mut R) -> Result<Vec<f64>> {
    Ok(CovarianceFactor::new(p, cov)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 1e-6).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 1e-6).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY, 0.5).unwrap().is_private() == false);
        assert!(!budget().without_noise().is_private());
        let json = serde_json::to_string(&budget()).unwrap();
        assert_eq!(json, r#"{"epsilon":1.0,"delta":1e-6}"#);
    }

    #[test]
    fn md_sigma_example() {
        let s = md_sigma(1.0, 100, &budget(), 1000).unwrap();
        let expected_var = 3200.0 * (1e8f64).ln().powi(2) / 1e6;
        assert!((s * s - expected_var).abs() < 1e-12 * expected_var);
        assert!((s * s - 1.08582).abs() < 1e-5);
        // the quoted 1.04202 is truncated; the exact value is 1.0420311
        assert!((s - 1.04202).abs() < 2e-5);
        assert_eq!(md_sigma(1.0, 100, &budget().without_noise(), 1000).unwrap(), 0.0);
        let half = md_sigma(1.0, 100, &budget(), 2000).unwrap();
        assert!((half * half * 4.0 - s * s).abs() < 1e-12);
        assert!(md_sigma(1.0, 0, &budget(), 10).is_err());
    }

    #[test]
    fn laplace_scale_example() {
        let b = fw_laplace_scale(1.0, 1.0, 64, &budget(), 10_000).unwrap();
        assert!((b - (512.0 * 1e6f64.ln()).sqrt() / 1e4).abs() < 1e-15);
        assert!((b - 8.411e-3).abs() < 1e-6);
        assert_eq!(fw_laplace_scale(1.0, 1.0, 0, &budget(), 10).unwrap(), 0.0);
        let b3 = fw_laplace_scale(3.0, 1.0, 64, &budget(), 10_000).unwrap();
        assert!((b3 - 3.0 * b).abs() < 1e-15);
    }

    #[test]
    fn objpert_example() {
        let (sigma, zeta) = objpert_plan(1.0, 1.0, 0.0, &budget(), 1000).unwrap();
        assert!((sigma - 5.2565e-3).abs() < 1e-7);
        assert!((zeta - 2e-3).abs() < 1e-15);
        assert_eq!(objpert_plan(1.0, 1.0, 0.5, &budget(), 1000).unwrap().1, 0.0);
        assert_eq!(objpert_plan(1.0, 1.0, 0.0, &budget().without_noise(), 1000).unwrap(), (0.0, 0.0));
        assert!(objpert_plan(1.0, 1.0, 2.0, &budget(), 1000).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(sample_gaussian_vec(3, 0.0, &mut rng), vec![0.0; 3]);
        let v = sample_gaussian_vec(1_000_000, 2.0, &mut rng);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!((var - 4.0).abs() < 0.04);
    }

    #[test]
    fn laplace_mean_absolute_value() {
        let mut rng = stream_rng(2, 0);
        let m = 1_000_000;
        let total: f64 = (0..m).map(|_| sample_laplace(0.7, &mut rng).abs()).sum();
        assert!((total / m as f64 - 0.7).abs() < 0.007);
        assert_eq!(sample_laplace(0.0, &mut rng), 0.0);
    }

    #[test]
    fn noisy_min_examples() {
        let mut rng = stream_rng(3, 0);
        assert_eq!(report_noisy_min(&[3.0, 1.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(report_noisy_min(&[1.0, 1.0], 0.0, &mut rng).unwrap(), 0);
        assert!(report_noisy_min(&[1.0, f64::NAN], 0.0, &mut rng).is_err());
        assert!(report_noisy_min(&[], 1.0, &mut rng).is_err());

        // P[Lap_1 - Lap_2 > 10] = (1 + 10/2) e^{-10} / 2 for unit scale
        let tail = 0.5 * (1.0 + 5.0) * (-10.0f64).exp();
        assert!(tail < 1e-3);
        let trials = 10_000;
        let zeros = (0..trials)
            .filter(|_| report_noisy_min(&[0.0, 10.0], 1.0, &mut rng).unwrap() == 0)
            .count();
        assert!(zeros as f64 / trials as f64 >= 0.99);
    }

    #[test]
    fn covariance_sampling() {
        let mut rng = stream_rng(4, 0);
        assert_eq!(
            sub_gaussian_noise(2, &Covariance::Full(vec![0.0; 4]), &mut rng).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(sub_gaussian_noise(2, &Covariance::Full(vec![1.0, 2.0, 2.0, 1.0]), &mut rng).is_err());
        assert!(sub_gaussian_noise(2, &Covariance::Diagonal(vec![1.0, -1.0]), &mut rng).is_err());

        let cov = [2.0, 0.6, 0.6, 0.5];
        let factor = CovarianceFactor::new(2, &Covariance::Full(cov.to_vec())).unwrap();
        let m = 100_000;
        let mut acc = [0.0; 4];
        let mut draws = Vec::with_capacity(m);
        for _ in 0..m {
            let z = factor.sample(&mut rng);
            for i in 0..2 {
                for j in 0..2 {
                    acc[i * 2 + j] += z[i] * z[j];
                }
            }
            draws.push(z);
        }
        for i in 0..2 {
            for j in 0..2 {
                let est = acc[i * 2 + j] / m as f64;
                // Var(z_i z_j) = S_ii S_jj + S_ij^2 for a centered Gaussian
                let se = ((cov[i * 2 + i] * cov[j * 2 + j] + cov[i * 2 + j].powi(2)) / m as f64).sqrt();
                assert!((est - cov[i * 2 + j]).abs() <= 3.0 * se, "entry ({i},{j}): {est}");
            }
        }
    }

    #[test]
    fn isotropic_covariance_matches_gaussian_vector() {
        let mut a = stream_rng(5, 0);
        let mut b = stream_rng(5, 0);
        let x = sub_gaussian_noise(4, &Covariance::Diagonal(vec![0.09; 4]), &mut a).unwrap();
        let y = sample_gaussian_vec(4, 0.3, &mut b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn streams_are_uncorrelated() {
        let mut a = stream_rng(9, crate::rng::streams::GRADIENT_NOISE);
        let mut b = stream_rng(9, crate::rng::streams::SELECTION_NOISE);
        let m = 100_000;
        let x = sample_gaussian_vec(m, 1.0, &mut a);
        let y = sample_gaussian_vec(m, 1.0, &mut b);
        let rho = x.iter().zip(&y).map(|(u, v)| u * v).sum::<f64>() / m as f64;
        assert!(rho.abs() < 0.01);
    }

    proptest::proptest! {
        #[test]
        fn noisy_min_without_noise_is_argmin(scores in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let mut rng = stream_rng(0, 0);
            let i = report_noisy_min(&scores, 0.0, &mut rng).unwrap();
            proptest::prop_assert_eq!(i, argmin(&scores));
        }
    }
}
