use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{DataProfile, Dataset};
use crate::rng::{stream_rng, streams};

/// Redraws allowed per record before the noise level is declared too large.
pub const MAX_RESAMPLES: usize = 100;

/// Distribution of the feature entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureDesign {
    /// Uniform on `[-1, 1]`.
    #[default]
    Uniform,
    /// Uniform on `{-1, 1}`, the corners of the feature domain.
    Rademacher,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoGenerator {
    pub p: usize,
    pub sparsity: usize,
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub design: FeatureDesign,
}

impl LassoGenerator {
    pub fn generate(&self, n: usize) -> Result<Dataset> {
        generate_lasso_design(n, self.p, self.sparsity, self.noise, self.design, self.seed)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        LassoGenerator { seed, ..self }
    }
}

/// The planted parameter: `1/s` with alternating signs on the first `s`
/// coordinates, so `||theta*||_1 = 1`.
pub fn lasso_truth(p: usize, s: usize) -> Vec<f64> {
    (0..p)
        .map(|j| match j {
            j if j >= s => 0.0,
            j if j % 2 == 0 => 1.0 / s as f64,
            _ => -1.0 / s as f64,
        })
        .collect()
}

/// `n` records with `x` uniform on `[-1, 1]^p` and
/// `y = <x, theta*> + N(0, noise^2)`. A record with `|y| > 1` is redrawn in
/// full. Records come from one sequential stream, so a smaller `n` yields a
/// prefix of a larger one.
pub fn generate_lasso(n: usize, p: usize, s: usize, noise: f64, seed: u64) -> Result<Dataset> {
    generate_lasso_design(n, p, s, noise, FeatureDesign::Uniform, seed)
}

pub fn generate_lasso_design(
    n: usize,
    p: usize,
    s: usize,
    noise: f64,
    design: FeatureDesign,
    seed: u64,
) -> Result<Dataset> {
    if p == 0 || s == 0 || s > p {
        return Err(Error::InvalidParameter(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {noise}")));
    }
    let truth = lasso_truth(p, s);
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("positive deviation");
    let mut rng = stream_rng(seed, streams::DATA);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        let mut accepted = None;
        for _ in 0..MAX_RESAMPLES {
            match design {
                FeatureDesign::Uniform => row.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0)),
                FeatureDesign::Rademacher => {
                    row.iter_mut().for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 })
                }
            }
            let clean: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
            let label = if noise > 0.0 { clean + gauss.sample(&mut rng) } else { clean };
            if label.abs() <= 1.0 {
                accepted = Some(label);
                break;
            }
        }
        let label = accepted.ok_or_else(|| Error::RecordRejected {
            index: i,
            reason: format!("|y| > 1 after {MAX_RESAMPLES} draws; noise level {noise} too large"),
        })?;
        x.extend_from_slice(&row);
        y.push(label);
    }
    Dataset::new(p, x, y, DataProfile::Lasso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexBody;
    use crate::losses::{Loss, LossSpec};
    use crate::oracle::solve_exact;

    #[test]
    fn noiseless_single_support_copies_first_feature() {
        let d = generate_lasso(200, 5, 1, 0.0, 3).unwrap();
        for (x, y) in d.records() {
            assert_eq!(y, x[0]);
            assert!(y.abs() <= 1.0);
        }
    }

    #[test]
    fn smaller_n_is_a_prefix() {
        let a = generate_lasso(50, 4, 2, 0.3, 8).unwrap();
        let b = generate_lasso(120, 4, 2, 0.3, 8).unwrap();
        assert_eq!(a.features(), &b.features()[..200]);
        assert_eq!(a.labels(), &b.labels()[..50]);
        let c = generate_lasso(50, 4, 2, 0.3, 9).unwrap();
        assert_ne!(a.labels(), c.labels());
    }

    #[test]
    fn noiseless_optimum_is_zero() {
        let loss = Loss::new(LossSpec::squared()).unwrap();
        for seed in 0..10 {
            let d = generate_lasso(100, 6, 3, 0.0, seed).unwrap();
            let sol = solve_exact(&ConvexBody::l1_ball(6, 1.0).unwrap(), &loss, &d, 1e-12).unwrap();
            assert!(sol.optimum_value <= 1e-6);
        }
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let d = generate_lasso_design(64, 6, 2, 0.2, FeatureDesign::Rademacher, 4).unwrap();
        assert!(d.features().iter().all(|v| v.abs() == 1.0));
        assert!(d.labels().iter().all(|y| y.abs() <= 1.0));
    }

    #[test]
    fn hopeless_noise_is_an_error() {
        assert!(matches!(
            generate_lasso(10, 3, 1, 1e6, 1),
            Err(Error::RecordRejected { .. })
        ));
        assert!(generate_lasso(10, 3, 4, 0.1, 1).is_err());
    }
}
