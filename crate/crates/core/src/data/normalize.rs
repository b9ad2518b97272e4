use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How targets are scaled before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    /// Affine map of the training range onto `[0, 1]`.
    MinMax,
    /// Targets left in original units.
    Identity,
}

/// Training-set statistics used to scale features and targets.
///
/// Features are standardized as `(x − mean) / std`; targets as
/// `(t − target_min) / (target_max − target_min)`. Stored in f64 so a
/// checkpoint is independent of the working precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMeta {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
}

impl NormalizationMeta {
    /// Standardize features and map targets to `[0, 1]`.
    pub fn fit<T: Scalar>(train: &Dataset<T>) -> Result<Self> {
        Self::fit_with(train, true, TargetScaling::MinMax)
    }

    /// Leaves everything in original units.
    pub fn identity(dim: usize) -> Self {
        Self {
            feature_mean: vec![0.0; dim],
            feature_std: vec![1.0; dim],
            target_min: 0.0,
            target_max: 1.0,
        }
    }

    pub fn fit_with<T: Scalar>(train: &Dataset<T>, standardize_features: bool, targets: TargetScaling) -> Result<Self> {
        let n = train.len() as f64;
        let d = train.dim();
        let mut meta = Self::identity(d);
        if standardize_features {
            for j in 0..d {
                let mean = train.column(j).map(|v| v.as_f64()).sum::<f64>() / n;
                let var = train.column(j).map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
                let mut std = var.sqrt();
                if !(std > 1e-12 * mean.abs().max(1.0)) {
                    log::warn!(
                        "feature `{}` is constant on the training set; std set to 1",
                        train.feature_names[j]
                    );
                    std = 1.0;
                }
                meta.feature_mean[j] = mean;
                meta.feature_std[j] = std;
            }
        }
        if targets == TargetScaling::MinMax {
            let lo = train.targets().iter().map(|t| t.as_f64()).fold(f64::INFINITY, f64::min);
            let hi = train
                .targets()
                .iter()
                .map(|t| t.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return Err(Error::DegenerateTarget(lo));
            }
            meta.target_min = lo;
            meta.target_max = hi;
        }
        Ok(meta)
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn target_range(&self) -> f64 {
        self.target_max - self.target_min
    }

    pub fn normalize_features<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(&v, (&m, &s))| T::lit((v.as_f64() - m) / s))
            .collect())
    }

    pub fn normalize_target<T: Scalar>(&self, t: T) -> T {
        T::lit((t.as_f64() - self.target_min) / self.target_range())
    }

    pub fn denormalize_target<T: Scalar>(&self, t: T) -> T {
        T::lit(t.as_f64() * self.target_range() + self.target_min)
    }

    /// Maps a normalized `(μ, σ²)` back to original units.
    pub fn denormalize_gaussian<T: Scalar>(&self, mu: T, sigma2: T) -> (T, T) {
        let r = self.target_range();
        (self.denormalize_target(mu), T::lit(sigma2.as_f64() * r * r))
    }

    pub fn normalize_gaussian<T: Scalar>(&self, mu: T, sigma2: T) -> (T, T) {
        let r = self.target_range();
        (self.normalize_target(mu), T::lit(sigma2.as_f64() / (r * r)))
    }

    /// Scaled copy of `data`; statistics are never re-estimated from it.
    pub fn apply<T: Scalar>(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: data.dim(),
            });
        }
        let d = self.dim();
        let features = data
            .features()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let j = k % d;
                T::lit((v.as_f64() - self.feature_mean[j]) / self.feature_std[j])
            })
            .collect();
        let targets = data.targets().iter().map(|&t| self.normalize_target(t)).collect();
        Ok(data.with_values(features, targets))
    }

    /// Inverse of [`NormalizationMeta::apply`].
    pub fn invert<T: Scalar>(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: data.dim(),
            });
        }
        let d = self.dim();
        let features = data
            .features()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let j = k % d;
                T::lit(v.as_f64() * self.feature_std[j] + self.feature_mean[j])
            })
            .collect();
        let targets = data.targets().iter().map(|&t| self.denormalize_target(t)).collect();
        Ok(data.with_values(features, targets))
    }
}
