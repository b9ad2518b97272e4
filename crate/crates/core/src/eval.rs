//! Test-set metrics for Gaussian predictions: RMSE, predictive NLL and
//! calibration of central prediction intervals.

use serde::{Deserialize, Serialize};

use crate::data::StatDiff;
use crate::ensemble::GaussianPrediction;
use crate::error::{Error, Result};
use crate::numerics::std_normal_quantile;
use crate::scalar::Scalar;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The nine nominal coverage levels 0.1, 0.2, …, 0.9.
pub fn calibration_grid() -> [f64; 9] {
    std::array::from_fn(|i| (i + 1) as f64 / 10.0)
}

fn check_lengths<T>(preds: &[GaussianPrediction<T>], targets: &[T]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    Ok(())
}

fn check_variances<T: Scalar>(preds: &[GaussianPrediction<T>]) -> Result<()> {
    match preds.iter().find(|p| !(p.sigma2 > T::zero())) {
        Some(p) => Err(Error::NonPositiveVariance(p.sigma2.as_f64())),
        None => Ok(()),
    }
}

pub fn rmse<T: Scalar>(preds: &[GaussianPrediction<T>], targets: &[T]) -> Result<f64> {
    check_lengths(preds, targets)?;
    let sse: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, &t)| (t.as_f64() - p.mu.as_f64()).powi(2))
        .sum();
    Ok((sse / preds.len() as f64).sqrt())
}

/// Mean Gaussian negative log-likelihood of the targets.
pub fn predictive_nll<T: Scalar>(preds: &[GaussianPrediction<T>], targets: &[T]) -> Result<f64> {
    check_lengths(preds, targets)?;
    check_variances(preds)?;
    let total: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, &t)| {
            let s2 = p.sigma2.as_f64();
            let r = t.as_f64() - p.mu.as_f64();
            0.5 * (LN_2PI + s2.ln()) + r * r / (2.0 * s2)
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// One point of a reliability diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub expected: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub points: Vec<CalibrationPoint>,
}

impl CalibrationCurve {
    pub fn max_abs_deviation(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.observed - p.expected).abs())
            .fold(0.0, f64::max)
    }

    /// Pointwise mean of several curves over the same grid.
    pub fn average(curves: &[CalibrationCurve]) -> Result<CalibrationCurve> {
        let first = curves.first().ok_or(Error::EmptyPredictions)?;
        let n = curves.len() as f64;
        let points = first
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| CalibrationPoint {
                expected: p.expected,
                observed: curves.iter().map(|c| c.points[i].observed).sum::<f64>() / n,
            })
            .collect();
        Ok(CalibrationCurve { points })
    }

    /// `expected,observed` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("expected,observed\n");
        for p in &self.points {
            s.push_str(&format!("{:.1},{}\n", p.expected, p.observed));
        }
        s
    }
}

/// Share of targets inside the central interval `μ ± q((1+z)/2)·σ` for each
/// `z` on [`calibration_grid`].
pub fn calibration_curve<T: Scalar>(preds: &[GaussianPrediction<T>], targets: &[T]) -> Result<CalibrationCurve> {
    check_lengths(preds, targets)?;
    check_variances(preds)?;
    let n = preds.len() as f64;
    let points = calibration_grid()
        .iter()
        .map(|&z| {
            let q = std_normal_quantile((1.0 + z) / 2.0)?;
            let inside = preds
                .iter()
                .zip(targets)
                .filter(|(p, &t)| (t.as_f64() - p.mu.as_f64()).abs() <= q * p.sigma2.as_f64().sqrt())
                .count();
            Ok(CalibrationPoint {
                expected: z,
                observed: inside as f64 / n,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CalibrationCurve { points })
}

/// Settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub loss: String,
    pub epsilon: f64,
    pub ensemble_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: String,
}

/// Metrics of one trained ensemble on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub rmse: f64,
    pub nll: f64,
    pub calibration: CalibrationCurve,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stat_diff: Option<StatDiff>,
    pub meta: RunMetadata,
}

impl EvalReport {
    pub fn evaluate<T: Scalar>(
        preds: &[GaussianPrediction<T>],
        targets: &[T],
        stat_diff: Option<StatDiff>,
        meta: RunMetadata,
    ) -> Result<Self> {
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            rmse: rmse(preds, targets)?,
            nll: predictive_nll(preds, targets)?,
            calibration: calibration_curve(preds, targets)?,
            stat_diff,
            meta,
        })
    }
}

/// Sample mean and its standard error (sample std with n − 1, over √n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStdErr {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanStdErr {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyPredictions);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_err = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std_err,
            n: values.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{batch_loss, LossSpec};
    use crate::numerics::Rng;

    fn gp(mu: f64, sigma2: f64) -> GaussianPrediction<f64> {
        GaussianPrediction::new(mu, sigma2)
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[gp(1.0, 1.0), gp(2.0, 1.0)], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[gp(0.0, 1.0), gp(0.0, 1.0)], &[3.0, -4.0]).unwrap();
        assert!((r - 12.5_f64.sqrt()).abs() < 1e-15);
        let r2 = rmse(&[gp(0.0, 1.0), gp(0.0, 1.0)], &[-4.0, 3.0]).unwrap();
        assert_eq!(r, r2);
        assert!(matches!(
            rmse(&[gp(0.0, 1.0)], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn nll_examples() {
        let v = predictive_nll(&[gp(1.0, 1.0), gp(-2.0, 1.0)], &[1.0, -2.0]).unwrap();
        assert!((v - 0.918_938_533_204_672_7).abs() < 1e-15);
        let tight = predictive_nll(&[gp(0.0, 1.0)], &[10.0]).unwrap();
        let wide = predictive_nll(&[gp(0.0, 100.0)], &[10.0]).unwrap();
        assert!((tight - 50.9189385).abs() < 1e-6);
        assert!((wide - 3.7215236).abs() < 1e-6);
        assert!(wide < tight);
        assert!(predictive_nll(&[gp(0.0, 0.0)], &[1.0]).is_err());
    }

    #[test]
    fn nll_matches_training_loss() {
        let mut rng = Rng::new(2);
        let preds: Vec<_> = (0..50).map(|_| gp(rng.uniform(), rng.uniform_in(0.01, 1.0))).collect();
        let t: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
        let mu: Vec<f64> = preds.iter().map(|p| p.mu).collect();
        let s2: Vec<f64> = preds.iter().map(|p| p.sigma2).collect();
        let b = batch_loss(&LossSpec::nll(), &t, &mu, Some(&s2)).unwrap();
        assert!((predictive_nll(&preds, &t).unwrap() - b.mean).abs() < 1e-12);
    }

    #[test]
    fn calibration_extremes() {
        let grid = calibration_grid();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[0], 0.1);
        assert_eq!(grid[8], 0.9);
        let narrow = calibration_curve(&[gp(0.0, 1e-30); 4], &[1.0; 4]).unwrap();
        assert!(narrow.points.iter().all(|p| p.observed == 0.0));
        let wide = calibration_curve(&[gp(0.0, 1e30); 4], &[1.0; 4]).unwrap();
        assert!(wide.points.iter().all(|p| p.observed == 1.0));
        assert_eq!(wide.points.len(), 9);
    }

    #[test]
    fn calibration_of_exact_gaussians() {
        let mut rng = Rng::new(10);
        let n = 100_000;
        let preds: Vec<_> = (0..n)
            .map(|_| gp(rng.uniform_in(-5.0, 5.0), rng.uniform_in(0.1, 4.0)))
            .collect();
        let t: Vec<f64> = preds.iter().map(|p| rng.normal(p.mu, p.sigma2.sqrt())).collect();
        let c = calibration_curve(&preds, &t).unwrap();
        assert!(c.max_abs_deviation() <= 0.01, "{:?}", c);
        assert!(c.points.windows(2).all(|w| w[0].observed <= w[1].observed));
    }

    #[test]
    fn std_err_summary() {
        let s = MeanStdErr::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        // sample std √(5/3), over √4
        assert!((s.std_err - (5.0_f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(MeanStdErr::of(&[7.0]).unwrap().std_err, 0.0);
    }

    #[test]
    fn report_serializes_with_schema_version() {
        let preds = [gp(0.0, 1.0), gp(1.0, 2.0)];
        let meta = RunMetadata {
            seed: 1,
            loss: "bvm".into(),
            epsilon: 0.01,
            ensemble_size: 5,
            epochs: 40,
            batch_size: 32,
            learning_rate: 3e-4,
            weight_decay: 0.01,
            optimizer: "adamw".into(),
        };
        let r = EvalReport::evaluate(&preds, &[0.5, 0.5], None, meta).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert!(json.get("stat_diff").is_none());
        let back: EvalReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
