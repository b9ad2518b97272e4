//! Training criteria and their exact gradients with respect to `(μ, σ)`.
//!
//! Three per-sample criteria are provided:
//!
//! * squared error `(t − μ)²`;
//! * Gaussian negative log-likelihood `½ln(2πσ²) + (t − μ)²/(2σ²)`;
//! * the ε-agreement loss `−ln[Φ((t+ε−μ)/σ) − Φ((t−ε−μ)/σ)]`, i.e. the
//!   negative log-probability that a draw from `N(μ, σ²)` lands within `ε`
//!   of the target. As `ε → 0` it approaches the NLL shifted by `−ln(2ε)`.
//!
//! The ε-agreement loss is evaluated in the log domain (see
//! [`log_cdf_diff`]) and its gradients use ratios `φ(·)/p` formed as
//! `exp(ln φ − ln p)`, so they stay finite when both numerator and
//! denominator underflow. The agreement probability is clamped below at
//! [`LossSpec::prob_floor`]; inside the clamp the loss is constant and its
//! gradient is zero.
//!
//! [`taylor_bvm_loss`] is the second-order small-ε expansion of the
//! agreement loss (plus `ln 2ε`). It exists to check the exact loss, not to
//! train with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_std_normal_pdf, log_cdf_diff};
use crate::scalar::Scalar;

/// Lower bound on predicted variances, shared by the network head and the
/// losses.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Default clamp on the agreement probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-300;

/// Default agreement half-width, in normalized target units.
pub const DEFAULT_EPSILON: f64 = 0.01;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Nll,
    Bvm,
}

impl LossKind {
    /// Number of network outputs this criterion trains.
    pub fn output_dim(self) -> usize {
        match self {
            LossKind::Mse => 1,
            LossKind::Nll | LossKind::Bvm => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Nll => "nll",
            LossKind::Bvm => "bvm",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "nll" => Ok(LossKind::Nll),
            "bvm" => Ok(LossKind::Bvm),
            other => Err(Error::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

/// Which criterion to train with, plus its tuning knobs.
///
/// `epsilon` is only read for [`LossKind::Bvm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub epsilon: f64,
    pub prob_floor: f64,
}

impl LossSpec {
    pub fn mse() -> Self {
        Self {
            kind: LossKind::Mse,
            epsilon: DEFAULT_EPSILON,
            prob_floor: PROB_FLOOR,
        }
    }

    pub fn nll() -> Self {
        Self {
            kind: LossKind::Nll,
            ..Self::mse()
        }
    }

    pub fn bvm(epsilon: f64) -> Self {
        Self {
            kind: LossKind::Bvm,
            epsilon,
            prob_floor: PROB_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::Bvm && !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "probability floor must lie in (0, 1), got {}",
                self.prob_floor
            )));
        }
        Ok(())
    }

    /// Per-sample loss and gradients for this criterion. `sigma2` is ignored
    /// for MSE.
    pub fn per_sample<T: Scalar>(&self, t: T, mu: T, sigma2: T) -> Result<PerSampleEval<T>> {
        match self.kind {
            LossKind::Mse => Ok(mse_loss(t, mu)),
            LossKind::Nll => nll_loss(t, mu, sigma2),
            LossKind::Bvm => bvm_loss_with_floor(t, mu, sigma2, T::lit(self.epsilon), self.prob_floor),
        }
    }
}

/// Loss value and its partial derivatives in the mean and the standard
/// deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerSampleEval<T> {
    pub value: T,
    pub d_mu: T,
    pub d_sigma: T,
}

impl<T: Scalar> PerSampleEval<T> {
    /// Derivative with respect to the variance, `∂L/∂σ² = (∂L/∂σ) / 2σ`.
    pub fn d_sigma2(&self, sigma2: T) -> T {
        self.d_sigma / (T::lit(2.0) * sigma2.sqrt())
    }
}

fn check_variance<T: Scalar>(sigma2: T) -> Result<()> {
    // NaN fails the comparison as well
    if !(sigma2 >= T::lit(VARIANCE_FLOOR)) || !sigma2.is_finite() {
        return Err(Error::VarianceBelowFloor {
            sigma2: sigma2.as_f64(),
            floor: VARIANCE_FLOOR,
        });
    }
    Ok(())
}

pub fn mse_loss<T: Scalar>(t: T, mu: T) -> PerSampleEval<T> {
    let r = t - mu;
    PerSampleEval {
        value: r * r,
        d_mu: -T::lit(2.0) * r,
        d_sigma: T::zero(),
    }
}

pub fn nll_loss<T: Scalar>(t: T, mu: T, sigma2: T) -> Result<PerSampleEval<T>> {
    check_variance(sigma2)?;
    let r = t - mu;
    let sigma = sigma2.sqrt();
    let r2 = r * r;
    Ok(PerSampleEval {
        value: T::lit(0.5) * (T::lit(LN_2PI) + sigma2.ln()) + r2 / (T::lit(2.0) * sigma2),
        d_mu: -r / sigma2,
        d_sigma: T::one() / sigma - r2 / (sigma2 * sigma),
    })
}

/// ε-agreement loss with the default probability floor.
pub fn bvm_loss<T: Scalar>(t: T, mu: T, sigma2: T, eps: T) -> Result<PerSampleEval<T>> {
    bvm_loss_with_floor(t, mu, sigma2, eps, PROB_FLOOR)
}

pub fn bvm_loss_with_floor<T: Scalar>(t: T, mu: T, sigma2: T, eps: T, prob_floor: f64) -> Result<PerSampleEval<T>> {
    check_variance(sigma2)?;
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidEpsilon(eps.as_f64()));
    }
    let sigma = sigma2.sqrt();
    let upper = (t + eps - mu) / sigma;
    let lower = (t - eps - mu) / sigma;
    // the floor may underflow in single precision
    let ln_floor = T::lit(prob_floor).max(T::min_positive_value()).ln();
    if !(upper > lower) {
        // ε vanished against σ in this precision
        return Ok(PerSampleEval {
            value: -ln_floor,
            d_mu: T::zero(),
            d_sigma: T::zero(),
        });
    }
    let ln_p = log_cdf_diff(upper, lower)?;
    if ln_p <= ln_floor {
        return Ok(PerSampleEval {
            value: -ln_floor,
            d_mu: T::zero(),
            d_sigma: T::zero(),
        });
    }
    let ratio_up = (ln_std_normal_pdf(upper) - ln_p).exp();
    let ratio_lo = (ln_std_normal_pdf(lower) - ln_p).exp();
    Ok(PerSampleEval {
        value: -ln_p,
        d_mu: (ratio_up - ratio_lo) / sigma,
        d_sigma: (upper * ratio_up - lower * ratio_lo) / sigma,
    })
}

/// Second-order small-ε expansion of `bvm_loss + ln(2ε)`:
/// `½ln(2πσ²) + r²/(2σ²) − (ε²/6)(r²/σ⁴ − 1/σ²)` with `r = t − μ`.
pub fn taylor_bvm_loss<T: Scalar>(t: T, mu: T, sigma2: T, eps: T) -> Result<T> {
    check_variance(sigma2)?;
    let r2 = (t - mu) * (t - mu);
    let nll = T::lit(0.5) * (T::lit(LN_2PI) + sigma2.ln()) + r2 / (T::lit(2.0) * sigma2);
    Ok(nll - eps * eps / T::lit(6.0) * (r2 / (sigma2 * sigma2) - T::one() / sigma2))
}

/// Mean loss over a batch together with per-sample gradients already scaled
/// by `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<T> {
    pub mean: T,
    pub grads: Vec<PerSampleEval<T>>,
}

/// Averages `spec`'s per-sample criterion over a batch.
///
/// `variances` may be `None` only for MSE.
pub fn batch_loss<T: Scalar>(
    spec: &LossSpec,
    targets: &[T],
    means: &[T],
    variances: Option<&[T]>,
) -> Result<BatchLoss<T>> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if means.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: means.len(),
            right: targets.len(),
        });
    }
    if let Some(v) = variances {
        if v.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: targets.len(),
            });
        }
    } else if spec.kind != LossKind::Mse {
        return Err(Error::ShapeMismatch(format!(
            "{} loss needs predicted variances",
            spec.kind.as_str()
        )));
    }
    let n = T::lit(targets.len() as f64);
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(targets.len());
    for i in 0..targets.len() {
        let s2 = variances.map_or(T::one(), |v| v[i]);
        let e = spec.per_sample(targets[i], means[i], s2)?;
        total += e.value;
        grads.push(PerSampleEval {
            value: e.value,
            d_mu: e.d_mu / n,
            d_sigma: e.d_sigma / n,
        });
    }
    Ok(BatchLoss { mean: total / n, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error, Rng};

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(1.0, 1.0).value, 0.0);
        let e = mse_loss(3.0, 1.0);
        assert_eq!(e.value, 4.0);
        assert_eq!(e.d_mu, -4.0);
        assert_eq!(e.d_sigma, 0.0);
        // d/dμ of (t−μ)² at t=3, μ=1 is −2(t−μ) = −4; the +4 is ∂/∂t
        assert_eq!(mse_loss(1.0, 3.0).d_mu, 4.0);
    }

    #[test]
    fn nll_examples() {
        let e = nll_loss(0.3_f64, 0.3, 1.0).unwrap();
        assert!((e.value - HALF_LN_2PI).abs() < 1e-15);
        let e = nll_loss(0.0_f64, 1.0, 1.0).unwrap();
        assert!((e.value - 1.418_938_533_204_672_7).abs() < 1e-15);
        assert!(matches!(
            nll_loss(0.0, 0.0, 1e-9),
            Err(Error::VarianceBelowFloor { .. })
        ));
    }

    #[test]
    fn bvm_at_sigma_equal_eps() {
        // −ln(2Φ(1) − 1), 60-digit reference
        let e = bvm_loss(0.5_f64, 0.5, 1e-4, 0.01).unwrap();
        assert!((e.value - 0.3817151463021260745).abs() < 1e-13);
        assert!(e.d_mu.abs() < 1e-12);
    }

    #[test]
    fn bvm_reference_values_and_gradients() {
        // (t, μ, σ², ε, loss, ∂μ, ∂σ) from scripts/oracle_values.py
        let table: &[[f64; 7]] = &[
            [0.0, 0.0, 1e-4, 0.01, 0.3817151463021260745, 0.0, 70.88749052272067734],
            [
                0.3,
                0.5,
                0.01,
                0.01,
                4.52339305223817954,
                19.93359861089145459,
                -29.767860289395598871,
            ],
            [
                0.9,
                0.1,
                0.0025,
                0.01,
                128.50453705370829433,
                -317.24294071805002216,
                -5012.2272655016721607,
            ],
            [
                0.2,
                0.25,
                0.04,
                0.1,
                0.98864915340665495504,
                1.1493619739926967618,
                4.334027537905575146,
            ],
            [
                0.0,
                0.6,
                0.0036,
                0.01,
                51.597162340529388865,
                165.3536380819372373,
                -1623.9384264821167566,
            ],
        ];
        for row in table {
            let e = bvm_loss(row[0], row[1], row[2], row[3]).unwrap();
            let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-12);
            assert!(rel(e.value, row[4]) < 1e-11, "value {row:?}: {}", e.value);
            if row[5] != 0.0 {
                assert!(rel(e.d_mu, row[5]) < 1e-9, "d_mu {row:?}: {}", e.d_mu);
            }
            assert!(rel(e.d_sigma, row[6]) < 1e-9, "d_sigma {row:?}: {}", e.d_sigma);
        }
    }

    #[test]
    fn wider_window_captures_more_mass() {
        let narrow = bvm_loss(0.0, 0.0, 1.0, 0.01).unwrap().value;
        let wide = bvm_loss(0.0, 0.0, 1.0, 0.1).unwrap().value;
        assert!(narrow > wide);
    }

    #[test]
    fn bvm_rejects_bad_inputs() {
        assert!(matches!(bvm_loss(0.0, 0.0, 1.0, 0.0), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(bvm_loss(0.0, 0.0, 1.0, -0.1), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(
            bvm_loss(0.0, 0.0, 0.0, 0.1),
            Err(Error::VarianceBelowFloor { .. })
        ));
        assert!(LossSpec::bvm(0.0).validate().is_err());
        assert!(LossSpec::bvm(0.01).validate().is_ok());
    }

    #[test]
    fn bvm_hits_probability_floor_not_infinity() {
        // |t − μ| ≫ ε with σ at the floor
        let e = bvm_loss(0.9, 0.0, VARIANCE_FLOOR, 0.01).unwrap();
        assert!((e.value - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert_eq!(e.d_mu, 0.0);
        assert_eq!(e.d_sigma, 0.0);
        // just above the clamp the loss is large but still live
        let e = bvm_loss(0.36_f64, 0.0, 1e-4, 0.01).unwrap();
        assert!(e.value.is_finite() && e.value > 500.0 && e.value < 690.8);
        assert!(e.d_mu.is_finite() && e.d_mu < 0.0);
    }

    #[test]
    fn bvm_reflection_symmetry() {
        let mut rng = Rng::new(11);
        for _ in 0..200 {
            let t = rng.uniform_in(-1.0_f64, 1.0);
            let mu = rng.uniform_in(-1.0, 1.0);
            let s2 = rng.uniform_in(1e-4, 1.0);
            let eps = rng.uniform_in(1e-3, 0.3);
            let a = bvm_loss(t, mu, s2, eps).unwrap();
            let b = bvm_loss(2.0 * mu - t, mu, s2, eps).unwrap();
            assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(5);
        for i in 0..100 {
            let t = rng.uniform_in(0.0, 1.0);
            let sigma = rng.uniform_in(0.01, 0.5);
            // a third of the draws sit 5–10 standard deviations out
            let mu = if i % 3 == 0 {
                let z = rng.uniform_in(5.0, 10.0);
                t - z * sigma
            } else {
                rng.uniform_in(0.0, 1.0)
            };
            let eps = rng.uniform_in(0.005, 0.2);
            let e = bvm_loss(t, mu, sigma * sigma, eps).unwrap();
            let fd = finite_diff_grad(
                |p: &[f64]| bvm_loss(t, p[0], p[1] * p[1], eps).map(|e| e.value),
                &[mu, sigma],
                1e-5 * sigma,
            )
            .unwrap();
            let err = max_relative_error(&[e.d_mu, e.d_sigma], &fd, 1e-3);
            assert!(err < 1e-5, "draw {i}: analytic {:?} vs fd {fd:?}", (e.d_mu, e.d_sigma));

            let n = nll_loss(t, mu, sigma * sigma).unwrap();
            let fd = finite_diff_grad(
                |p: &[f64]| nll_loss(t, p[0], p[1] * p[1]).map(|e| e.value),
                &[mu, sigma],
                1e-5 * sigma,
            )
            .unwrap();
            assert!(max_relative_error(&[n.d_mu, n.d_sigma], &fd, 1e-3) < 1e-6);
        }
    }

    #[test]
    fn taylor_examples() {
        let anchor = taylor_bvm_loss(0.2, 0.5, 0.3, 0.0).unwrap();
        assert_eq!(anchor, nll_loss(0.2, 0.5, 0.3).unwrap().value);
        let v = taylor_bvm_loss(0.0, 0.0, 1.0, 0.01).unwrap();
        assert!((v - (HALF_LN_2PI + 1e-4 / 6.0)).abs() < 1e-15);
        assert!((v - 0.918_955_2).abs() < 1e-7);
    }

    #[test]
    fn taylor_error_is_third_order_or_better() {
        let gap = |eps: f64| {
            let exact = bvm_loss(0.0, 0.0, 1.0, eps).unwrap().value + (2.0 * eps).ln();
            (taylor_bvm_loss(0.0, 0.0, 1.0, eps).unwrap() - exact).abs()
        };
        let big = gap(0.1);
        let small = gap(0.05);
        assert!(big < 0.1_f64.powi(3));
        assert!(big / small >= 8.0, "shrink factor {}", big / small);
    }

    #[test]
    fn batch_loss_examples() {
        let spec = LossSpec::bvm(0.05);
        let one = batch_loss(&spec, &[0.4], &[0.5], Some(&[0.01])).unwrap();
        let direct = bvm_loss(0.4, 0.5, 0.01, 0.05).unwrap();
        assert_eq!(one.mean, direct.value);
        assert_eq!(one.grads[0].d_mu, direct.d_mu);
        let two = batch_loss(&spec, &[0.4, 0.4], &[0.5, 0.5], Some(&[0.01, 0.01])).unwrap();
        assert_eq!(two.mean, one.mean);
        assert_eq!(two.grads[0].d_mu, direct.d_mu / 2.0);
        assert!(matches!(
            batch_loss::<f64>(&spec, &[], &[], Some(&[])),
            Err(Error::EmptyBatch)
        ));
        assert!(batch_loss(&LossSpec::nll(), &[0.1], &[0.2], None).is_err());
        assert!(batch_loss(&LossSpec::mse(), &[0.1], &[0.2], None).is_ok());
    }

    #[test]
    fn batch_of_32_matches_resummation() {
        let mut rng = Rng::new(99);
        let spec = LossSpec::bvm(0.01);
        let t: Vec<f64> = (0..32).map(|_| rng.uniform_in(0.0, 1.0)).collect();
        let m: Vec<f64> = (0..32).map(|_| rng.uniform_in(0.0, 1.0)).collect();
        let v: Vec<f64> = (0..32).map(|_| rng.uniform_in(1e-3, 0.3)).collect();
        let got = batch_loss(&spec, &t, &m, Some(&v)).unwrap();
        // independent oracle: reverse-order compensated summation
        let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
        for i in (0..32).rev() {
            let y = bvm_loss(t[i], m[i], v[i], 0.01).unwrap().value - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
        }
        assert!((got.mean - sum / 32.0).abs() < 1e-12);
    }

    #[test]
    fn variance_gradient_chain_rule() {
        let e = nll_loss(0.1, 0.3, 0.04).unwrap();
        let fd = finite_diff_grad(|p: &[f64]| nll_loss(0.1, 0.3, p[0]).map(|e| e.value), &[0.04], 1e-7).unwrap();
        assert!((e.d_sigma2(0.04) - fd[0]).abs() < 1e-6);
    }

    #[test]
    fn works_in_single_precision() {
        let e = bvm_loss(0.5_f32, 0.45, 0.01, 0.01).unwrap();
        let d = bvm_loss(0.5_f64, 0.45, 0.01, 0.01).unwrap();
        assert!((e.value as f64 - d.value).abs() < 1e-4 * d.value);
    }
}
