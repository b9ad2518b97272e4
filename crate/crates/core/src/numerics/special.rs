//! Gaussian special functions.
//!
//! The error function follows the classic FreeBSD `s_erf.c` rational
//! approximations (the same scheme used by Go and most libms), evaluated in
//! the caller's scalar type. On top of it sit the standard normal pdf/cdf,
//! their logarithms, and a log-domain interval probability
//! `log(Φ(a) − Φ(b))` that stays finite deep in the tails.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Arguments to [`std_normal_cdf`] are clamped to `[-CDF_CLAMP, CDF_CLAMP]`.
pub const CDF_CLAMP: f64 = 40.0;

/// Below this the direct difference `Φ(a) − Φ(b)` is abandoned for a
/// log-domain form.
pub const DIRECT_DIFF_FLOOR: f64 = 1e-10;

/// `h·max(1, |m|)` at or below which the midpoint series is used, where `m`
/// and `h` are the centre and half-width of the interval.
const MIDPOINT_LIMIT: f64 = 0.05;

/// The direct difference is also abandoned when it is smaller than this
/// fraction of `Φ(a)`, i.e. when the subtraction cancels most digits.
const CANCELLATION_GUARD: f64 = 1e-3;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const ERX: f64 = 8.45062911510467529297e-01;
const EFX: f64 = 1.28379167095512586316e-01;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 6] = [
    1.0,
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 7] = [
    1.0,
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 9] = [
    1.0,
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 8] = [
    1.0,
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

#[inline]
fn poly<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Tail representation `erfc(x) = exp(-x² - 0.5625 + r) / x`, valid for
/// `x >= 1.25`. Returns `(z, r)` where `z` is `x` with a truncated
/// significand so `z*z` is exact.
#[inline]
fn erfc_tail_exponent<T: Scalar>(x: T) -> (T, T) {
    let s = T::one() / (x * x);
    let ratio = if x < T::lit(1.0 / 0.35) {
        poly(&RA, s) / poly(&SA, s)
    } else {
        poly(&RB, s) / poly(&SB, s)
    };
    let z = x.truncate_low_bits();
    (z, (z - x) * (z + x) + ratio)
}

/// Error function.
pub fn erf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    let mag = if ax < T::lit(0.84375) {
        if ax < T::lit(3.725_290_298_461_914e-9) {
            ax + T::lit(EFX) * ax
        } else {
            let z = ax * ax;
            ax + ax * (poly(&PP, z) / poly(&QQ, z))
        }
    } else if ax < T::lit(1.25) {
        let s = ax - T::one();
        T::lit(ERX) + poly(&PA, s) / poly(&QA, s)
    } else if ax >= T::lit(6.0) {
        T::one()
    } else {
        let (z, r) = erfc_tail_exponent(ax);
        T::one() - (-z * z - T::lit(0.5625)).exp() * r.exp() / ax
    };
    if x < T::zero() {
        -mag
    } else {
        mag
    }
}

/// Complementary error function `1 − erf(x)`, relatively accurate for
/// positive arguments until it underflows near `x ≈ 27`.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let two = T::lit(2.0);
    let ax = x.abs();
    let neg = x < T::zero();
    if ax < T::lit(0.84375) {
        let tmp = if ax < T::lit(1.387_778_780_781_445_7e-17) {
            ax
        } else {
            let z = ax * ax;
            let y = poly(&PP, z) / poly(&QQ, z);
            if ax < T::lit(0.25) {
                ax + ax * y
            } else {
                T::lit(0.5) + (ax * y + (ax - T::lit(0.5)))
            }
        };
        return if neg { T::one() + tmp } else { T::one() - tmp };
    }
    if ax < T::lit(1.25) {
        let s = ax - T::one();
        let pq = poly(&PA, s) / poly(&QA, s);
        return if neg {
            T::one() + T::lit(ERX) + pq
        } else {
            T::one() - T::lit(ERX) - pq
        };
    }
    if ax < T::lit(28.0) {
        if neg && ax > T::lit(6.0) {
            return two;
        }
        let (z, r) = erfc_tail_exponent(ax);
        let v = (-z * z - T::lit(0.5625)).exp() * r.exp() / ax;
        return if neg { two - v } else { v };
    }
    if neg {
        two
    } else {
        T::zero()
    }
}

/// `ln(erfc(x))` without underflow for large positive `x`.
pub fn ln_erfc<T: Scalar>(x: T) -> T {
    if x < T::lit(1.0 / 0.35) {
        return erfc(x).ln();
    }
    if x < T::lit(28.0) {
        let (z, r) = erfc_tail_exponent(x);
        return -z * z - T::lit(0.5625) + r - x.ln();
    }
    // asymptotic series erfc(x) ~ exp(-x²)/(x√π) · Σ (-1)^k (2k-1)!! / (2x²)^k
    let inv = T::one() / (T::lit(2.0) * x * x);
    let mut term = T::one();
    let mut sum = T::one();
    for k in 1..8 {
        term = -term * T::lit((2 * k - 1) as f64) * inv;
        sum += term;
    }
    -x * x - x.ln() - T::lit(0.5 * std::f64::consts::PI.ln()) + sum.ln()
}

/// Standard normal density `φ(z)`.
pub fn std_normal_pdf<T: Scalar>(z: T) -> T {
    T::lit(FRAC_1_SQRT_2PI) * (-(z * z) / T::lit(2.0)).exp()
}

/// `ln φ(z)`.
pub fn ln_std_normal_pdf<T: Scalar>(z: T) -> T {
    -(z * z) / T::lit(2.0) - T::lit(LN_SQRT_2PI)
}

/// Standard normal distribution function `Φ(z)`, argument clamped to ±40.
pub fn std_normal_cdf<T: Scalar>(z: T) -> T {
    let lim = T::lit(CDF_CLAMP);
    let z = z.max(-lim).min(lim);
    T::lit(0.5) * erfc(-z / T::SQRT_2())
}

/// `ln Φ(z)`, accurate in the far left tail where `Φ` underflows.
pub fn ln_std_normal_cdf<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        (-(T::lit(0.5) * erfc(z / T::SQRT_2()))).ln_1p()
    } else {
        -T::LN_2() + ln_erfc(-z / T::SQRT_2())
    }
}

/// `ln(Φ(upper) − Φ(lower))` for `upper > lower`.
///
/// Narrow intervals use the midpoint expansion
/// `2h·φ(m)·(1 + h²He₂(m)/6 + h⁴He₄(m)/120 + h⁶He₆(m)/5040)`. Otherwise the
/// direct difference is used while it is at least [`DIRECT_DIFF_FLOOR`] and
/// does not cancel badly; the remaining tail intervals subtract the two
/// log-cdfs with `ln(-expm1(·))`.
pub fn log_cdf_diff<T: Scalar>(upper: T, lower: T) -> Result<T> {
    if !(upper > lower) || !upper.is_finite() || !lower.is_finite() {
        return Err(Error::InvalidInterval {
            upper: upper.as_f64(),
            lower: lower.as_f64(),
        });
    }
    // reflect so the interval leans into the left tail, where Φ is
    // computed with full relative precision
    let (a, b) = if upper + lower > T::zero() {
        (-lower, -upper)
    } else {
        (upper, lower)
    };
    let two = T::lit(2.0);
    let mid = (a + b) / two;
    let half = (a - b) / two;
    if half * mid.abs().max(T::one()) <= T::lit(MIDPOINT_LIMIT) {
        // p = 2hφ(m) Σ h^2k He_2k(m) / (2k+1)!
        let m2 = mid * mid;
        let h2 = half * half;
        let he2 = m2 - T::one();
        let he4 = m2 * m2 - T::lit(6.0) * m2 + T::lit(3.0);
        let he6 = m2 * m2 * m2 - T::lit(15.0) * m2 * m2 + T::lit(45.0) * m2 - T::lit(15.0);
        let corr = h2 * (he2 / T::lit(6.0) + h2 * (he4 / T::lit(120.0) + h2 * he6 / T::lit(5040.0)));
        return Ok((two * half).ln() + ln_std_normal_pdf(mid) + corr.ln_1p());
    }
    let cdf_a = std_normal_cdf(a);
    let direct = cdf_a - std_normal_cdf(b);
    // subtraction is only trusted when it keeps most of Φ(a)'s digits
    if direct >= T::lit(DIRECT_DIFF_FLOOR) && direct >= cdf_a * T::lit(CANCELLATION_GUARD) {
        return Ok(direct.ln());
    }
    let la = ln_std_normal_cdf(a);
    let lb = ln_std_normal_cdf(b);
    Ok(la + (-(lb - la).exp_m1()).ln())
}

/// Inverse of [`std_normal_cdf`] by bisection, to an interval width of 1e-10.
pub fn std_normal_quantile<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    let mut lo = T::lit(-CDF_CLAMP);
    let mut hi = T::lit(CDF_CLAMP);
    let tol = T::lit(1e-10);
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}
