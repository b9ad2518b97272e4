//! Synthetic regression datasets.

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::scalar::Scalar;

/// `t = x³ + N(0, noise_sd²)` with `x ~ U[lo, hi)`.
pub fn toy_cubic<T: Scalar>(n: usize, lo: f64, hi: f64, noise_sd: f64, rng: &mut Rng) -> Result<Dataset<T>> {
    if n == 0 || !(hi > lo) || !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "toy_cubic needs n ≥ 1, lo < hi, noise ≥ 0 (got {n}, [{lo}, {hi}], {noise_sd})"
        )));
    }
    let mut xs = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.uniform_in(lo, hi);
        let noise = if noise_sd > 0.0 { rng.normal(0.0, noise_sd) } else { 0.0 };
        xs.push(T::lit(x));
        ts.push(T::lit(x * x * x + noise));
    }
    Ok(Dataset::new(xs, ts, vec!["x".into()], "t")?
        .with_provenance(format!("toy_cubic n={n} range=[{lo},{hi}] noise_sd={noise_sd}")))
}

/// Number of features produced by [`heteroscedastic`].
pub const HETERO_DIM: usize = 8;

/// Smooth nonlinear target with input-dependent noise.
///
/// Features are `U[0, 1)^8`. The mean is
/// `10 + 20x₀ + 8 sin(2πx₁) + 6x₂x₃` and the noise standard deviation
/// `0.5 + 2.5x₄`, so targets span roughly 2–48. Features `x₅…x₇` are
/// irrelevant. Size and width mirror the Energy efficiency table.
pub fn heteroscedastic<T: Scalar>(n: usize, rng: &mut Rng) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("heteroscedastic needs n ≥ 1".into()));
    }
    let mut xs = Vec::with_capacity(n * HETERO_DIM);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..HETERO_DIM).map(|_| rng.uniform()).collect();
        let mean = 10.0 + 20.0 * x[0] + 8.0 * (std::f64::consts::TAU * x[1]).sin() + 6.0 * x[2] * x[3];
        let sd = 0.5 + 2.5 * x[4];
        ts.push(T::lit(rng.normal(mean, sd)));
        xs.extend(x.into_iter().map(T::lit));
    }
    let names = (0..HETERO_DIM).map(|j| format!("x{j}")).collect();
    Ok(Dataset::new(xs, ts, names, "y")?.with_provenance(format!("heteroscedastic n={n}")))
}

/// Isotropic standard Gaussian cloud in `dim` dimensions with an
/// independent `N(0, 1)` target, so no split of the features shifts the
/// target distribution. With `planted = Some(r)` the last row is replaced by
/// a point at distance `r` from the origin in a uniformly random direction.
pub fn gaussian_blob<T: Scalar>(n: usize, dim: usize, planted: Option<f64>, rng: &mut Rng) -> Result<Dataset<T>> {
    if n < 2 || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "gaussian_blob needs n ≥ 2 and dim ≥ 1 (got {n}, {dim})"
        )));
    }
    let mut xs = Vec::with_capacity(n * dim);
    let mut ts = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = match planted {
            Some(r) if i == n - 1 => {
                let dir: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                dir.into_iter().map(|v| r * v / norm).collect()
            }
            _ => (0..dim).map(|_| rng.standard_normal()).collect(),
        };
        let t = rng.standard_normal();
        xs.extend(x.into_iter().map(T::lit));
        ts.push(T::lit(t));
    }
    let names = (0..dim).map(|j| format!("x{j}")).collect();
    let tag = planted.map_or(String::new(), |r| format!(" planted={r}"));
    Ok(Dataset::new(xs, ts, names, "y")?.with_provenance(format!("gaussian_blob n={n} dim={dim}{tag}")))
}
