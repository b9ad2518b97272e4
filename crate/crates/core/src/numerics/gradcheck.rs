//! Central finite differences, used as an independent oracle for the
//! hand-derived gradients of losses and networks.

use crate::scalar::Scalar;

/// Gradient of `f` at `x` by central differences with step `h`.
///
/// Each coordinate is perturbed in turn; errors from `f` are propagated.
pub fn finite_diff_grad<T, E, F>(mut f: F, x: &[T], h: T) -> Result<Vec<T>, E>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T, E>,
{
    assert!(h > T::zero(), "finite-difference step must be positive");
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe)?;
        probe[i] = orig - h;
        let down = f(&probe)?;
        probe[i] = orig;
        grad.push((up - down) / (T::lit(2.0) * h));
    }
    Ok(grad)
}

/// `|a − b| / max(|a|, |b|, floor)`; the floor keeps near-zero components
/// from dominating the comparison.
pub fn relative_error<T: Scalar>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest [`relative_error`] over paired components.
pub fn max_relative_error<T: Scalar>(a: &[T], b: &[T], floor: T) -> T {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| relative_error(x, y, floor))
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_grad(|x: &[f64]| Ok::<_, Infallible>(x[0] * x[0]), &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn sine_at_origin() {
        let g = finite_diff_grad(|x: &[f64]| Ok::<_, Infallible>(x[0].sin()), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn multivariate() {
        let f = |x: &[f64]| Ok::<_, Infallible>(x[0] * x[1] + x[2].exp());
        let g = finite_diff_grad(f, &[2.0, -1.0, 0.5], 1e-6).unwrap();
        let want = [-1.0, 2.0, 0.5_f64.exp()];
        assert!(max_relative_error(&g, &want, 1e-12) < 1e-8);
    }

    #[test]
    fn errors_propagate() {
        let r = finite_diff_grad(|_: &[f64]| Err::<f64, _>("boom"), &[1.0], 1e-3);
        assert_eq!(r, Err("boom"));
    }
}
