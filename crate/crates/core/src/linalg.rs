//! Small dense vector kernels and a power-iteration eigen-solver.

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `y += a * x`
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
///
/// Stops once the eigen-residual `|Mv - lambda v|` drops below `tol` for the
/// unit iterate `v`. A zero image is reported as eigenvalue 0.
pub(crate) fn top_eigenvalue_psd<F>(
    start: Vec<f64>,
    mut apply: F,
    tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = start.len();
    let mut v = start;
    let norm = norm2(&v);
    if norm == 0.0 {
        return Err(Error::Invalid("power iteration needs a nonzero start vector".into()));
    }
    v.iter_mut().for_each(|c| *c /= norm);
    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        apply(&v, &mut w);
        let lambda = dot(&v, &w);
        let wn = norm2(&w);
        if wn <= f64::MIN_POSITIVE {
            return Ok(0.0);
        }
        residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            return Ok(lambda.max(0.0));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

/// Deterministic, non-degenerate start vector for power iteration.
pub(crate) fn start_vector(n: usize) -> Vec<f64> {
    // Golden-ratio sequence: no nontrivial linear relation with structured eigenvectors.
    (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract() - 0.5)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_diagonal() {
        let diag = [0.5, 3.0, 2.0];
        let r = top_eigenvalue_psd(
            start_vector(3),
            |v, w| {
                for i in 0..3 {
                    w[i] = diag[i] * v[i];
                }
            },
            1e-12,
            10_000,
        )
        .unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_zero_operator() {
        let r = top_eigenvalue_psd(start_vector(4), |_, w| w.fill(0.0), 1e-12, 10).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn power_iteration_reports_stall() {
        let err = top_eigenvalue_psd(
            start_vector(2),
            |v, w| {
                w[0] = v[0];
                w[1] = 0.999_999 * v[1];
            },
            1e-15,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 5, .. }));
    }
}
