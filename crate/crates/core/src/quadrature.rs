//! Deterministic quadrature on uniform grids over `[0, 1]`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `n` equally spaced points `0, 1/(n-1), .., 1`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![0.5],
        _ => (0..n).map(|i| if i == n - 1 { 1.0 } else { i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// Weights matching [`uniform_grid`]: composite Boole when `n = 4m + 1`,
/// composite Simpson when `n` is odd, trapezoid otherwise.
pub fn weights(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument("quadrature needs at least 2 points".into()));
    }
    let h = 1.0 / (n - 1) as f64;
    let mut w = alloc::vec![0.0; n];
    if (n - 1) % 4 == 0 {
        for panel in (0..n - 1).step_by(4) {
            for (k, c) in [7.0, 32.0, 12.0, 32.0, 7.0].iter().enumerate() {
                w[panel + k] += 2.0 * h / 45.0 * c;
            }
        }
    } else if (n - 1) % 2 == 0 {
        for panel in (0..n - 1).step_by(2) {
            for (k, c) in [1.0, 4.0, 1.0].iter().enumerate() {
                w[panel + k] += h / 3.0 * c;
            }
        }
    } else {
        for i in 0..n - 1 {
            w[i] += h / 2.0;
            w[i + 1] += h / 2.0;
        }
    }
    Ok(w)
}

/// `int_0^1 f(t) dt` from samples of `f` on [`uniform_grid`]`(values.len())`.
pub fn integrate_samples(values: &[f64]) -> Result<f64> {
    let w = weights(values.len())?;
    Ok(w.iter().zip(values).map(|(a, b)| a * b).sum())
}

pub fn integrate<F: FnMut(f64) -> f64>(n: usize, mut f: F) -> Result<f64> {
    let values: Vec<f64> = uniform_grid(n).into_iter().map(&mut f).collect();
    integrate_samples(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_product_integral() {
        let v = integrate(65, |t| t * t * (1.0 - t) * (1.0 - t)).unwrap();
        assert!((v - 1.0 / 30.0).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_one() {
        for n in [2, 3, 4, 5, 10, 33, 64, 65] {
            let s: f64 = weights(n).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "n = {n}");
        }
        assert!(weights(1).is_err());
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = uniform_grid(7);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[6], 1.0);
    }
}
