//! Circular convolution written as a separable kernel over the DFT basis.
//!
//! With `b(n, k) = exp(-2 pi i n k / L)` and the inverse basis
//! `w(k, m) = exp(2 pi i k m / L) / L`,
//!
//! ```text
//! (u * h)(m) = sum_k w(k, m) sum_n r(n, k) u(n),   r(n, k) = b(n, k) sum_l h(l) b(l, k)
//! ```
//!
//! i.e. the linear Fourier layer is a rank-`L` instance of the linear kernel
//! operator with `w` as the output basis and `r` as the input projection.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check(u: &[Complex64], h: &[Complex64]) -> Result<usize> {
    if u.is_empty() {
        return Err(Error::contract("circular convolution of an empty sequence"));
    }
    if u.len() != h.len() {
        return Err(Error::contract(format!(
            "sequence lengths differ: {} vs {}",
            u.len(),
            h.len()
        )));
    }
    Ok(u.len())
}

/// `O(L^2)` circular convolution `sum_n u(n) h((m - n) mod L)`.
pub fn direct_circular_convolution(u: &[Complex64], h: &[Complex64]) -> Result<Vec<Complex64>> {
    let len = check(u, h)?;
    Ok((0..len)
        .map(|m| (0..len).map(|n| u[n] * h[(m + len - n) % len]).sum())
        .collect())
}

/// The same convolution through explicit DFT basis values.
pub fn factored_circular_convolution(u: &[Complex64], h: &[Complex64]) -> Result<Vec<Complex64>> {
    let len = check(u, h)?;
    let l = len as f64;
    let basis = |n: usize, k: usize| Complex64::from_polar(1.0, -2.0 * PI * ((n * k) % len) as f64 / l);
    let inverse = |k: usize, m: usize| Complex64::from_polar(1.0 / l, 2.0 * PI * ((k * m) % len) as f64 / l);

    let h_hat: Vec<Complex64> = (0..len).map(|k| (0..len).map(|j| h[j] * basis(j, k)).sum()).collect();
    // sum_n r(n, k) u(n) for every k.
    let projected: Vec<Complex64> = (0..len)
        .map(|k| (0..len).map(|n| basis(n, k) * h_hat[k] * u[n]).sum())
        .collect();
    Ok((0..len)
        .map(|m| (0..len).map(|k| inverse(k, m) * projected[k]).sum())
        .collect())
}

/// Both forms side by side.
pub fn circular_conv_equivalence(u: &[Complex64], h: &[Complex64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    Ok((direct_circular_convolution(u, h)?, factored_circular_convolution(u, h)?))
}

/// Largest entrywise modulus of the difference.
pub fn max_abs_difference(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
