//! Linear setting: a separable kernel `k(x, y) = sum_k p_k(y) q_k(x)` applied
//! through quadrature weights attached to the sensors.
//!
//! For distinct nodes `y_0..y_N` the weights `w_kj = int_I h_j(y) p_k(y) dy`,
//! with `h_j` the Lagrange basis of the nodes, integrate `p_k u` exactly for
//! every polynomial `u` of degree at most `N`, wherever the nodes are placed.

use std::f64::consts::PI;
use std::sync::Arc;

use super::sample::OperatorSample;
use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Gauss-Legendre points on `[-1, 1]`, exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like starting guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values of all Lagrange basis polynomials of `nodes` at `y`.
fn lagrange_basis(nodes: &[f64], y: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != j)
                .map(|(_, &yl)| (y - yl) / (nodes[j] - yl))
                .product()
        })
        .collect()
}

/// Quadrature weights of `p` for the given nodes on `interval`.
///
/// The integrals are evaluated with Gauss-Legendre using `nodes.len() + 32`
/// points, which is exact whenever `p` is a polynomial of degree below
/// `nodes.len() + 64`.
pub fn quadrature_weights(p: &dyn Fn(f64) -> f64, nodes: &[f64], interval: (f64, f64)) -> Result<Vec<f64>> {
    quadrature_weights_with_points(p, nodes, interval, nodes.len() + 32)
}

pub fn quadrature_weights_with_points(
    p: &dyn Fn(f64) -> f64,
    nodes: &[f64],
    interval: (f64, f64),
    points: usize,
) -> Result<Vec<f64>> {
    let (a, b) = interval;
    if !(a < b) {
        return Err(Error::contract(format!("empty interval [{a}, {b}]")));
    }
    if nodes.is_empty() {
        return Err(Error::contract("quadrature needs at least one node"));
    }
    for (i, &yi) in nodes.iter().enumerate() {
        if !(a..=b).contains(&yi) {
            return Err(Error::contract(format!("node {yi} lies outside [{a}, {b}]")));
        }
        if nodes[..i].contains(&yi) {
            return Err(Error::contract(format!("duplicate quadrature node {yi}")));
        }
    }
    let (gx, gw) = gauss_legendre(points);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut weights = vec![0.0; nodes.len()];
    for (&t, &w) in gx.iter().zip(&gw) {
        let y = mid + half * t;
        let py = p(y) * w * half;
        for (wj, hj) in weights.iter_mut().zip(lagrange_basis(nodes, y)) {
            *wj += hj * py;
        }
    }
    Ok(weights)
}

/// Rank-K kernel `k(x, y) = sum_k p_k(y) q_k(x)` with scalar `y`.
#[derive(Clone)]
pub struct SeparableKernel {
    p: Vec<ScalarFn>,
    q: Vec<PointFn>,
}

impl std::fmt::Debug for SeparableKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeparableKernel").field("rank", &self.rank()).finish()
    }
}

impl SeparableKernel {
    pub fn new(p: Vec<ScalarFn>, q: Vec<PointFn>) -> Result<Self> {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::contract(format!(
                "kernel needs matching non-empty p and q lists, got {} and {}",
                p.len(),
                q.len()
            )));
        }
        Ok(SeparableKernel { p, q })
    }

    pub fn rank(&self) -> usize {
        self.p.len()
    }

    pub fn evaluate(&self, x: &[f64], y: f64) -> f64 {
        self.p.iter().zip(&self.q).map(|(p, q)| p(y) * q(x)).sum()
    }

    pub fn p(&self, k: usize) -> &ScalarFn {
        &self.p[k]
    }

    pub fn q(&self, k: usize) -> &PointFn {
        &self.q[k]
    }

    /// Per-component quadrature weights for the given sensor nodes.
    pub fn quadrature_weights(&self, nodes: &[f64], interval: (f64, f64)) -> Result<Vec<Vec<f64>>> {
        self.p
            .iter()
            .map(|p| quadrature_weights(p.as_ref(), nodes, interval))
            .collect()
    }
}

/// `prediction(x) = sum_k q_k(x) sum_j w_kj u_j` at every query of `sample`.
pub fn linear_kernel_apply(kernel: &SeparableKernel, sample: &OperatorSample, weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != kernel.rank() {
        return Err(Error::contract(format!(
            "{} weight rows for a rank-{} kernel",
            weights.len(),
            kernel.rank()
        )));
    }
    let projections = weights
        .iter()
        .map(|row| {
            if row.len() != sample.u.len() {
                return Err(Error::contract(format!(
                    "{} weights for {} sensor values",
                    row.len(),
                    sample.u.len()
                )));
            }
            Ok(row.iter().zip(&sample.u).map(|(w, u)| w * u).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sample
        .queries
        .iter()
        .map(|x| kernel.q.iter().zip(&projections).map(|(q, c)| q(x) * c).sum())
        .collect())
}
