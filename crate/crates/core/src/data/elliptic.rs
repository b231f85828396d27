//! Multiscale elliptic problem `-div(kappa grad u) = f` on the unit square
//! with homogeneous Dirichlet data.
//!
//! Discretised with the cell-centred five-point finite-volume stencil, face
//! coefficients taken as the harmonic mean of the permeabilities of the two
//! adjacent cells, and solved by Jacobi-preconditioned conjugate gradients.
//! The permeability vanishes at isolated points such as `(3/16, 1/8)`, which
//! are nodes of power-of-two vertex grids but never cell centres.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipticConfig {
    pub epsilons: [f64; 3],
    /// Gaussians per source; must be a perfect square (lattice centres).
    pub n_gaussians: usize,
    pub gaussian_std: f64,
    pub weight_range: (f64, f64),
    /// Interior training grid per side, points `i / (n + 1)`.
    pub train_grid: usize,
    /// Interior test grid per side.
    pub test_grid: usize,
    /// Stratification cells per side; one sensor per cell.
    pub sensor_cells: usize,
    /// Fine solver cells per side.
    pub fine_cells: usize,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig {
            epsilons: [0.25, 0.125, 0.0625],
            n_gaussians: 9,
            gaussian_std: 0.1,
            weight_range: (-1.0, 1.0),
            train_grid: 19,
            test_grid: 100,
            sensor_cells: 10,
            fine_cells: 256,
            cg_tolerance: 1e-10,
            cg_max_iterations: 20_000,
        }
    }
}

impl EllipticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::config("permeability scales must be positive"));
        }
        let side = (self.n_gaussians as f64).sqrt().round() as usize;
        if side * side != self.n_gaussians || side == 0 {
            return Err(Error::config(format!(
                "{} Gaussians do not fill a square lattice",
                self.n_gaussians
            )));
        }
        if !(self.gaussian_std > 0.0) || !(self.weight_range.0 <= self.weight_range.1) {
            return Err(Error::config("invalid Gaussian width or weight range"));
        }
        if self.fine_cells < 4 || self.sensor_cells == 0 || self.train_grid == 0 || self.test_grid == 0 {
            return Err(Error::config("grid sizes must be positive (fine grid >= 4 cells)"));
        }
        Ok(())
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_cells * self.sensor_cells
    }

    /// Gaussian centres on the lattice `{1/(m+1), ..., m/(m+1)}^2`.
    pub fn centres(&self) -> Vec<[f64; 2]> {
        let m = (self.n_gaussians as f64).sqrt().round() as usize;
        let step = 1.0 / (m + 1) as f64;
        let mut out = Vec::with_capacity(m * m);
        for i in 1..=m {
            for j in 1..=m {
                out.push([i as f64 * step, j as f64 * step]);
            }
        }
        out
    }
}

/// Two-fraction multiscale coefficient.
pub fn elliptic_permeability(epsilons: &[f64; 3], x1: f64, x2: f64) -> f64 {
    let [e1, e2, e3] = *epsilons;
    let a = 2.0 * PI * x1 / e1;
    let b = 2.0 * PI * x2 / e2;
    let c = 2.0 * PI * x2 / e3;
    1.0 + a.sin() * b.cos() / (2.0 + a.cos() * b.sin()) + a.sin() * c.cos() / (2.0 + a.cos() * c.sin())
}

/// `f(x) = sum_i w_i exp(-|x - c_i|^2 / (2 sigma^2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSource {
    centres: Vec<[f64; 2]>,
    weights: Vec<f64>,
    std: f64,
}

impl GaussianSource {
    pub fn evaluate(&self, x1: f64, x2: f64) -> f64 {
        let denom = 2.0 * self.std * self.std;
        self.centres
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * (-((x1 - c[0]).powi(2) + (x2 - c[1]).powi(2)) / denom).exp())
            .sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub fn elliptic_source(config: &EllipticConfig, weights: &[f64]) -> Result<GaussianSource> {
    if weights.len() != config.n_gaussians {
        return Err(Error::contract(format!(
            "{} weights for {} Gaussians",
            weights.len(),
            config.n_gaussians
        )));
    }
    Ok(GaussianSource {
        centres: config.centres(),
        weights: weights.to_vec(),
        std: config.gaussian_std,
    })
}

/// Cell-centred solution on `cells x cells` control volumes, padded with the
/// zero boundary values so that interpolation covers the closed square.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSolution {
    cells: usize,
    /// `values[i * (n + 2) + j]` at `(axis[i], axis[j])`.
    values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Coordinates `0, h/2, 3h/2, ..., 1 - h/2, 1` of the padded grid.
fn padded_axis(n: usize, i: usize) -> f64 {
    match i {
        0 => 0.0,
        _ if i == n + 1 => 1.0,
        _ => (i as f64 - 0.5) / n as f64,
    }
}

impl GridSolution {
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Padded grid coordinate along either axis, `i` in `0..=cells + 1`.
    pub fn coordinate(&self, i: usize) -> f64 {
        padded_axis(self.cells, i)
    }

    /// Padded grid value; indices `1..=cells` are cell centres.
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.cells + 2) + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear interpolation at a point of the unit square.
    pub fn interpolate(&self, x1: f64, x2: f64) -> f64 {
        let n = self.cells;
        let locate = |x: f64| {
            let x = x.clamp(0.0, 1.0);
            // Index of the padded interval containing x.
            let i = ((x * n as f64 + 0.5).floor() as usize).min(n);
            let (lo, hi) = (padded_axis(n, i), padded_axis(n, i + 1));
            (i, (x - lo) / (hi - lo))
        };
        let (i, fx) = locate(x1);
        let (j, fy) = locate(x2);
        let v00 = self.node(i, j);
        let v10 = self.node(i + 1, j);
        let v01 = self.node(i, j + 1);
        let v11 = self.node(i + 1, j + 1);
        (1.0 - fx) * (1.0 - fy) * v00 + fx * (1.0 - fy) * v10 + (1.0 - fx) * fy * v01 + fx * fy * v11
    }

    pub fn scaled_sum(parts: &[(&GridSolution, f64)]) -> Result<GridSolution> {
        let (first, _) = parts.first().ok_or_else(|| Error::contract("empty combination"))?;
        let mut values = vec![0.0; first.values.len()];
        for (sol, w) in parts {
            if sol.cells != first.cells {
                return Err(Error::contract("combining solutions on different grids"));
            }
            for (v, s) in values.iter_mut().zip(&sol.values) {
                *v += w * s;
            }
        }
        Ok(GridSolution {
            cells: first.cells,
            values,
            iterations: 0,
            relative_residual: 0.0,
        })
    }
}

/// Five-point cell-centred operator with harmonic-mean face coefficients.
/// Boundary faces see the Dirichlet value half a cell away.
struct Stencil {
    n: usize,
    /// `x_faces[i * n + j]`: face at `x1 = i h` in row `j`, `i` in `0..=n`.
    x_faces: Vec<f64>,
    /// `y_faces[i * (n + 1) + j]`: face at `x2 = j h` in column `i`.
    y_faces: Vec<f64>,
    diag: Vec<f64>,
    inv_h2: f64,
}

impl Stencil {
    fn new(cells: usize, kappa: &dyn Fn(f64, f64) -> f64) -> Result<Self> {
        let n = cells;
        let h = 1.0 / n as f64;
        let mut cell = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                let k = kappa(x1, x2);
                if !(k > 0.0) || !k.is_finite() {
                    return Err(Error::numeric(format!("permeability {k} at ({x1}, {x2}) is not positive")));
                }
                cell[i * n + j] = k;
            }
        }
        let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);
        let at = |i: usize, j: usize| cell[i * n + j];
        let mut x_faces = vec![0.0; (n + 1) * n];
        for i in 0..=n {
            for j in 0..n {
                x_faces[i * n + j] = match i {
                    0 => 2.0 * at(0, j),
                    _ if i == n => 2.0 * at(n - 1, j),
                    _ => harmonic(at(i - 1, j), at(i, j)),
                };
            }
        }
        let mut y_faces = vec![0.0; n * (n + 1)];
        for i in 0..n {
            for j in 0..=n {
                y_faces[i * (n + 1) + j] = match j {
                    0 => 2.0 * at(i, 0),
                    _ if j == n => 2.0 * at(i, n - 1),
                    _ => harmonic(at(i, j - 1), at(i, j)),
                };
            }
        }
        let inv_h2 = (n * n) as f64;
        let diag = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                inv_h2
                    * (x_faces[i * n + j]
                        + x_faces[(i + 1) * n + j]
                        + y_faces[i * (n + 1) + j]
                        + y_faces[i * (n + 1) + j + 1])
            })
            .collect();
        Ok(Stencil {
            n,
            x_faces,
            y_faces,
            diag,
            inv_h2,
        })
    }

    /// `out = A u` over cell unknowns stored as `u[i * n + j]`.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let mut acc = self.diag[idx] * u[idx];
                if i > 0 {
                    acc -= self.inv_h2 * self.x_faces[i * n + j] * u[idx - n];
                }
                if i + 1 < n {
                    acc -= self.inv_h2 * self.x_faces[(i + 1) * n + j] * u[idx + n];
                }
                if j > 0 {
                    acc -= self.inv_h2 * self.y_faces[i * (n + 1) + j] * u[idx - 1];
                }
                if j + 1 < n {
                    acc -= self.inv_h2 * self.y_faces[i * (n + 1) + j + 1] * u[idx + 1];
                }
                out[idx] = acc;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the Dirichlet problem on `cells x cells` control volumes. CG stops
/// at `||r|| / ||b|| < tolerance`.
pub fn elliptic_solve(
    source: &dyn Fn(f64, f64) -> f64,
    kappa: &dyn Fn(f64, f64) -> f64,
    cells: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<GridSolution> {
    if cells < 2 {
        return Err(Error::contract("elliptic grid needs at least 2 cells per side"));
    }
    let stencil = Stencil::new(cells, kappa)?;
    let n = cells;
    let h = 1.0 / n as f64;
    let b: Vec<f64> = (0..n * n)
        .map(|idx| source((idx / n) as f64 * h + 0.5 * h, (idx % n) as f64 * h + 0.5 * h))
        .collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n * n];
    let mut iterations = 0;
    let mut relative_residual = 0.0;
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&stencil.diag).map(|(ri, d)| ri / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n * n];
        let mut rz = dot(&r, &z);
        loop {
            relative_residual = dot(&r, &r).sqrt() / b_norm;
            if relative_residual < tolerance {
                break;
            }
            if iterations >= max_iterations || !relative_residual.is_finite() {
                return Err(Error::numeric(format!(
                    "conjugate gradients stopped after {iterations} iterations at relative residual {relative_residual:e}"
                )));
            }
            stencil.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n * n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..n * n {
                z[k] = r[k] / stencil.diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n * n {
                p[k] = z[k] + beta * p[k];
            }
            iterations += 1;
        }
    }
    let mut values = vec![0.0; (n + 2) * (n + 2)];
    for i in 0..n {
        for j in 0..n {
            values[(i + 1) * (n + 2) + j + 1] = x[i * n + j];
        }
    }
    Ok(GridSolution {
        cells: n,
        values,
        iterations,
        relative_residual,
    })
}

/// Fine-grid responses to each unit-weight Gaussian. The solution operator is
/// linear in the source, so any weighted source is solved by the same
/// combination of these.
pub fn gaussian_basis_solutions(config: &EllipticConfig, exec: Exec) -> Result<Vec<GridSolution>> {
    config.validate()?;
    let eps = config.epsilons;
    exec.try_map(config.n_gaussians, |g| {
        let mut weights = vec![0.0; config.n_gaussians];
        weights[g] = 1.0;
        let src = elliptic_source(config, &weights)?;
        elliptic_solve(
            &|x, y| src.evaluate(x, y),
            &|x, y| elliptic_permeability(&eps, x, y),
            config.fine_cells,
            config.cg_tolerance,
            config.cg_max_iterations,
        )
    })
}

/// Interior lattice `{1/(n+1), ..., n/(n+1)}^2` as `(x1, x2)` pairs, x1-major.
pub fn interior_grid(n: usize) -> Vec<[f64; 2]> {
    let step = 1.0 / (n + 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            out.push([i as f64 * step, j as f64 * step]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: [f64; 3] = [0.25, 0.125, 0.0625];

    #[test]
    fn permeability_at_origin_is_one() {
        assert_eq!(elliptic_permeability(&EPS, 0.0, 0.0), 1.0);
    }

    #[test]
    fn permeability_hand_value() {
        let k = elliptic_permeability(&EPS, EPS[0] / 4.0, 0.0);
        assert!((k - 2.0).abs() < 1e-15, "{k}");
    }

    #[test]
    fn permeability_scan_bounds() {
        let n = 1024;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                let k = elliptic_permeability(&EPS, i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
                lo = lo.min(k);
                hi = hi.max(k);
            }
        }
        // Each fraction lies in [-1/2, 1/2]; the minimum on this scan is
        // about 1.2e-6, not bounded away from zero.
        eprintln!("permeability scan: min {lo:e}, max {hi}");
        assert!(lo > 0.0 && lo < 1e-3, "min {lo}");
        assert!(hi <= 2.0 && hi > 1.999, "max {hi}");
    }

    #[test]
    fn permeability_vanishes_at_isolated_points() {
        // sin = -1 in the x1 factor and both cosines equal 1 in x2.
        assert!(elliptic_permeability(&EPS, 3.0 / 16.0, 0.125).abs() < 1e-14);
    }

    #[test]
    fn permeability_positive_at_fine_cell_centres() {
        let n = 256;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                assert!(elliptic_permeability(&EPS, x, y) > 0.0);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_source() {
        let cfg = EllipticConfig::default();
        let f = elliptic_source(&cfg, &[0.0; 9]).unwrap();
        assert_eq!(f.evaluate(0.3, 0.7), 0.0);
    }

    #[test]
    fn single_centre_peak() {
        let cfg = EllipticConfig::default();
        let mut w = [0.0; 9];
        w[4] = 1.0;
        let f = elliptic_source(&cfg, &w).unwrap();
        assert_eq!(cfg.centres()[4], [0.5, 0.5]);
        assert!((f.evaluate(0.5, 0.5) - 1.0).abs() < 1e-15);
        for p in interior_grid(19) {
            assert!(f.evaluate(p[0], p[1]) <= 1.0);
        }
    }

    #[test]
    fn source_matches_term_by_term_sum() {
        let cfg = EllipticConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = elliptic_source(&cfg, &w).unwrap();
        let lattice = [0.25, 0.5, 0.75];
        for p in interior_grid(19) {
            let mut want = 0.0;
            for (a, cx) in lattice.iter().enumerate() {
                for (b, cy) in lattice.iter().enumerate() {
                    let d2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
                    want += w[a * 3 + b] * (-d2 / 0.02).exp();
                }
            }
            assert!((f.evaluate(p[0], p[1]) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let sol = elliptic_solve(&|_, _| 0.0, &|_, _| 1.0, 16, 1e-10, 1000).unwrap();
        assert!(sol.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_eigenfunction_converges_at_second_order() {
        let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let f = |x: f64, y: f64| 2.0 * PI * PI * exact(x, y);
        let errors: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let sol = elliptic_solve(&f, &|_, _| 1.0, n, 1e-12, 10_000).unwrap();
                let mut worst: f64 = 0.0;
                for i in 0..=n + 1 {
                    for j in 0..=n + 1 {
                        let (x, y) = (sol.coordinate(i), sol.coordinate(j));
                        worst = worst.max((sol.node(i, j) - exact(x, y)).abs());
                    }
                }
                worst
            })
            .collect();
        for w in errors.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errors:?}");
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let err = elliptic_solve(&|_, _| 1.0, &|_, _| 1.0, 32, 1e-14, 3).unwrap_err();
        assert!(err.to_string().contains("residual"), "{err}");
    }

    #[test]
    fn bilinear_interpolation_reproduces_nodes_and_planes() {
        let n = 4;
        let plane = |x: f64, y: f64| 8.0 * x + 4.0 * y;
        let values = (0..(n + 2) * (n + 2))
            .map(|k| plane(padded_axis(n, k / (n + 2)), padded_axis(n, k % (n + 2))))
            .collect();
        let sol = GridSolution {
            cells: n,
            values,
            iterations: 0,
            relative_residual: 0.0,
        };
        assert_eq!(sol.coordinate(1), 0.125);
        assert_eq!(sol.interpolate(0.625, 0.125), sol.node(3, 1));
        for (x, y) in [(0.33, 0.71), (0.0, 0.05), (0.99, 1.0), (1.0, 1.0)] {
            assert!((sol.interpolate(x, y) - plane(x, y)).abs() < 1e-12, "({x}, {y})");
        }
    }
}
