//! Viscous Burgers' equation `u_t + (u^2/2)_x = alpha u_xx` on the periodic
//! interval `[0, 2 pi)`.
//!
//! Initial data are produced by evolving `s sin(x)` with the inviscid equation
//! up to a short pre-shock time, which is done exactly along characteristics.
//! The viscous evolution uses Strang splitting: half a Crank-Nicolson
//! diffusion step, a full SSP-RK2 finite-volume advection step with a
//! local Lax-Friedrichs flux on linearly reconstructed states, then another
//! half diffusion step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PERIOD: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersConfig {
    /// Amplitudes `s` are drawn uniformly from this interval.
    pub s_range: (f64, f64),
    pub viscosity: f64,
    /// Inviscid pre-evolution time producing the initial condition.
    pub pre_evolution_time: f64,
    pub terminal_time: f64,
    pub n_sensors: usize,
    /// Training snapshots, uniform in `[0, terminal_time)`.
    pub n_snapshots: usize,
    /// Spatial points per snapshot in the training queries.
    pub n_query_points: usize,
    /// Points of the terminal-time test grid on `[0, 2 pi]`.
    pub n_test_points: usize,
    pub grid_cells: usize,
    /// Advective CFL number.
    pub cfl: f64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            s_range: (0.0, 4.0),
            viscosity: 0.1,
            pre_evolution_time: 0.1,
            terminal_time: 0.3,
            n_sensors: 25,
            n_snapshots: 5,
            n_query_points: 25,
            n_test_points: 151,
            grid_cells: 512,
            cfl: 0.4,
        }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.s_range;
        if !(lo <= hi) || lo < 0.0 {
            return Err(Error::config(format!("invalid amplitude range [{lo}, {hi}]")));
        }
        if self.viscosity <= 0.0 {
            return Err(Error::config("viscosity must be positive"));
        }
        if !(self.pre_evolution_time > 0.0) || (hi > 0.0 && self.pre_evolution_time * hi >= 1.0) {
            return Err(Error::config(format!(
                "pre-evolution time {} must lie in (0, 1/s_max) to stay before the shock",
                self.pre_evolution_time
            )));
        }
        if self.terminal_time <= 0.0 || self.n_snapshots == 0 || self.n_sensors == 0 {
            return Err(Error::config("terminal time, snapshot and sensor counts must be positive"));
        }
        if self.grid_cells < 8 || !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config("solver grid needs at least 8 cells and CFL in (0, 1]"));
        }
        Ok(())
    }

    /// `{0, T/n, ..., (n-1)T/n}`; the terminal time itself is excluded.
    pub fn snapshot_times(&self) -> Vec<f64> {
        (0..self.n_snapshots)
            .map(|i| i as f64 * self.terminal_time / self.n_snapshots as f64)
            .collect()
    }
}

/// Solves `u = s sin(x - u t)` for the inviscid solution at `(x, t)`.
///
/// Requires `s t < 1`, where the implicit equation has a unique root and the
/// Newton iteration (with a halving safeguard) converges.
pub fn characteristic_solution(s: f64, t: f64, x: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    if s.abs() * t >= 1.0 {
        return Err(Error::numeric(format!("s = {s}, t = {t} is past the shock time")));
    }
    let residual = |u: f64| u - s * (x - u * t).sin();
    let mut u = s * x.sin();
    for _ in 0..100 {
        let r = residual(u);
        if r.abs() < 1e-14 {
            return Ok(u);
        }
        let slope = 1.0 + s * t * (x - u * t).cos();
        let mut step = r / slope;
        let mut candidate = u - step;
        while residual(candidate).abs() > r.abs() && step.abs() > 1e-300 {
            step *= 0.5;
            candidate = u - step;
        }
        u = candidate;
    }
    let r = residual(u);
    if r.abs() < 1e-12 {
        Ok(u)
    } else {
        Err(Error::numeric(format!(
            "characteristic iteration did not converge at x = {x} (residual {r:e})"
        )))
    }
}

/// Initial condition on arbitrary points: inviscid evolution of `s sin(x)`
/// to `pre_evolution_time`.
pub fn burgers_initial_condition(s: f64, pre_evolution_time: f64, points: &[f64]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&x| characteristic_solution(s, pre_evolution_time, x))
        .collect()
}

/// Cell centres of an `n`-cell periodic grid on `[0, 2 pi)`.
pub fn cell_centres(n: usize) -> Vec<f64> {
    let h = PERIOD / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * h).collect()
}

/// Periodic tridiagonal system with constant coefficients
/// `lower u_{i-1} + diag u_i + upper u_{i+1} = rhs_i`.
struct CyclicTridiagonal {
    lower: f64,
    upper: f64,
    // Thomas factorisation of the modified (non-cyclic) matrix.
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    gamma: f64,
    z: Vec<f64>,
    diag: f64,
}

impl CyclicTridiagonal {
    fn new(n: usize, lower: f64, diag: f64, upper: f64) -> Self {
        // Sherman-Morrison: A = B + w v^T with w = (gamma, 0.., upper),
        // v = (1, 0.., lower / gamma).
        let gamma = -diag;
        let mut sys = CyclicTridiagonal {
            lower,
            upper,
            c_prime: vec![0.0; n],
            denom: vec![0.0; n],
            gamma,
            z: vec![0.0; n],
            diag,
        };
        for i in 0..n {
            let b = sys.modified_diag(i, n);
            let denom = if i == 0 { b } else { b - lower * sys.c_prime[i - 1] };
            sys.denom[i] = denom;
            sys.c_prime[i] = upper / denom;
        }
        let mut w = vec![0.0; n];
        w[0] = gamma;
        w[n - 1] = upper;
        sys.z = sys.thomas(&w);
        sys
    }

    fn modified_diag(&self, i: usize, n: usize) -> f64 {
        if i == 0 {
            self.diag - self.gamma
        } else if i == n - 1 {
            self.diag - self.lower * self.upper / self.gamma
        } else {
            self.diag
        }
    }

    fn thomas(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut d = vec![0.0; n];
        for i in 0..n {
            d[i] = if i == 0 {
                rhs[0] / self.denom[0]
            } else {
                (rhs[i] - self.lower * d[i - 1]) / self.denom[i]
            };
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.c_prime[i] * d[i + 1];
        }
        d
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let y = self.thomas(rhs);
        let v_last = self.lower / self.gamma;
        let vy = y[0] + v_last * y[n - 1];
        let vz = self.z[0] + v_last * self.z[n - 1];
        let factor = vy / (1.0 + vz);
        y.iter().zip(&self.z).map(|(yi, zi)| yi - factor * zi).collect()
    }
}

/// Source term `S(x, t)` added to the right-hand side of the equation.
pub type SourceFn<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// Finite-volume solver on an `n`-cell periodic grid.
pub struct BurgersSolver {
    cells: usize,
    viscosity: f64,
    cfl: f64,
}

impl BurgersSolver {
    pub fn new(cells: usize, viscosity: f64, cfl: f64) -> Result<Self> {
        if cells < 4 || viscosity <= 0.0 || !(cfl > 0.0) {
            return Err(Error::contract("solver needs >= 4 cells, positive viscosity and CFL"));
        }
        Ok(BurgersSolver { cells, viscosity, cfl })
    }

    pub fn spacing(&self) -> f64 {
        PERIOD / self.cells as f64
    }

    fn advection_rhs(&self, u: &[f64], t: f64, source: Option<SourceFn>, out: &mut [f64]) {
        let n = self.cells;
        let h = self.spacing();
        let slope = |i: usize| 0.5 * (u[(i + 1) % n] - u[(i + n - 1) % n]);
        let mut flux = vec![0.0; n];
        // flux[i] sits at the interface between cell i and i+1.
        for (i, f) in flux.iter_mut().enumerate() {
            let ip = (i + 1) % n;
            let left = u[i] + 0.5 * slope(i);
            let right = u[ip] - 0.5 * slope(ip);
            let speed = left.abs().max(right.abs());
            *f = 0.25 * (left * left + right * right) - 0.5 * speed * (right - left);
        }
        for i in 0..n {
            out[i] = -(flux[i] - flux[(i + n - 1) % n]) / h;
        }
        if let Some(src) = source {
            let centres = cell_centres(n);
            for (o, x) in out.iter_mut().zip(centres) {
                *o += src(x, t);
            }
        }
    }

    fn advect(&self, u: &mut [f64], t: f64, dt: f64, source: Option<SourceFn>) {
        let n = self.cells;
        let mut k = vec![0.0; n];
        self.advection_rhs(u, t, source, &mut k);
        let stage: Vec<f64> = u.iter().zip(&k).map(|(a, b)| a + dt * b).collect();
        self.advection_rhs(&stage, t + dt, source, &mut k);
        for i in 0..n {
            u[i] = 0.5 * (u[i] + stage[i] + dt * k[i]);
        }
    }

    fn diffuse(&self, u: &mut Vec<f64>, system: &CyclicTridiagonal, r_half: f64) {
        let n = self.cells;
        let rhs: Vec<f64> = (0..n)
            .map(|i| u[i] + 0.5 * r_half * (u[(i + n - 1) % n] - 2.0 * u[i] + u[(i + 1) % n]))
            .collect();
        *u = system.solve(&rhs);
    }

    /// Evolves cell values `ic` and returns the state at each of `times`
    /// (non-decreasing, starting at or after 0).
    pub fn solve(&self, ic: &[f64], times: &[f64], source: Option<SourceFn>) -> Result<Vec<Vec<f64>>> {
        if ic.len() != self.cells {
            return Err(Error::contract(format!(
                "{} initial values for {} cells",
                ic.len(),
                self.cells
            )));
        }
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::contract("snapshot times must be non-negative and sorted"));
        }
        let h = self.spacing();
        let initial_max = ic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Speed bound for the time step; also keeps dt finite for zero data.
        let speed = initial_max.max(1.0);
        let dt_max = self.cfl * h / speed;

        let mut u = ic.to_vec();
        let mut t = 0.0;
        let mut snapshots = Vec::with_capacity(times.len());
        let mut cached: Option<(f64, CyclicTridiagonal)> = None;
        for &target in times {
            let span = target - t;
            if span > 0.0 {
                let steps = (span / dt_max).ceil() as usize;
                let dt = span / steps as f64;
                let r_half = self.viscosity * (0.5 * dt) / (h * h);
                let system = match cached.take() {
                    Some((r, s)) if r == r_half => s,
                    _ => CyclicTridiagonal::new(self.cells, -0.5 * r_half, 1.0 + r_half, -0.5 * r_half),
                };
                for step in 0..steps {
                    let t0 = t + step as f64 * dt;
                    self.diffuse(&mut u, &system, r_half);
                    self.advect(&mut u, t0, dt, source);
                    self.diffuse(&mut u, &system, r_half);
                }
                cached = Some((r_half, system));
                let current_max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !current_max.is_finite() || (initial_max > 0.0 && current_max > 10.0 * initial_max) {
                    return Err(Error::numeric(format!(
                        "Burgers solution blew up before t = {target} (max |u| = {current_max:e})"
                    )));
                }
                t = target;
            }
            snapshots.push(u.clone());
        }
        Ok(snapshots)
    }
}

/// Four-point periodic Lagrange interpolation of cell-centre values.
pub fn interpolate_periodic(values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let h = PERIOD / n as f64;
    let pos = x.rem_euclid(PERIOD) / h - 0.5;
    let base = pos.floor();
    let frac = pos - base;
    let i0 = base as i64;
    let at = |offset: i64| values[(i0 + offset).rem_euclid(n as i64) as usize];
    let (a, b, c, d) = (at(-1), at(0), at(1), at(2));
    let f = frac;
    -f * (f - 1.0) * (f - 2.0) / 6.0 * a + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * b
        - (f + 1.0) * f * (f - 2.0) / 2.0 * c
        + (f + 1.0) * f * (f - 1.0) / 6.0 * d
}

/// Runs the full pipeline for one amplitude: initial condition on the solver
/// grid, viscous evolution, snapshots at `times`.
pub fn burgers_solve(config: &BurgersConfig, s: f64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let centres = cell_centres(config.grid_cells);
    let ic = burgers_initial_condition(s, config.pre_evolution_time, &centres)?;
    BurgersSolver::new(config.grid_cells, config.viscosity, config.cfl)?.solve(&ic, times, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2_cell_error(values: &[f64], exact: impl Fn(f64) -> f64) -> f64 {
        let h = PERIOD / values.len() as f64;
        let centres = cell_centres(values.len());
        (values
            .iter()
            .zip(centres)
            .map(|(v, x)| (v - exact(x)).powi(2))
            .sum::<f64>()
            * h)
            .sqrt()
    }

    #[test]
    fn zero_amplitude_gives_zero() {
        let pts = cell_centres(16);
        assert!(burgers_initial_condition(0.0, 0.1, &pts).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_symmetry_about_pi() {
        assert!(characteristic_solution(1.0, 0.1, PI).unwrap().abs() < 1e-15);
    }

    #[test]
    fn characteristic_matches_bisection() {
        let (s, t) = (2.0, 0.1);
        for &x in &[0.3, 1.0, 2.5, 3.5, 5.9] {
            let f = |u: f64| u - s * (x - u * t).sin();
            let (mut lo, mut hi) = (-s - 1.0, s + 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let oracle = 0.5 * (lo + hi);
            assert!((characteristic_solution(s, t, x).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn past_shock_is_rejected() {
        assert!(characteristic_solution(4.0, 0.3, 1.0).is_err());
    }

    #[test]
    fn cyclic_solver_inverts_periodic_matrix() {
        let n = 9;
        let (lo, d, up) = (-0.3, 1.6, -0.2);
        let sys = CyclicTridiagonal::new(n, lo, d, up);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| lo * x[(i + n - 1) % n] + d * x[i] + up * x[(i + 1) % n])
            .collect();
        let got = sys.solve(&b);
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let solver = BurgersSolver::new(64, 0.1, 0.4).unwrap();
        let snaps = solver.solve(&vec![0.0; 64], &[0.0, 0.1, 0.3], None).unwrap();
        assert!(snaps.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_is_conserved() {
        let config = BurgersConfig::default();
        let centres = cell_centres(config.grid_cells);
        let ic = burgers_initial_condition(3.7, 0.1, &centres).unwrap();
        let ic: Vec<f64> = ic.iter().zip(&centres).map(|(u, x)| u + 0.3 * (2.0 * x).cos() + 0.2).collect();
        let solver = BurgersSolver::new(config.grid_cells, config.viscosity, config.cfl).unwrap();
        let out = solver.solve(&ic, &[0.3], None).unwrap();
        let h = solver.spacing();
        let before: f64 = ic.iter().sum::<f64>() * h;
        let after: f64 = out[0].iter().sum::<f64>() * h;
        assert!((before - after).abs() < 1e-8, "{before} vs {after}");
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let alpha = 0.1;
        let t_end = 0.5;
        let exact = |x: f64, t: f64| (-alpha * t).exp() * x.sin();
        // u* = e^{-at} sin x solves u_t - a u_xx = 0, so the source is u* u*_x.
        let source = move |x: f64, t: f64| (-2.0 * alpha * t).exp() * x.sin() * x.cos();
        let errors: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let solver = BurgersSolver::new(n, alpha, 0.4).unwrap();
                let ic: Vec<f64> = cell_centres(n).iter().map(|&x| exact(x, 0.0)).collect();
                let out = solver.solve(&ic, &[t_end], Some(&source)).unwrap();
                l2_cell_error(&out[0], |x| exact(x, t_end))
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9, "observed order {order} from {errors:?}");
        }
    }

    #[test]
    fn periodic_interpolation_is_fourth_order_accurate() {
        let n = 128;
        let values: Vec<f64> = cell_centres(n).iter().map(|x| x.sin()).collect();
        for &x in &[0.0, 0.01, 1.234, PERIOD - 1e-3, PERIOD] {
            assert!((interpolate_periodic(&values, x) - x.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn default_snapshot_times() {
        let t = BurgersConfig::default().snapshot_times();
        let want = [0.0, 0.06, 0.12, 0.18, 0.24];
        for (a, b) in t.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
