//! Property suites run by `belnet verify`: gradient integrity, quadrature
//! exactness, the convolution factorisation and solver convergence.
//!
//! Each property reports an observed number, the bound it must satisfy and
//! whether it did.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DenseArray, NodeId, OpKind, Tape};
use crate::data::burgers::{cell_centres, BurgersSolver};
use crate::data::elliptic_solve;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::operators::conv::{direct_circular_convolution, factored_circular_convolution, max_abs_difference};
use crate::operators::gradcheck::check_gradients;
use crate::operators::{
    quadrature_weights, Activation, BelNetSpec, CoefficientMap, CoordinateMap, DonSpec, MlpSpec, Model, ModelSpec,
    OperatorSample, PointSet,
};

/// Finite-difference step for every gradient check.
pub const FD_STEP: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
pub const CONVOLUTION_TOLERANCE: f64 = 1e-10;
pub const MIN_ORDER: f64 = 1.9;
pub const MASS_TOLERANCE: f64 = 1e-8;
pub const GRADIENT_INSTANCES: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Gradient,
    Quadrature,
    Convolution,
    Solvers,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Gradient, Suite::Quadrature, Suite::Convolution, Suite::Solvers];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradient => "gradient",
            Suite::Quadrature => "quadrature",
            Suite::Convolution => "convolution",
            Suite::Solvers => "solvers",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::config(format!("unknown suite '{s}' (gradient, quadrature, convolution, solvers)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum Requirement {
    Below(f64),
    AtLeast(f64),
}

impl Requirement {
    pub fn holds(self, observed: f64) -> bool {
        match self {
            Requirement::Below(bound) => observed < bound,
            Requirement::AtLeast(bound) => observed >= bound,
        }
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requirement::Below(b) => write!(f, "< {b:e}"),
            Requirement::AtLeast(b) => write!(f, ">= {b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub suite: Suite,
    pub name: String,
    pub observed: f64,
    pub required: Requirement,
    pub passed: bool,
    /// Where the observed value came from, e.g. the worst parameter block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl PropertyResult {
    fn new(suite: Suite, name: impl Into<String>, observed: f64, required: Requirement) -> Self {
        PropertyResult {
            suite,
            name: name.into(),
            observed,
            required,
            // NaN never passes.
            passed: required.holds(observed),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: observed {:.3e}, required {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.observed,
            self.required
        )?;
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

/// Runs one suite. `fault` corrupts the backward rule of one operation and
/// only affects the gradient suite.
pub fn run_suite(suite: Suite, fault: Option<OpKind>, exec: Exec) -> Result<Vec<PropertyResult>> {
    match suite {
        Suite::Gradient => gradient_suite(fault, exec),
        Suite::Quadrature => Ok(quadrature_suite()),
        Suite::Convolution => convolution_suite(),
        Suite::Solvers => solver_suite(),
    }
}

pub fn run_all(fault: Option<OpKind>, exec: Exec) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    for suite in Suite::ALL {
        out.extend(run_suite(suite, fault, exec)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- gradients

fn random_array(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseArray {
    let len = shape.iter().product();
    // Magnitudes bounded away from zero keep relu off its kink.
    let data = (0..len)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    DenseArray::new(shape.to_vec(), data).expect("shape matches data")
}

/// Leaf shapes and the graph exercising `op` on them.
fn op_graph(op: OpKind) -> (Vec<Vec<usize>>, Box<dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>>) {
    match op {
        OpKind::MatMul => (vec![vec![3, 4], vec![4, 2]], Box::new(|t, p| t.matmul(p[0], p[1]))),
        OpKind::Add => (vec![vec![3, 4], vec![3, 4]], Box::new(|t, p| t.add(p[0], p[1]))),
        OpKind::Sub => (vec![vec![3, 4], vec![3, 4]], Box::new(|t, p| t.sub(p[0], p[1]))),
        OpKind::Mul => (vec![vec![3, 4], vec![3, 4]], Box::new(|t, p| t.mul(p[0], p[1]))),
        OpKind::Scale => (vec![vec![3, 4]], Box::new(|t, p| Ok(t.scale(p[0], -1.7)))),
        OpKind::Tanh => (vec![vec![3, 4]], Box::new(|t, p| Ok(t.tanh(p[0])))),
        OpKind::Relu => (vec![vec![3, 4]], Box::new(|t, p| Ok(t.relu(p[0])))),
        OpKind::AddBias => (vec![vec![3, 4], vec![3, 1]], Box::new(|t, p| t.add_bias(p[0], p[1]))),
        OpKind::Sum => (vec![vec![3, 4]], Box::new(|t, p| Ok(t.sum(p[0])))),
        OpKind::Mean => (vec![vec![3, 4]], Box::new(|t, p| t.mean(p[0]))),
        OpKind::SumRows => (vec![vec![3, 4]], Box::new(|t, p| t.sum_rows(p[0]))),
        OpKind::ConcatRows => (vec![vec![2, 4], vec![3, 4]], Box::new(|t, p| t.concat_rows(&[p[0], p[1]]))),
        OpKind::SliceCols => (vec![vec![3, 5]], Box::new(|t, p| t.slice_cols(p[0], 1, 4))),
        OpKind::Transpose => (vec![vec![3, 4]], Box::new(|t, p| t.transpose(p[0]))),
        OpKind::Leaf | OpKind::Constant => unreachable!("not a differentiable operation"),
    }
}

/// Worst blockwise relative error of `d/dp sum(w * f(p)^2)` for one operation.
fn op_check(op: OpKind, fault: Option<OpKind>, seed: u64) -> Result<f64> {
    let (shapes, graph) = op_graph(op);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<DenseArray> = shapes.iter().map(|s| random_array(s, &mut rng)).collect();
    let out_shape = {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = params.iter().map(|p| t.constant(p.clone())).collect();
        let out = graph(&mut t, &ids)?;
        t.value(out).shape().to_vec()
    };
    let weights = random_array(&out_shape, &mut rng);

    let evaluate = |params: &[DenseArray], tracked: bool, fault: Option<OpKind>| -> Result<(f64, Vec<DenseArray>)> {
        let mut t = Tape::new();
        if let Some(f) = fault {
            t.inject_gradient_fault(f);
        }
        let ids: Vec<NodeId> = params
            .iter()
            .map(|p| if tracked { t.leaf(p.clone()) } else { t.constant(p.clone()) })
            .collect();
        let out = graph(&mut t, &ids)?;
        let sq = t.mul(out, out)?;
        let w = t.constant(weights.clone());
        let weighted = t.mul(sq, w)?;
        let loss = t.sum(weighted);
        let value = t.value(loss).data()[0];
        if !tracked {
            return Ok((value, Vec::new()));
        }
        let g = t.backward(loss)?;
        Ok((value, ids.iter().map(|&i| g.wrt(i)).collect()))
    };

    let (_, analytic) = evaluate(&params, true, fault)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for b in 0..probe.len() {
        let mut fd = vec![0.0; probe[b].len()];
        for (i, slot) in fd.iter_mut().enumerate() {
            let original = probe[b].data()[i];
            probe[b].data_mut()[i] = original + FD_STEP;
            let plus = evaluate(&probe, false, None)?.0;
            probe[b].data_mut()[i] = original - FD_STEP;
            let minus = evaluate(&probe, false, None)?.0;
            probe[b].data_mut()[i] = original;
            *slot = (plus - minus) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_difference(analytic[b].data(), &fd));
    }
    Ok(worst)
}

fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Reduced-width BelNet with the same block structure as the benchmark
/// configurations; the coefficient map cycles with the seed.
pub fn small_belnet_spec(seed: u64) -> BelNetSpec {
    let (coefficient_map, projection_activation) = match seed % 3 {
        0 => (CoefficientMap::Mixing(Activation::Relu), Activation::Tanh),
        1 => (CoefficientMap::Linear, Activation::Relu),
        _ => (CoefficientMap::Elementwise(Activation::Tanh), Activation::Tanh),
    };
    let sensor_dim = if seed % 2 == 0 { 1 } else { 2 };
    BelNetSpec {
        output_scale: 1.0,
        n_sensors: 5,
        sensor_dim,
        projection_width: 6,
        rank: 3,
        projection_activation,
        coefficient_map,
        construction: MlpSpec::new(vec![2, 7, 7, 3], Activation::Tanh)
            .with_input_map(CoordinateMap { offset: vec![0.5, 0.1], scale: vec![2.0, 1.5] }),
        sensor_map: Some(CoordinateMap::onto_unit_box(&vec![0.0; sensor_dim], &vec![1.0; sensor_dim])),
    }
}

pub fn small_don_spec(seed: u64) -> DonSpec {
    let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Relu };
    DonSpec {
        output_scale: 1.0,
        branch: MlpSpec::new(vec![5, 8, 4], act).with_output(Activation::Identity, true),
        trunk: MlpSpec::new(vec![2, 6, 6, 4], act)
            .with_output(Activation::Identity, true)
            .with_input_map(CoordinateMap { offset: vec![0.5, 0.1], scale: vec![2.0, 1.5] }),
    }
}

/// Two samples with distinct sensor locations and three queries each.
fn gradient_batch(sensor_dim: usize, seed: u64) -> Result<Vec<OperatorSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..2)
        .map(|_| {
            let sensors = PointSet::new(sensor_dim, (0..5 * sensor_dim).map(|_| rng.gen_range(0.0..1.0)).collect())?;
            let u = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let queries = PointSet::new(2, (0..6).map(|_| rng.gen_range(0.0..1.0)).collect())?;
            OperatorSample::unlabelled(sensors, u, queries)
        })
        .collect()
}

fn model_check(spec: ModelSpec, sensor_dim: usize, seed: u64, fault: Option<OpKind>) -> Result<(f64, String)> {
    let model = Model::init(&spec, seed)?;
    let batch = gradient_batch(sensor_dim, seed)?;
    let refs: Vec<&OperatorSample> = batch.iter().collect();
    let checks = check_gradients(&model, &refs, FD_STEP, fault)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.relative_error, c.block))
        .fold((0.0, String::new()), |acc, c| if c.0 > acc.0 || acc.1.is_empty() { c } else { acc }))
}

fn gradient_suite(fault: Option<OpKind>, exec: Exec) -> Result<Vec<PropertyResult>> {
    let required = Requirement::Below(GRADIENT_TOLERANCE);
    let ops = OpKind::DIFFERENTIABLE;
    let per_op = exec.try_map(ops.len(), |i| op_check(ops[i], fault, 100 + i as u64))?;
    let mut out: Vec<PropertyResult> = ops
        .iter()
        .zip(per_op)
        .map(|(op, err)| PropertyResult::new(Suite::Gradient, format!("op_{}", op.name()), err, required))
        .collect();

    let n = GRADIENT_INSTANCES as usize;
    let models = exec.try_map(2 * n, |i| {
        let seed = (i % n) as u64;
        if i < n {
            let spec = small_belnet_spec(seed);
            let dim = spec.sensor_dim;
            model_check(ModelSpec::BelNet(spec), dim, seed, fault)
        } else {
            model_check(ModelSpec::Don(small_don_spec(seed)), 1, seed, fault)
        }
    })?;
    for (i, (err, block)) in models.into_iter().enumerate() {
        let kind = if i < n { "belnet" } else { "don" };
        out.push(
            PropertyResult::new(Suite::Gradient, format!("{kind}_seed{}", i % n), err, required)
                .with_detail(format!("worst block {block}")),
        );
    }
    Ok(out)
}

// --------------------------------------------------------------- quadrature

/// For `N = 1..=8`: `N + 1` stratified random nodes on `[0, 1]` and a random
/// positive cubic `p`; every monomial `y^m`, `m <= N`, must be integrated
/// against `p` exactly.
fn quadrature_suite() -> Vec<PropertyResult> {
    (1..=8usize)
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + n as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let nodes: Vec<f64> = (0..=n)
                    .map(|j| (j as f64 + rng.gen_range(0.05..0.95)) / (n + 1) as f64)
                    .collect();
                let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..1.0)).collect();
                let p = |y: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c);
                let weights = match quadrature_weights(&p, &nodes, (0.0, 1.0)) {
                    Ok(w) => w,
                    Err(_) => return PropertyResult::new(Suite::Quadrature, format!("exactness_n{n}"), f64::NAN, Requirement::Below(QUADRATURE_TOLERANCE)),
                };
                for m in 0..=n {
                    let discrete: f64 = weights.iter().zip(&nodes).map(|(w, y)| w * y.powi(m as i32)).sum();
                    let exact: f64 = coeffs.iter().enumerate().map(|(i, c)| c / (i + m + 1) as f64).sum();
                    worst = worst.max((discrete - exact).abs() / exact.abs());
                }
            }
            PropertyResult::new(
                Suite::Quadrature,
                format!("exactness_n{n}"),
                worst,
                Requirement::Below(QUADRATURE_TOLERANCE),
            )
        })
        .collect()
}

// -------------------------------------------------------------- convolution

fn convolution_suite() -> Result<Vec<PropertyResult>> {
    [2usize, 4, 8, 16, 32, 64]
        .into_iter()
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + n as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let mut draw = || -> Vec<Complex64> {
                    (0..n)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect()
                };
                let (u, h) = (draw(), draw());
                let d = direct_circular_convolution(&u, &h)?;
                let f = factored_circular_convolution(&u, &h)?;
                worst = worst.max(max_abs_difference(&d, &f));
            }
            Ok(PropertyResult::new(
                Suite::Convolution,
                format!("factorisation_n{n}"),
                worst,
                Requirement::Below(CONVOLUTION_TOLERANCE),
            ))
        })
        .collect()
}

// ------------------------------------------------------------------ solvers

fn observed_order(errors: &[f64]) -> f64 {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

/// `u = exp(-a t) sin x` with the source `u u_x` that makes it exact.
pub fn burgers_manufactured_errors(cells: &[usize]) -> Result<Vec<f64>> {
    let alpha = 0.1;
    let t_end = 0.5;
    let exact = |x: f64, t: f64| (-alpha * t).exp() * x.sin();
    let source = move |x: f64, t: f64| (-2.0 * alpha * t).exp() * x.sin() * x.cos();
    cells
        .iter()
        .map(|&n| {
            let solver = BurgersSolver::new(n, alpha, 0.4)?;
            let centres = cell_centres(n);
            let ic: Vec<f64> = centres.iter().map(|&x| exact(x, 0.0)).collect();
            let out = solver.solve(&ic, &[t_end], Some(&source))?;
            let h = TAU / n as f64;
            let sq: f64 = out[0].iter().zip(&centres).map(|(v, &x)| (v - exact(x, t_end)).powi(2)).sum();
            Ok((sq * h).sqrt())
        })
        .collect()
}

/// `-lap u = 2 pi^2 sin(pi x) sin(pi y)` with zero boundary values; max-norm
/// error over the grid.
pub fn poisson_errors(cells: &[usize]) -> Result<Vec<f64>> {
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let f = |x: f64, y: f64| 2.0 * PI * PI * exact(x, y);
    cells
        .iter()
        .map(|&n| {
            let sol = elliptic_solve(&f, &|_, _| 1.0, n, 1e-12, 10_000)?;
            let mut worst: f64 = 0.0;
            for i in 0..=n + 1 {
                for j in 0..=n + 1 {
                    worst = worst.max((sol.node(i, j) - exact(sol.coordinate(i), sol.coordinate(j))).abs());
                }
            }
            Ok(worst)
        })
        .collect()
}

/// Largest change of `h * sum u` over several runs with non-zero mean.
pub fn burgers_mass_drift() -> Result<f64> {
    let n = 128;
    let solver = BurgersSolver::new(n, 0.1, 0.4)?;
    let centres = cell_centres(n);
    let h = solver.spacing();
    let mut worst: f64 = 0.0;
    for (k, s) in [0.5, 2.0, 3.9].into_iter().enumerate() {
        let ic: Vec<f64> = centres
            .iter()
            .map(|&x| s * x.sin() + 0.3 * ((k + 2) as f64 * x).cos() + 0.2)
            .collect();
        let out = solver.solve(&ic, &[0.1, 0.3], None)?;
        let before: f64 = ic.iter().sum::<f64>() * h;
        for snap in &out {
            worst = worst.max((snap.iter().sum::<f64>() * h - before).abs());
        }
    }
    Ok(worst)
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn solver_suite() -> Result<Vec<PropertyResult>> {
    let burgers = burgers_manufactured_errors(&[64, 128, 256])?;
    let poisson = poisson_errors(&[16, 32, 64])?;
    Ok(vec![
        PropertyResult::new(Suite::Solvers, "burgers_order", observed_order(&burgers), Requirement::AtLeast(MIN_ORDER))
            .with_detail(format!("errors {}", sci(&burgers))),
        PropertyResult::new(Suite::Solvers, "poisson_order", observed_order(&poisson), Requirement::AtLeast(MIN_ORDER))
            .with_detail(format!("errors {}", sci(&poisson))),
        PropertyResult::new(Suite::Solvers, "burgers_mass_drift", burgers_mass_drift()?, Requirement::Below(MASS_TOLERANCE)),
    ])
}
