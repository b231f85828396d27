//! Rank-one separable kernel task shared by the training tests and the
//! acceptance run.

use belnet_core::data::{stream, Purpose};
use belnet_core::operators::{Activation, BelNetSpec, CoefficientMap, MlpSpec, OperatorSample, PointSet};
use rand::Rng;

pub const SENSORS: usize = 8;
pub const QUERIES: usize = 16;

/// Cell midpoints of [0, 1].
pub fn sensor_grid() -> Vec<f64> {
    (0..SENSORS).map(|j| (j as f64 + 0.5) / SENSORS as f64).collect()
}

pub fn query_grid() -> Vec<f64> {
    (0..QUERIES).map(|i| i as f64 / (QUERIES - 1) as f64).collect()
}

/// k(x, y) = p(y) q(x) with p(y) = 1 + y - y^2 and q(x) = tanh(2x - 1/2);
/// inputs are cubics u(y) = sum_m a_m y^m on [0, 1], so
/// G(u)(x) = q(x) sum_m a_m I_m with I_m = 1/(m+1) + 1/(m+2) - 1/(m+3).
pub fn synthetic_samples(n: usize, offset: u64) -> Vec<OperatorSample> {
    let (sensors, queries) = (sensor_grid(), query_grid());
    let q = |x: f64| (2.0 * x - 0.5).tanh();
    let moment = |m: usize| 1.0 / (m + 1) as f64 + 1.0 / (m + 2) as f64 - 1.0 / (m + 3) as f64;
    (0..n)
        .map(|i| {
            let mut rng = stream(9, Purpose::Synthetic, offset + i as u64);
            let a: [f64; 4] = [
                rng.gen_range(1.0..2.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ];
            let u = sensors.iter().map(|&y| a.iter().rev().fold(0.0, |acc, am| acc * y + am)).collect();
            let integral: f64 = a.iter().enumerate().map(|(m, am)| am * moment(m)).sum();
            let targets = queries.iter().map(|&x| q(x) * integral).collect();
            OperatorSample::new(
                PointSet::from_scalars(sensors.clone()),
                u,
                PointSet::from_scalars(queries.clone()),
                targets,
            )
            .unwrap()
        })
        .collect()
}

/// Linear-coefficient BelNet of rank one.
pub fn synthetic_spec() -> BelNetSpec {
    BelNetSpec {
        output_scale: 1.0,
        n_sensors: SENSORS,
        sensor_dim: 1,
        projection_width: 16,
        rank: 1,
        projection_activation: Activation::Tanh,
        coefficient_map: CoefficientMap::Linear,
        construction: MlpSpec::new(vec![1, 8, 1], Activation::Tanh),
        sensor_map: None,
    }
}
