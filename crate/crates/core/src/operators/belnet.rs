//! BelNet: trainable projection basis for the input function and trainable
//! construction basis for the output function.
//!
//! For a query `x` the prediction is
//!
//! ```text
//! G(u)(x) = sum_k  a_x(construction_k(x)) * c_k
//! c       = a_u( [ u_hat . W2_k a_y(W1_k y + b1_k) ]_k )
//! ```
//!
//! where `y` are the flattened sensor locations of the sample and `u_hat` the
//! input values at those sensors. The projection rows are rebuilt from each
//! sample's own sensors, so samples with different sensor locations share a
//! single trained model.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{uniform_init, Activation, CoordinateMap, Mlp, MlpSpec};
use super::model::{shares_queries, BatchOutput, OperatorModel};
use super::sample::OperatorSample;
use crate::autodiff::{DenseArray, NodeId, Tape};
use crate::error::{Error, Result};

/// How the K projected coefficients are turned into the weights of the
/// construction basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "activation", rename_all = "snake_case")]
pub enum CoefficientMap {
    /// Entrywise activation `a_u`.
    Elementwise(Activation),
    /// No activation; the model is linear in `u_hat`.
    Linear,
    /// Trainable affine `K x K` layer followed by an activation.
    Mixing(Activation),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BelNetSpec {
    /// Sensors per sample (N).
    pub n_sensors: usize,
    /// Coordinates per sensor location.
    pub sensor_dim: usize,
    /// Hidden width of every projection net (N_1).
    pub projection_width: usize,
    /// Number of basis functions (K).
    pub rank: usize,
    /// Hidden activation of the projection nets (a_y).
    pub projection_activation: Activation,
    pub coefficient_map: CoefficientMap,
    /// Construction net from query coordinates to K outputs; its hidden
    /// activation plays the role of a_x.
    pub construction: MlpSpec,
    /// Fixed rescaling of each sensor location before the projection nets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_map: Option<CoordinateMap>,
    /// Fixed factor on every prediction, the unit of the output function.
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit_scale")]
    pub output_scale: f64,
}

pub(crate) fn unit_scale() -> f64 {
    1.0
}

pub(crate) fn is_unit_scale(v: &f64) -> bool {
    *v == 1.0
}

impl BelNetSpec {
    pub fn query_dim(&self) -> usize {
        self.construction.input_width()
    }

    pub fn validate(&self) -> Result<()> {
        self.construction.validate()?;
        if self.n_sensors == 0 || self.sensor_dim == 0 || self.projection_width == 0 || self.rank == 0 {
            return Err(Error::config("belnet sizes must be positive"));
        }
        if self.construction.output_width() != self.rank {
            return Err(Error::config(format!(
                "construction net outputs {} values but rank is {}",
                self.construction.output_width(),
                self.rank
            )));
        }
        if let Some(map) = &self.sensor_map {
            map.validate(self.sensor_dim)?;
        }
        if !(self.output_scale.is_finite() && self.output_scale != 0.0) {
            return Err(Error::config(format!("output scale {} must be finite and non-zero", self.output_scale)));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let input = self.n_sensors * self.sensor_dim;
        let per_net = self.projection_width * input + self.projection_width + self.n_sensors * self.projection_width;
        let mixing = match self.coefficient_map {
            CoefficientMap::Mixing(_) => self.rank * self.rank + self.rank,
            _ => 0,
        };
        self.rank * per_net + mixing + self.construction.parameter_count()
    }
}

/// One of the K projection nets: `W2 a_y(W1 y + b1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionNet {
    pub w1: DenseArray,
    pub b1: DenseArray,
    pub w2: DenseArray,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BelNet {
    spec: BelNetSpec,
    projection: Vec<ProjectionNet>,
    mixing: Option<MixingLayer>,
    construction: Mlp,
}

/// The trainable layer `a(M c + b)` used in place of an entrywise `a_u`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingLayer {
    pub weight: DenseArray,
    pub bias: DenseArray,
}

impl BelNet {
    pub fn init(spec: BelNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = spec.n_sensors * spec.sensor_dim;
        let projection = (0..spec.rank)
            .map(|_| ProjectionNet {
                w1: uniform_init(&[spec.projection_width, input], input, &mut rng),
                b1: uniform_init(&[spec.projection_width, 1], input, &mut rng),
                w2: uniform_init(&[spec.n_sensors, spec.projection_width], spec.projection_width, &mut rng),
            })
            .collect();
        let mixing = match spec.coefficient_map {
            CoefficientMap::Mixing(_) => Some(MixingLayer {
                weight: uniform_init(&[spec.rank, spec.rank], spec.rank, &mut rng),
                bias: DenseArray::zeros(&[spec.rank, 1]),
            }),
            _ => None,
        };
        let construction = Mlp::init(spec.construction.clone(), &mut rng)?;
        Ok(BelNet {
            spec,
            projection,
            mixing,
            construction,
        })
    }

    pub fn spec(&self) -> &BelNetSpec {
        &self.spec
    }

    pub fn projection_nets(&self) -> &[ProjectionNet] {
        &self.projection
    }

    pub fn projection_nets_mut(&mut self) -> &mut [ProjectionNet] {
        &mut self.projection
    }

    pub fn mixing(&self) -> Option<&MixingLayer> {
        self.mixing.as_ref()
    }

    pub fn construction(&self) -> &Mlp {
        &self.construction
    }

    pub fn construction_mut(&mut self) -> &mut Mlp {
        &mut self.construction
    }

    /// K x B coefficient matrix for the batch, after the coefficient map.
    fn coefficients(&self, tape: &mut Tape, params: &[NodeId], batch: &[&OperatorSample]) -> Result<NodeId> {
        let n = self.spec.n_sensors;
        let width = n * self.spec.sensor_dim;
        let b = batch.len();
        let mut locations = vec![0.0; width * b];
        let mut values = vec![0.0; n * b];
        for (j, s) in batch.iter().enumerate() {
            for (i, &v) in s.sensors.flattened().iter().enumerate() {
                let d = i % self.spec.sensor_dim;
                locations[i * b + j] = self.spec.sensor_map.as_ref().map_or(v, |m| m.apply(d, v));
            }
            for (i, &v) in s.u.iter().enumerate() {
                values[i * b + j] = v;
            }
        }
        let y = tape.constant(DenseArray::from_matrix(width, b, locations)?);
        let u = tape.constant(DenseArray::from_matrix(n, b, values)?);

        let mut rows = Vec::with_capacity(self.spec.rank);
        for k in 0..self.spec.rank {
            let (w1, b1, w2) = (params[3 * k], params[3 * k + 1], params[3 * k + 2]);
            let h = tape.matmul(w1, y)?;
            let h = tape.add_bias(h, b1)?;
            let h = self.spec.projection_activation.on_tape(tape, h);
            let r = tape.matmul(w2, h)?;
            let weighted = tape.mul(u, r)?;
            rows.push(tape.sum_rows(weighted)?);
        }
        let c = tape.concat_rows(&rows)?;
        Ok(match self.spec.coefficient_map {
            CoefficientMap::Elementwise(a) => a.on_tape(tape, c),
            CoefficientMap::Linear => c,
            CoefficientMap::Mixing(a) => {
                let mixed = tape.matmul(params[3 * self.spec.rank], c)?;
                let mixed = tape.add_bias(mixed, params[3 * self.spec.rank + 1])?;
                a.on_tape(tape, mixed)
            }
        })
    }
}

/// Contracts a K x B coefficient matrix, times `scale`, with the query-side
/// basis evaluated at each sample's queries.
pub(crate) fn contract_with_basis(
    tape: &mut Tape,
    coefficients: NodeId,
    scale: f64,
    basis: &Mlp,
    basis_params: &[NodeId],
    batch: &[&OperatorSample],
) -> Result<BatchOutput> {
    let coefficients = if scale == 1.0 { coefficients } else { tape.scale(coefficients, scale) };
    let coef_t = tape.transpose(coefficients)?;
    if shares_queries(batch) {
        let x = tape.constant(batch[0].queries.as_mapped_columns(basis.spec().input_map.as_ref()));
        let phi = basis.forward(tape, basis_params, x)?;
        return Ok(BatchOutput::Shared(tape.matmul(coef_t, phi)?));
    }
    let mut rows = Vec::with_capacity(batch.len());
    for (j, s) in batch.iter().enumerate() {
        let x = tape.constant(s.queries.as_mapped_columns(basis.spec().input_map.as_ref()));
        let phi = basis.forward(tape, basis_params, x)?;
        let c = tape.slice_cols(coefficients, j, j + 1)?;
        let c_t = tape.transpose(c)?;
        rows.push(tape.matmul(c_t, phi)?);
    }
    Ok(BatchOutput::PerSample(rows))
}

impl OperatorModel for BelNet {
    fn blocks(&self) -> Vec<(String, &DenseArray)> {
        let mut out = Vec::new();
        for (k, p) in self.projection.iter().enumerate() {
            out.push((format!("projection{k}.w1"), &p.w1));
            out.push((format!("projection{k}.b1"), &p.b1));
            out.push((format!("projection{k}.w2"), &p.w2));
        }
        if let Some(m) = &self.mixing {
            out.push(("mixing.weight".to_string(), &m.weight));
            out.push(("mixing.bias".to_string(), &m.bias));
        }
        self.construction.blocks("construction", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut DenseArray> {
        let mut out = Vec::new();
        for p in self.projection.iter_mut() {
            out.push(&mut p.w1);
            out.push(&mut p.b1);
            out.push(&mut p.w2);
        }
        if let Some(m) = &mut self.mixing {
            out.push(&mut m.weight);
            out.push(&mut m.bias);
        }
        self.construction.blocks_mut(&mut out);
        out
    }

    fn n_sensors(&self) -> usize {
        self.spec.n_sensors
    }

    fn query_dim(&self) -> usize {
        self.spec.query_dim()
    }

    fn check_sample(&self, sample: &OperatorSample) -> Result<()> {
        if sample.sensors.len() != self.spec.n_sensors {
            return Err(Error::contract(format!(
                "sample has {} sensors, model expects {}",
                sample.sensors.len(),
                self.spec.n_sensors
            )));
        }
        if sample.sensors.dim() != self.spec.sensor_dim {
            return Err(Error::contract(format!(
                "sensor locations are {}-dimensional, model expects {}",
                sample.sensors.dim(),
                self.spec.sensor_dim
            )));
        }
        if sample.queries.dim() != self.query_dim() {
            return Err(Error::contract(format!(
                "queries are {}-dimensional, construction net expects {}",
                sample.queries.dim(),
                self.query_dim()
            )));
        }
        Ok(())
    }

    fn forward_on_tape(&self, tape: &mut Tape, params: &[NodeId], batch: &[&OperatorSample]) -> Result<BatchOutput> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        for s in batch {
            self.check_sample(s)?;
        }
        let coefficients = self.coefficients(tape, params, batch)?;
        let offset = 3 * self.spec.rank + if self.mixing.is_some() { 2 } else { 0 };
        contract_with_basis(
            tape,
            coefficients,
            self.spec.output_scale,
            &self.construction,
            &params[offset..],
            batch,
        )
    }
}

/// BelNet sized as in the viscous Burgers experiment: 25 sensors on a line,
/// ten `[25, 100, 25]` tanh projection nets, a ReLU-activated 10 x 10 mixing
/// layer and a `[2, 100, 100, 100, 10]` tanh construction net over `(x, t)`.
/// `(x, t)` in `[0, 2 pi] x [0, 0.3]` onto `[-1, 1]^2`.
pub fn burgers_query_map() -> CoordinateMap {
    CoordinateMap { offset: vec![PI, 0.0], scale: vec![1.0 / PI, 1.0] }
}

/// The unit square onto `[-1, 1]^2`.
pub fn unit_square_map() -> CoordinateMap {
    CoordinateMap::onto_unit_box(&[0.0, 0.0], &[1.0, 1.0])
}

pub fn burgers_belnet_spec() -> BelNetSpec {
    BelNetSpec {
        output_scale: 1.0,
        n_sensors: 25,
        sensor_dim: 1,
        projection_width: 100,
        rank: 10,
        projection_activation: Activation::Tanh,
        coefficient_map: CoefficientMap::Mixing(Activation::Relu),
        construction: MlpSpec::new(vec![2, 100, 100, 100, 10], Activation::Tanh)
            .with_input_map(burgers_query_map()),
        sensor_map: Some(CoordinateMap::onto_unit_box(&[0.0], &[2.0 * PI])),
    }
}

/// BelNet sized as in the multiscale elliptic experiment: 100 planar
/// sensors, ten `[200, 100, 100]` ReLU projection nets, no coefficient
/// activation and a `[2, 100, 10]` ReLU construction net.
pub fn elliptic_belnet_spec() -> BelNetSpec {
    BelNetSpec {
        output_scale: 0.01,
        n_sensors: 100,
        sensor_dim: 2,
        projection_width: 100,
        rank: 10,
        projection_activation: Activation::Relu,
        coefficient_map: CoefficientMap::Linear,
        construction: MlpSpec::new(vec![2, 100, 10], Activation::Relu).with_input_map(unit_square_map()),
        sensor_map: Some(unit_square_map()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::sample::PointSet;
    use rand::{Rng, SeedableRng};

    fn sample_1d(sensors: Vec<f64>, u: Vec<f64>, queries: Vec<f64>) -> OperatorSample {
        OperatorSample::unlabelled(PointSet::from_scalars(sensors), u, PointSet::from_scalars(queries)).unwrap()
    }

    #[test]
    fn burgers_configuration_parameter_count() {
        let spec = burgers_belnet_spec();
        // Shape sum by hand: 10 * (100*25 + 100 + 25*100) + (10*10 + 10)
        // + (2*100 + 100) + (100*100 + 100) + (100*100 + 100) + 100*10.
        let by_hand = 10 * (2_500 + 100 + 2_500) + 110 + 300 + 10_100 + 10_100 + 1_000;
        assert_eq!(spec.parameter_count(), by_hand);
        let net = BelNet::init(spec, 1).unwrap();
        assert_eq!(net.count_parameters(), by_hand);
        // Table budget is ~102K; the stated shapes give 72.61K.
        let ratio = by_hand as f64 / 102_000.0;
        assert!((ratio - 1.0).abs() <= 0.30, "ratio {ratio}");
    }

    #[test]
    fn burgers_configuration_gives_one_value_per_query() {
        let net = BelNet::init(burgers_belnet_spec(), 3).unwrap();
        let sensors = PointSet::from_scalars((0..25).map(|i| i as f64 * 0.25).collect());
        let queries = PointSet::from_points(2, &[vec![0.1, 0.0], vec![1.0, 0.3], vec![3.0, 0.2]]).unwrap();
        let s = OperatorSample::unlabelled(sensors, vec![0.5; 25], queries).unwrap();
        let out = net.predict(&s).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn zero_construction_net_predicts_zero() {
        let spec = BelNetSpec {
            output_scale: 1.0,
            n_sensors: 4,
            sensor_dim: 1,
            projection_width: 3,
            rank: 2,
            projection_activation: Activation::Tanh,
            coefficient_map: CoefficientMap::Elementwise(Activation::Tanh),
            construction: MlpSpec::new(vec![1, 2], Activation::Tanh).with_output(Activation::Tanh, true),
            sensor_map: None,
        };
        let mut net = BelNet::init(spec.clone(), 5).unwrap();
        net.construction = Mlp::zeros(spec.construction).unwrap();
        let s = sample_1d(vec![0.1, 0.4, 0.5, 0.9], vec![3.0, -1.0, 2.0, 7.0], vec![-2.0, 0.0, 5.0]);
        assert_eq!(net.predict(&s).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    /// Direct transcription of the single-layer formula with scalar loops.
    fn straight_line(net: &BelNet, y: &[f64], u: &[f64], x: f64) -> f64 {
        let spec = net.spec();
        let mut total = 0.0;
        let q = net.construction.weight(0);
        let bx = net.construction.bias(0).unwrap();
        for k in 0..spec.rank {
            let p = &net.projection[k];
            let mut h = vec![0.0; spec.projection_width];
            for (a, h_a) in h.iter_mut().enumerate() {
                let mut acc = p.b1.data()[a];
                for (j, yj) in y.iter().enumerate() {
                    acc += p.w1.get(a, j) * yj;
                }
                *h_a = acc.tanh();
            }
            let mut inner = 0.0;
            for (i, ui) in u.iter().enumerate() {
                let mut row = 0.0;
                for (a, h_a) in h.iter().enumerate() {
                    row += p.w2.get(i, a) * h_a;
                }
                inner += ui * row;
            }
            let basis = (q.get(k, 0) * x + bx.data()[k]).tanh();
            total += basis * inner.tanh();
        }
        total
    }

    #[test]
    fn matches_straight_line_formula() {
        let spec = BelNetSpec {
            output_scale: 1.0,
            n_sensors: 3,
            sensor_dim: 1,
            projection_width: 2,
            rank: 2,
            projection_activation: Activation::Tanh,
            coefficient_map: CoefficientMap::Elementwise(Activation::Tanh),
            construction: MlpSpec::new(vec![1, 2], Activation::Tanh).with_output(Activation::Tanh, true),
            sensor_map: None,
        };
        let net = BelNet::init(spec, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = sample_1d(y.clone(), u.clone(), xs.clone());
            let got = net.predict(&s).unwrap();
            for (g, &x) in got.iter().zip(&xs) {
                let want = straight_line(&net, &y, &u, x);
                assert!((g - want).abs() < 1e-12, "{g} vs {want}");
            }
        }
    }

    #[test]
    fn different_sensor_sets_evaluate_without_reconfiguration() {
        let net = BelNet::init(burgers_belnet_spec(), 9).unwrap();
        let queries = PointSet::from_points(2, &[vec![0.5, 0.1]]).unwrap();
        let a = OperatorSample::unlabelled(
            PointSet::from_scalars((0..25).map(|i| i as f64 * 0.2).collect()),
            vec![1.0; 25],
            queries.clone(),
        )
        .unwrap();
        let b = OperatorSample::unlabelled(
            PointSet::from_scalars((0..25).map(|i| i as f64 * 0.2 + 0.05).collect()),
            vec![1.0; 25],
            queries,
        )
        .unwrap();
        let out = net.predict_batch(&[&a, &b]).unwrap();
        assert_eq!(out.len(), 2);
        assert_ne!(out[0], out[1]);
        // Batched and one-at-a-time evaluation agree.
        assert!((out[0][0] - net.predict(&a).unwrap()[0]).abs() < 1e-14);
    }

    #[test]
    fn shared_and_per_sample_query_paths_agree() {
        let net = BelNet::init(burgers_belnet_spec(), 4).unwrap();
        let sensors = PointSet::from_scalars((0..25).map(|i| i as f64 * 0.2).collect());
        let q1 = PointSet::from_points(2, &[vec![0.5, 0.1], vec![1.5, 0.2]]).unwrap();
        let q2 = PointSet::from_points(2, &[vec![0.5, 0.1], vec![1.5, 0.2], vec![2.0, 0.0]]).unwrap();
        let a = OperatorSample::unlabelled(sensors.clone(), vec![0.3; 25], q1.clone()).unwrap();
        let b = OperatorSample::unlabelled(sensors.clone(), vec![-0.7; 25], q1).unwrap();
        let c = OperatorSample::unlabelled(sensors, vec![-0.7; 25], q2).unwrap();
        let shared = net.predict_batch(&[&a, &b]).unwrap();
        let mixed = net.predict_batch(&[&a, &c]).unwrap();
        assert!((shared[0][0] - mixed[0][0]).abs() < 1e-14);
        assert!((shared[1][1] - mixed[1][1]).abs() < 1e-14);
        assert_eq!(mixed[1].len(), 3);
    }

    #[test]
    fn sensor_count_mismatch_is_a_contract_error() {
        let net = BelNet::init(burgers_belnet_spec(), 0).unwrap();
        let s = OperatorSample::unlabelled(
            PointSet::from_scalars(vec![0.0; 24]),
            vec![0.0; 24],
            PointSet::from_points(2, &[vec![0.0, 0.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(net.predict(&s), Err(Error::Contract(_))));
    }

    #[test]
    fn elliptic_configuration_parameter_count() {
        let spec = elliptic_belnet_spec();
        let by_hand = 10 * (100 * 200 + 100 + 100 * 100) + (2 * 100 + 100) + 100 * 10;
        assert_eq!(spec.parameter_count(), by_hand);
    }

    #[test]
    fn coordinate_maps_equal_premapped_inputs() {
        let plain = BelNetSpec {
            output_scale: 1.0,
            n_sensors: 3,
            sensor_dim: 1,
            projection_width: 4,
            rank: 2,
            projection_activation: Activation::Tanh,
            coefficient_map: CoefficientMap::Mixing(Activation::Relu),
            construction: MlpSpec::new(vec![1, 5, 2], Activation::Tanh),
            sensor_map: None,
        };
        let map = CoordinateMap::onto_unit_box(&[0.0], &[4.0]);
        let mapped_spec = BelNetSpec {
            output_scale: 1.0,
            sensor_map: Some(map.clone()),
            construction: plain.construction.clone().with_input_map(map.clone()),
            ..plain.clone()
        };
        let a = BelNet::init(plain, 9).unwrap();
        let b = BelNet::init(mapped_spec, 9).unwrap();
        let raw = sample_1d(vec![0.5, 2.0, 3.5], vec![1.0, -0.5, 2.0], vec![0.0, 1.0, 4.0]);
        let pre = sample_1d(vec![-0.75, 0.0, 0.75], vec![1.0, -0.5, 2.0], vec![-1.0, -0.5, 1.0]);
        assert_eq!(b.predict(&raw).unwrap(), a.predict(&pre).unwrap());
    }
}
