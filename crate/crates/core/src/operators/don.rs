//! DeepONet baseline: inner product of a branch code of the sensor values and
//! a trunk code of the query point. Sensor locations are not an input; the
//! model assumes every sample is observed at the same sensors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::belnet::{burgers_query_map, contract_with_basis, is_unit_scale, unit_scale, unit_square_map};
use super::mlp::{Activation, Mlp, MlpSpec};
use super::model::{BatchOutput, OperatorModel};
use super::sample::OperatorSample;
use crate::autodiff::{DenseArray, NodeId, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonSpec {
    /// `[N, ..., K]`
    pub branch: MlpSpec,
    /// `[d, ..., K]`
    pub trunk: MlpSpec,
    /// Fixed factor on every prediction.
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit_scale")]
    pub output_scale: f64,
}

impl DonSpec {
    pub fn n_sensors(&self) -> usize {
        self.branch.input_width()
    }

    pub fn query_dim(&self) -> usize {
        self.trunk.input_width()
    }

    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.branch.output_width() != self.trunk.output_width() {
            return Err(Error::config(format!(
                "branch width {} and trunk width {} differ",
                self.branch.output_width(),
                self.trunk.output_width()
            )));
        }
        if !(self.output_scale.is_finite() && self.output_scale != 0.0) {
            return Err(Error::config(format!("output scale {} must be finite and non-zero", self.output_scale)));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.branch.parameter_count() + self.trunk.parameter_count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Don {
    spec: DonSpec,
    branch: Mlp,
    trunk: Mlp,
}

impl Don {
    pub fn init(spec: DonSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch = Mlp::init(spec.branch.clone(), &mut rng)?;
        let trunk = Mlp::init(spec.trunk.clone(), &mut rng)?;
        Ok(Don { spec, branch, trunk })
    }

    pub fn from_parts(branch: Mlp, trunk: Mlp) -> Result<Self> {
        let spec = DonSpec {
            output_scale: 1.0,
            branch: branch.spec().clone(),
            trunk: trunk.spec().clone(),
        };
        spec.validate()?;
        Ok(Don { spec, branch, trunk })
    }

    pub fn spec(&self) -> &DonSpec {
        &self.spec
    }

    pub fn branch(&self) -> &Mlp {
        &self.branch
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }
}

impl OperatorModel for Don {
    fn blocks(&self) -> Vec<(String, &DenseArray)> {
        let mut out = Vec::new();
        self.branch.blocks("branch", &mut out);
        self.trunk.blocks("trunk", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut DenseArray> {
        let mut out = Vec::new();
        self.branch.blocks_mut(&mut out);
        self.trunk.blocks_mut(&mut out);
        out
    }

    fn n_sensors(&self) -> usize {
        self.spec.n_sensors()
    }

    fn query_dim(&self) -> usize {
        self.spec.query_dim()
    }

    fn check_sample(&self, sample: &OperatorSample) -> Result<()> {
        if sample.u.len() != self.n_sensors() {
            return Err(Error::contract(format!(
                "sample has {} sensor values, branch net expects {}",
                sample.u.len(),
                self.n_sensors()
            )));
        }
        if sample.queries.dim() != self.query_dim() {
            return Err(Error::contract(format!(
                "queries are {}-dimensional, trunk net expects {}",
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
        let n = self.n_sensors();
        let b = batch.len();
        let mut values = vec![0.0; n * b];
        for (j, s) in batch.iter().enumerate() {
            for (i, &v) in s.u.iter().enumerate() {
                values[i * b + j] = v;
            }
        }
        let u = tape.constant(DenseArray::from_matrix(n, b, values)?);
        let split = self.branch.block_count();
        let code = self.branch.forward(tape, &params[..split], u)?;
        contract_with_basis(tape, code, self.spec.output_scale, &self.trunk, &params[split..], batch)
    }
}

/// DeepONet for the Burgers benchmark at roughly the same parameter budget as
/// the BelNet configuration: branch `[25, 240, 240, 40]`, trunk
/// `[2, 100, 100, 100, 40]`, tanh hidden layers, biased linear outputs.
pub fn burgers_don_spec() -> DonSpec {
    DonSpec {
        output_scale: 1.0,
        branch: MlpSpec::new(vec![25, 240, 240, 40], Activation::Tanh).with_output(Activation::Identity, true),
        trunk: MlpSpec::new(vec![2, 100, 100, 100, 40], Activation::Tanh)
            .with_output(Activation::Identity, true)
            .with_input_map(burgers_query_map()),
    }
}

/// DeepONet for the elliptic benchmark: branch `[100, 400, 400, 100]`, trunk
/// `[2, 100, 100, 100]`, ReLU hidden layers.
pub fn elliptic_don_spec() -> DonSpec {
    DonSpec {
        output_scale: 0.01,
        branch: MlpSpec::new(vec![100, 400, 400, 100], Activation::Relu).with_output(Activation::Identity, true),
        trunk: MlpSpec::new(vec![2, 100, 100, 100], Activation::Relu)
            .with_output(Activation::Identity, true)
            .with_input_map(unit_square_map()),
    }
}
