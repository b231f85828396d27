use serde::{Deserialize, Serialize};

use super::belnet::{BelNet, BelNetSpec};
use super::don::{Don, DonSpec};
use super::sample::OperatorSample;
use crate::autodiff::{DenseArray, NodeId, Tape};
use crate::error::{Error, Result};

/// Predictions for a batch, as recorded on a tape.
#[derive(Clone, Debug)]
pub enum BatchOutput {
    /// All samples share one query set: a `batch x queries` matrix.
    Shared(NodeId),
    /// One `1 x queries_b` row per sample.
    PerSample(Vec<NodeId>),
}

impl BatchOutput {
    pub fn values(&self, tape: &Tape) -> Vec<Vec<f64>> {
        match self {
            BatchOutput::Shared(id) => {
                let v = tape.value(*id);
                let (rows, cols) = v.dims().expect("predictions are a matrix");
                (0..rows)
                    .map(|r| v.data()[r * cols..(r + 1) * cols].to_vec())
                    .collect()
            }
            BatchOutput::PerSample(ids) => ids.iter().map(|id| tape.value(*id).data().to_vec()).collect(),
        }
    }
}

/// True when every sample in the batch is queried at the same points, so the
/// query-side network only needs to run once.
pub(crate) fn shares_queries(batch: &[&OperatorSample]) -> bool {
    match batch.split_first() {
        Some((first, rest)) => rest.iter().all(|s| s.queries == first.queries),
        None => true,
    }
}

/// Common surface of the trainable operator networks.
pub trait OperatorModel: Send + Sync {
    /// Named parameter blocks in a fixed order.
    fn blocks(&self) -> Vec<(String, &DenseArray)>;

    /// Same blocks and order as [`OperatorModel::blocks`].
    fn blocks_mut(&mut self) -> Vec<&mut DenseArray>;

    fn n_sensors(&self) -> usize;

    fn query_dim(&self) -> usize;

    /// Contract checks for one sample against this architecture.
    fn check_sample(&self, sample: &OperatorSample) -> Result<()>;

    /// Records the forward pass of `batch` on `tape`. `params` are the nodes
    /// returned by [`OperatorModel::bind`].
    fn forward_on_tape(&self, tape: &mut Tape, params: &[NodeId], batch: &[&OperatorSample]) -> Result<BatchOutput>;

    /// Puts every parameter block on the tape, as a leaf when `tracked`.
    fn bind(&self, tape: &mut Tape, tracked: bool) -> Vec<NodeId> {
        self.blocks()
            .into_iter()
            .map(|(_, b)| {
                if tracked {
                    tape.leaf(b.clone())
                } else {
                    tape.constant(b.clone())
                }
            })
            .collect()
    }

    fn count_parameters(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn predict_batch(&self, batch: &[&OperatorSample]) -> Result<Vec<Vec<f64>>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let out = self.forward_on_tape(&mut tape, &params, batch)?;
        let values = out.values(&tape);
        for (i, v) in values.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric(format!("non-finite prediction for sample {i} of the batch")));
            }
        }
        Ok(values)
    }

    fn predict(&self, sample: &OperatorSample) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[sample])?.remove(0))
    }
}

/// Exact number of scalar trainables.
pub fn count_parameters(model: &dyn OperatorModel) -> usize {
    model.count_parameters()
}

/// Architecture descriptor stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    #[serde(rename = "belnet")]
    BelNet(BelNetSpec),
    Don(DonSpec),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::BelNet(s) => s.validate(),
            ModelSpec::Don(s) => s.validate(),
        }
    }

    pub fn n_sensors(&self) -> usize {
        match self {
            ModelSpec::BelNet(s) => s.n_sensors,
            ModelSpec::Don(s) => s.n_sensors(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            ModelSpec::BelNet(s) => s.parameter_count(),
            ModelSpec::Don(s) => s.parameter_count(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::BelNet(_) => "belnet",
            ModelSpec::Don(_) => "don",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    BelNet(BelNet),
    Don(Don),
}

impl Model {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::BelNet(s) => Model::BelNet(BelNet::init(s.clone(), seed)?),
            ModelSpec::Don(s) => Model::Don(Don::init(s.clone(), seed)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::BelNet(m) => ModelSpec::BelNet(m.spec().clone()),
            Model::Don(m) => ModelSpec::Don(m.spec().clone()),
        }
    }

    /// All parameters concatenated in block order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .flat_map(|(_, b)| b.data().iter().copied())
            .collect()
    }

    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        let mut model = Model::init(spec, 0)?;
        let expected = model.count_parameters();
        if flat.len() != expected {
            return Err(Error::contract(format!(
                "architecture needs {expected} parameters, checkpoint holds {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for block in model.blocks_mut() {
            let n = block.len();
            block.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }

    fn inner(&self) -> &dyn OperatorModel {
        match self {
            Model::BelNet(m) => m,
            Model::Don(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn OperatorModel {
        match self {
            Model::BelNet(m) => m,
            Model::Don(m) => m,
        }
    }
}

impl OperatorModel for Model {
    fn blocks(&self) -> Vec<(String, &DenseArray)> {
        self.inner().blocks()
    }

    fn blocks_mut(&mut self) -> Vec<&mut DenseArray> {
        self.inner_mut().blocks_mut()
    }

    fn n_sensors(&self) -> usize {
        self.inner().n_sensors()
    }

    fn query_dim(&self) -> usize {
        self.inner().query_dim()
    }

    fn check_sample(&self, sample: &OperatorSample) -> Result<()> {
        self.inner().check_sample(sample)
    }

    fn forward_on_tape(&self, tape: &mut Tape, params: &[NodeId], batch: &[&OperatorSample]) -> Result<BatchOutput> {
        self.inner().forward_on_tape(tape, params, batch)
    }
}
