use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DenseArray, NodeId, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn on_tape(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// Layer widths `[in, h1, ..., out]` and activation layout of a fully
/// connected network. Hidden layers always carry a bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub output_bias: bool,
    /// Fixed rescaling of coordinate inputs, applied before the first layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_map: Option<CoordinateMap>,
}

/// Fixed per-coordinate rescaling `(x - offset) * scale`. Not trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl CoordinateMap {
    /// Maps the box `[lo, hi]` onto `[-1, 1]` in every coordinate.
    pub fn onto_unit_box(lo: &[f64], hi: &[f64]) -> Self {
        CoordinateMap {
            offset: lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            scale: lo.iter().zip(hi).map(|(a, b)| 2.0 / (b - a)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.offset.len() != dim || self.scale.len() != dim {
            return Err(Error::config(format!(
                "coordinate map has {} offsets and {} scales for {dim} coordinates",
                self.offset.len(),
                self.scale.len()
            )));
        }
        if self.scale.iter().chain(&self.offset).any(|v| !v.is_finite()) {
            return Err(Error::config("coordinate map entries must be finite"));
        }
        Ok(())
    }

    pub fn apply(&self, coordinate: usize, value: f64) -> f64 {
        (value - self.offset[coordinate]) * self.scale[coordinate]
    }
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden_activation: Activation) -> Self {
        MlpSpec {
            widths,
            hidden_activation,
            output_activation: Activation::Identity,
            output_bias: false,
            input_map: None,
        }
    }

    pub fn with_input_map(mut self, map: CoordinateMap) -> Self {
        self.input_map = Some(map);
        self
    }

    pub fn with_output(mut self, activation: Activation, bias: bool) -> Self {
        self.output_activation = activation;
        self.output_bias = bias;
        self
    }

    pub fn input_width(&self) -> usize {
        self.widths.first().copied().unwrap_or(0)
    }

    pub fn output_width(&self) -> usize {
        self.widths.last().copied().unwrap_or(0)
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn has_bias(&self, layer: usize) -> bool {
        layer + 1 < self.layer_count() || self.output_bias
    }

    pub fn parameter_count(&self) -> usize {
        (0..self.layer_count())
            .map(|l| {
                let (i, o) = (self.widths[l], self.widths[l + 1]);
                i * o + if self.has_bias(l) { o } else { 0 }
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::config(format!(
                "network widths {:?} need at least two positive entries",
                self.widths
            )));
        }
        if let Some(map) = &self.input_map {
            map.validate(self.input_width())?;
        }
        Ok(())
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialisation.
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> DenseArray {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    DenseArray::new(shape.to_vec(), data).expect("shape and data agree")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<DenseArray>,
    biases: Vec<Option<DenseArray>>,
}

impl Mlp {
    pub fn init(spec: MlpSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..spec.layer_count() {
            let (i, o) = (spec.widths[l], spec.widths[l + 1]);
            weights.push(uniform_init(&[o, i], i, rng));
            biases.push(spec.has_bias(l).then(|| uniform_init(&[o, 1], i, rng)));
        }
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    /// Network with every weight and bias set to zero.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let weights = (0..spec.layer_count())
            .map(|l| DenseArray::zeros(&[spec.widths[l + 1], spec.widths[l]]))
            .collect();
        let biases = (0..spec.layer_count())
            .map(|l| spec.has_bias(l).then(|| DenseArray::zeros(&[spec.widths[l + 1], 1])))
            .collect();
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weight(&self, layer: usize) -> &DenseArray {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> Option<&DenseArray> {
        self.biases[layer].as_ref()
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut DenseArray {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> Option<&mut DenseArray> {
        self.biases[layer].as_mut()
    }

    pub(crate) fn blocks<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray)>) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("{prefix}.layer{l}.weight"), w));
            if let Some(b) = b {
                out.push((format!("{prefix}.layer{l}.bias"), b));
            }
        }
    }

    pub(crate) fn blocks_mut<'a>(&'a mut self, out: &mut Vec<&'a mut DenseArray>) {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            if let Some(b) = b {
                out.push(b);
            }
        }
    }

    pub(crate) fn block_count(&self) -> usize {
        self.weights.len() + self.biases.iter().filter(|b| b.is_some()).count()
    }

    /// Applies the network to the columns of `input` (`in x n`), using the
    /// tape nodes `params` bound in [`Mlp::blocks`] order.
    pub(crate) fn forward(&self, tape: &mut Tape, params: &[NodeId], input: NodeId) -> Result<NodeId> {
        let mut cursor = 0;
        let mut x = input;
        let last = self.spec.layer_count() - 1;
        for l in 0..self.spec.layer_count() {
            x = tape.matmul(params[cursor], x)?;
            cursor += 1;
            if self.biases[l].is_some() {
                x = tape.add_bias(x, params[cursor])?;
                cursor += 1;
            }
            let act = if l == last {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            x = act.on_tape(tape, x);
        }
        Ok(x)
    }
}
