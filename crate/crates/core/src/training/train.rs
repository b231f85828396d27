use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::sse_on_tape;
use super::metrics::{relative_l2_error, RelativeErrors};
use crate::autodiff::{DenseArray, Tape};
use crate::data::{stream, DatasetMeta, Purpose, SamplingMode, TestSet, TrainSet};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::operators::{
    burgers_belnet_spec, burgers_don_spec, elliptic_belnet_spec, elliptic_don_spec, Model, ModelSpec, OperatorModel,
    OperatorSample,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiply the rate by `factor` every `every` epochs.
    StepDecay { factor: f64, every: usize },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { factor, every } => base * factor.powi((epoch / every.max(1)) as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Samples per minibatch; every query point of a sample is used.
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds both the initial parameters and the shuffling.
    pub seed: u64,
    /// Each minibatch is split into this many contiguous chunks whose
    /// gradients are computed independently and summed in order. The result
    /// depends on this number but not on the execution policy.
    #[serde(default = "one")]
    pub grad_chunks: usize,
}

fn one() -> usize {
    1
}

impl TrainConfig {
    pub fn new(model: ModelSpec, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            model,
            optimizer: AdamConfig::default(),
            schedule: LrSchedule::Constant,
            batch_size: 20,
            epochs,
            seed,
            grad_chunks: 1,
        }
    }

    /// Defaults for `problem` in {burgers, elliptic} and `model` in
    /// {belnet, don}.
    pub fn preset(problem: &str, model: &str) -> Result<Self> {
        let (spec, epochs) = match (problem, model) {
            ("burgers", "belnet") => (ModelSpec::BelNet(burgers_belnet_spec()), 9000),
            ("burgers", "don") => (ModelSpec::Don(burgers_don_spec()), 9000),
            ("elliptic", "belnet") => (ModelSpec::BelNet(elliptic_belnet_spec()), 3000),
            ("elliptic", "don") => (ModelSpec::Don(elliptic_don_spec()), 3000),
            _ => {
                return Err(Error::config(format!(
                    "no preset for model '{model}' on problem '{problem}'"
                )))
            }
        };
        let mut config = TrainConfig::new(spec, epochs, 0);
        config.schedule = LrSchedule::StepDecay {
            factor: 0.5,
            every: epochs / 6,
        };
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.grad_chunks == 0 {
            return Err(Error::config("batch size and gradient chunks must be positive"));
        }
        if let LrSchedule::StepDecay { factor, every } = self.schedule {
            if !(factor > 0.0) || every == 0 {
                return Err(Error::config("step decay needs a positive factor and period"));
            }
        }
        Ok(())
    }
}

/// Checks that `model` can be trained or evaluated on data with this
/// sampling mode and sensor count.
fn check_compatible(model: &Model, mode: SamplingMode, n_sensors: usize) -> Result<()> {
    if model.n_sensors() != n_sensors {
        return Err(Error::config(format!(
            "model expects {} sensors, dataset has {n_sensors}",
            model.n_sensors()
        )));
    }
    if matches!(model, Model::Don(_)) && mode == SamplingMode::Free {
        return Err(Error::config(
            "DeepONet ignores sensor locations and cannot be used with free-mode sensors",
        ));
    }
    Ok(())
}

/// Sum of squared errors and its gradient for one chunk of a batch.
fn chunk_gradients(model: &Model, chunk: &[&OperatorSample]) -> Result<(f64, usize, Vec<DenseArray>)> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, true);
    let out = model.forward_on_tape(&mut tape, &params, chunk)?;
    let (sse, count) = sse_on_tape(&mut tape, &out, chunk)?;
    let value = tape.value(sse).data()[0];
    let mut grads = tape.backward(sse)?;
    Ok((value, count, params.iter().map(|&p| grads.take(p)).collect()))
}

/// Runs `config.epochs` epochs of shuffled minibatch Adam on the mean squared
/// error and returns the mean loss of every epoch.
pub fn train(model: &mut Model, data: &TrainSet, config: &TrainConfig, exec: Exec) -> Result<Vec<f64>> {
    train_with(model, data, config, exec, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean loss)` after each epoch.
pub fn train_with(
    model: &mut Model,
    data: &TrainSet,
    config: &TrainConfig,
    exec: Exec,
    on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    check_compatible(model, data.meta().mode, data.meta().n_sensors)?;
    train_on(model, data.samples(), data.meta().mode, config, exec, on_epoch)
}

/// Training on samples that do not come from a dataset directory, e.g.
/// synthetic tasks. `mode` states whether sensor locations vary by sample.
pub fn train_on(
    model: &mut Model,
    samples: &[OperatorSample],
    mode: SamplingMode,
    config: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    config.validate()?;
    if model.spec() != config.model {
        return Err(Error::config("model architecture differs from the training configuration"));
    }
    if samples.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    check_compatible(model, mode, model.n_sensors())?;
    for s in samples {
        model.check_sample(s)?;
    }

    let mut state = AdamState::new(&model.blocks());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, Purpose::Shuffle, epoch as u64));
        let lr = config.schedule.rate(config.optimizer.learning_rate, epoch);
        let (mut epoch_sse, mut epoch_count) = (0.0, 0usize);
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&OperatorSample> = batch_idx.iter().map(|&i| &samples[i]).collect();
            let chunk_len = batch.len().div_ceil(config.grad_chunks);
            let chunks: Vec<&[&OperatorSample]> = batch.chunks(chunk_len).collect();
            let parts = exec.try_map(chunks.len(), |c| chunk_gradients(model, chunks[c]))?;

            let mut parts = parts.into_iter();
            let (mut sse, mut count, mut grads) = parts.next().expect("non-empty batch");
            for (s, c, g) in parts {
                sse += s;
                count += c;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.add_assign(gi)?;
                }
            }
            if !sse.is_finite() {
                history.push(f64::NAN);
                return Err(Error::Diverged { epoch, history });
            }
            let inv = 1.0 / count as f64;
            for g in &mut grads {
                *g = g.map(|x| x * inv);
            }
            let mut params = model.blocks_mut();
            adam_step(&mut params, &grads, &mut state, &config.optimizer, lr)?;
            epoch_sse += sse;
            epoch_count += count;
        }
        let loss = epoch_sse / epoch_count as f64;
        history.push(loss);
        on_epoch(epoch, loss);
    }
    Ok(history)
}

/// Predictions for every sample, computed in batches of `batch_size`.
pub fn predict_all(model: &Model, samples: &[OperatorSample], batch_size: usize, exec: Exec) -> Result<Vec<Vec<f64>>> {
    let batches: Vec<Vec<&OperatorSample>> = samples
        .chunks(batch_size.max(1))
        .map(|c| c.iter().collect())
        .collect();
    let preds = exec.try_map(batches.len(), |b| model.predict_batch(&batches[b]))?;
    Ok(preds.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub problem: String,
    pub mode: SamplingMode,
    pub parameter_count: usize,
    pub n_samples: usize,
    pub mean_relative_error_percent: f64,
    pub errors: RelativeErrors,
    pub architecture: ModelSpec,
    /// Metadata of the evaluated split, including the generator configuration.
    pub dataset: DatasetMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    /// Only recorded on request, since it would break byte-identical reruns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

/// Mean relative L2 test error of `model`, in percent.
pub fn evaluate(model: &Model, test: &TestSet, exec: Exec) -> Result<EvalReport> {
    check_compatible(model, test.meta().mode, test.meta().n_sensors)?;
    let preds = predict_all(model, test.samples(), 20, exec)?;
    let targets: Vec<Vec<f64>> = test.samples().iter().map(|s| s.targets.clone()).collect();
    let errors = relative_l2_error(&preds, &targets)?;
    Ok(EvalReport {
        model: model.spec().kind_name().to_string(),
        problem: test.meta().problem.clone(),
        mode: test.meta().mode,
        parameter_count: model.count_parameters(),
        n_samples: test.len(),
        mean_relative_error_percent: errors.mean_percent,
        errors,
        architecture: model.spec(),
        dataset: test.meta().clone(),
        train_config: None,
        wall_clock_s: None,
    })
}
