use crate::autodiff::{DenseArray, NodeId, Tape};
use crate::error::{Error, Result};
use crate::operators::{BatchOutput, OperatorSample};

/// Mean squared difference over every query point of every sample.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::contract(format!(
            "{} prediction rows for {} target rows",
            predictions.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (p, t)) in predictions.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(Error::contract(format!(
                "sample {i}: {} predictions for {} targets",
                p.len(),
                t.len()
            )));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += p.len();
    }
    if count == 0 {
        return Err(Error::contract("mean squared error of an empty batch"));
    }
    Ok(sum / count as f64)
}

/// Records the sum of squared errors of `out` against the batch targets and
/// returns it with the number of terms.
pub fn sse_on_tape(tape: &mut Tape, out: &BatchOutput, batch: &[&OperatorSample]) -> Result<(NodeId, usize)> {
    match out {
        BatchOutput::Shared(id) => {
            let q = batch.first().map_or(0, |s| s.targets.len());
            let data = batch.iter().flat_map(|s| s.targets.iter().copied()).collect();
            let targets = tape.constant(DenseArray::from_matrix(batch.len(), q, data)?);
            let diff = tape.sub(*id, targets)?;
            let sq = tape.mul(diff, diff)?;
            Ok((tape.sum(sq), batch.len() * q))
        }
        BatchOutput::PerSample(ids) => {
            let mut total = None;
            let mut count = 0;
            for (id, s) in ids.iter().zip(batch) {
                let targets = tape.constant(DenseArray::row(s.targets.clone()));
                let diff = tape.sub(*id, targets)?;
                let sq = tape.mul(diff, diff)?;
                let part = tape.sum(sq);
                count += s.targets.len();
                total = Some(match total {
                    None => part,
                    Some(t) => tape.add(t, part)?,
                });
            }
            let total = total.ok_or_else(|| Error::contract("empty batch"))?;
            Ok((total, count))
        }
    }
}
