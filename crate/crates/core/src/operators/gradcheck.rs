//! Central finite-difference check of model gradients, one result per
//! parameter block.

use serde::Serialize;

use super::model::{BatchOutput, OperatorModel};
use super::sample::OperatorSample;
use crate::autodiff::{DenseArray, OpKind, Tape};
use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct BlockCheck {
    pub block: String,
    /// `||analytic - fd|| / max(||analytic||, ||fd||)`
    pub relative_error: f64,
}

/// Sum of squared predictions over the batch, recorded on `tape`.
fn squared_output(tape: &mut Tape, out: &BatchOutput) -> Result<crate::autodiff::NodeId> {
    let ids = match out {
        BatchOutput::Shared(id) => vec![*id],
        BatchOutput::PerSample(ids) => ids.clone(),
    };
    let mut total = None;
    for id in ids {
        let sq = tape.mul(id, id)?;
        let s = tape.sum(sq);
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s)?,
        });
    }
    Ok(total.expect("non-empty batch"))
}

fn objective<M: OperatorModel + ?Sized>(model: &M, batch: &[&OperatorSample]) -> Result<f64> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let out = model.forward_on_tape(&mut tape, &params, batch)?;
    let loss = squared_output(&mut tape, &out)?;
    Ok(tape.value(loss).data()[0])
}

/// Analytic gradient of `sum(prediction^2)` over the batch, optionally with a
/// corrupted backward rule.
pub fn analytic_gradients<M: OperatorModel + ?Sized>(
    model: &M,
    batch: &[&OperatorSample],
    fault: Option<OpKind>,
) -> Result<Vec<DenseArray>> {
    let mut tape = Tape::new();
    if let Some(op) = fault {
        tape.inject_gradient_fault(op);
    }
    let params = model.bind(&mut tape, true);
    let out = model.forward_on_tape(&mut tape, &params, batch)?;
    let loss = squared_output(&mut tape, &out)?;
    let grads = tape.backward(loss)?;
    Ok(params.iter().map(|&p| grads.wrt(p)).collect())
}

/// Compares analytic gradients with central differences of step `step`.
pub fn check_gradients<M: OperatorModel + Clone>(
    model: &M,
    batch: &[&OperatorSample],
    step: f64,
    fault: Option<OpKind>,
) -> Result<Vec<BlockCheck>> {
    let analytic = analytic_gradients(model, batch, fault)?;
    let names: Vec<String> = model.blocks().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut results = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let len = analytic[b].len();
        let mut fd = vec![0.0; len];
        for (i, slot) in fd.iter_mut().enumerate() {
            let original = probe.blocks_mut()[b].data()[i];
            probe.blocks_mut()[b].data_mut()[i] = original + step;
            let plus = objective(&probe, batch)?;
            probe.blocks_mut()[b].data_mut()[i] = original - step;
            let minus = objective(&probe, batch)?;
            probe.blocks_mut()[b].data_mut()[i] = original;
            *slot = (plus - minus) / (2.0 * step);
        }
        let a = analytic[b].data();
        let diff = a.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = analytic[b].norm().max(fd.iter().map(|v| v * v).sum::<f64>().sqrt());
        let relative_error = if scale == 0.0 { 0.0 } else { diff / scale };
        results.push(BlockCheck { block: name, relative_error });
    }
    Ok(results)
}
