use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample relative L2 errors in percent. Samples whose target has zero
/// norm have no defined ratio; they are listed in `excluded` and left out of
/// the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    /// `(sample index, error %)` for every scored sample.
    pub per_sample: Vec<(usize, f64)>,
    pub excluded: Vec<usize>,
    pub mean_percent: f64,
}

pub fn relative_l2_error(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<RelativeErrors> {
    if predictions.len() != targets.len() {
        return Err(Error::contract(format!(
            "{} prediction rows for {} target rows",
            predictions.len(),
            targets.len()
        )));
    }
    let mut per_sample = Vec::with_capacity(targets.len());
    let mut excluded = Vec::new();
    for (i, (p, t)) in predictions.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(Error::contract(format!(
                "sample {i}: {} predictions for {} targets",
                p.len(),
                t.len()
            )));
        }
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            excluded.push(i);
            continue;
        }
        let diff = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        per_sample.push((i, 100.0 * diff / norm));
    }
    let mean_percent = if per_sample.is_empty() {
        f64::NAN
    } else {
        per_sample.iter().map(|(_, e)| e).sum::<f64>() / per_sample.len() as f64
    };
    Ok(RelativeErrors {
        per_sample,
        excluded,
        mean_percent,
    })
}
