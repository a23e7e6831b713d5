use crate::{Error, Result};

/// Matthews correlation of binary predictions; 0 when a marginal is empty.
pub fn mcc(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fneg) = (0f64, 0f64, 0f64, 0f64);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
        }
    }
    let denom = (tp + fp) * (tp + fneg) * (tn + fp) * (tn + fneg);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fneg) / denom.sqrt())
}
