use super::model::{batch_loss, batch_loss_and_grad};
use super::params::ParamSet;
use crate::episodes::Sample;
use crate::error::{Error, Result};

/// Largest `|analytic - numeric| / max(1, |numeric|)` over every parameter
/// coordinate, with central differences of step `epsilon`.
pub fn grad_check(params: &ParamSet, batch: &[Sample], epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (_, analytic) = batch_loss_and_grad(params, batch)?;
    let analytic = analytic.flat();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut flat_index = 0;
    let tensor_count = params.tensors().len();
    for t in 0..tensor_count {
        let len = probe.tensors()[t].1.len();
        for i in 0..len {
            let original = probe.tensors()[t].1[i];
            probe.tensors_mut()[t].1[i] = original + epsilon;
            let plus = batch_loss(&probe, batch)?;
            probe.tensors_mut()[t].1[i] = original - epsilon;
            let minus = batch_loss(&probe, batch)?;
            probe.tensors_mut()[t].1[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = (analytic[flat_index] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
            flat_index += 1;
        }
    }
    Ok(worst)
}
