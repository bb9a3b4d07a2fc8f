//! Forward pass, softmax cross-entropy and the analytic backward pass.

use super::params::{GradSet, Heads, ParamSet};
use crate::episodes::Sample;
use crate::error::{Error, Result};

fn per_class_heads(params: &ParamSet) -> Result<&[Vec<f64>]> {
    match &params.heads {
        Heads::PerClass(h) => Ok(h),
        Heads::Shared(_) => Err(Error::state(
            "shared head must be duplicated before classification",
        )),
    }
}

fn check_input(params: &ParamSet, x: &[f64]) -> Result<()> {
    if x.len() != params.encoder.input_dim {
        return Err(Error::invalid(format!(
            "input has length {}, encoder expects {}",
            x.len(),
            params.encoder.input_dim
        )));
    }
    Ok(())
}

/// Post-activation values of every layer, input first.
fn activations(params: &ParamSet, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(params.encoder.layers.len() + 1);
    acts.push(x.to_vec());
    for layer in &params.encoder.layers {
        let input = acts.last().expect("input pushed first");
        let out = (0..layer.outputs)
            .map(|o| {
                let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                let z = layer.bias[o] + dot(row, input);
                z.max(0.0)
            })
            .collect();
        acts.push(out);
    }
    acts
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Encoder output `f(x)`.
pub fn features(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    Ok(activations(params, x).pop().expect("at least the input"))
}

/// `logits[c] = w_c . f(x)` for per-class heads.
pub fn forward_logits(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
    let heads = per_class_heads(params)?;
    let f = features(params, x)?;
    Ok(heads.iter().map(|w| dot(w, &f)).collect())
}

/// 1-based argmax; ties go to the smallest class index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = c;
        }
    }
    best + 1
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label - 1]`, via max subtraction.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label - 1]
}

fn check_label(label: usize, n: usize) -> Result<()> {
    if label == 0 || label > n {
        return Err(Error::invalid(format!("label {label} outside 1..={n}")));
    }
    Ok(())
}

/// Summed cross-entropy over `batch`, without gradients.
pub fn batch_loss(params: &ParamSet, batch: &[Sample]) -> Result<f64> {
    let n = per_class_heads(params)?.len();
    let mut loss = 0.0;
    for s in batch {
        check_label(s.label, n)?;
        loss += cross_entropy(&forward_logits(params, &s.x)?, s.label);
    }
    Ok(loss)
}

/// Fraction of `batch` classified correctly.
pub fn accuracy(params: &ParamSet, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("accuracy of an empty batch"));
    }
    let mut correct = 0usize;
    for s in batch {
        if predict(&forward_logits(params, &s.x)?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}

/// Summed softmax cross-entropy over `batch` and its exact gradient.
pub fn batch_loss_and_grad(params: &ParamSet, batch: &[Sample]) -> Result<(f64, GradSet)> {
    let heads = per_class_heads(params)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = heads.len();
    let mut grad = GradSet::zeros_like(params);
    let mut loss = 0.0;
    for s in batch {
        check_label(s.label, n)?;
        check_input(params, &s.x)?;
        let acts = activations(params, &s.x);
        let f = acts.last().expect("at least the input");
        let logits: Vec<f64> = heads.iter().map(|w| dot(w, f)).collect();
        loss += cross_entropy(&logits, s.label);

        let mut dlogits = softmax(&logits);
        dlogits[s.label - 1] -= 1.0;

        let g = &mut grad.0;
        let Heads::PerClass(gh) = &mut g.heads else {
            unreachable!("gradient mirrors per-class heads")
        };
        let mut upstream = vec![0.0; f.len()];
        for (c, &d) in dlogits.iter().enumerate() {
            for (k, &fk) in f.iter().enumerate() {
                gh[c][k] += d * fk;
                upstream[k] += d * heads[c][k];
            }
        }

        for (li, layer) in params.encoder.layers.iter().enumerate().rev() {
            let input = &acts[li];
            let output = &acts[li + 1];
            let gl = &mut g.encoder.layers[li];
            let mut next = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                // ReLU passes gradient only where the unit is active
                if output[o] <= 0.0 {
                    continue;
                }
                let dz = upstream[o];
                gl.bias[o] += dz;
                let row = o * layer.inputs;
                for i in 0..layer.inputs {
                    gl.weight[row + i] += dz * input[i];
                    next[i] += dz * layer.weight[row + i];
                }
            }
            upstream = next;
        }
    }
    Ok((loss, grad))
}
