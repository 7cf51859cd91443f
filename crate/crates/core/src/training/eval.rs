use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{infer, NetworkSpec, ParamStore};
use crate::training::samples::{gather, Samples};

const EVAL_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<usize>,
}

/// Index of the largest logit; ties go to the lowest class id.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Builds accuracy and confusion counts from predictions.
pub fn score(predictions: &[usize], labels: &[usize], classes: usize) -> EvalResult {
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        confusion[t][p] += 1;
    }
    let correct: u64 = (0..classes).map(|i| confusion[i][i]).sum();
    EvalResult {
        accuracy: if labels.is_empty() { 0.0 } else { correct as f64 / labels.len() as f64 },
        confusion,
        predictions: predictions.to_vec(),
    }
}

/// Eval-mode predictions over per-sample inputs, fanned out over the current
/// rayon pool. Chunking only affects scheduling, never results.
pub fn predict<S: Samples + ?Sized>(spec: &NetworkSpec, params: &ParamStore, inputs: &S) -> Result<Vec<usize>> {
    let n = inputs.len();
    let chunks: Vec<Vec<usize>> = (0..n.div_ceil(EVAL_CHUNK))
        .into_par_iter()
        .map(|c| {
            let idx: Vec<usize> = (c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(n)).collect();
            let logits = infer(spec, params, &gather(inputs, &idx)?)?;
            let (_, k) = logits.dims2()?;
            Ok(logits.data().chunks_exact(k).map(argmax).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn evaluate<S: Samples + ?Sized>(
    spec: &NetworkSpec,
    params: &ParamStore,
    inputs: &S,
    labels: &[usize],
) -> Result<EvalResult> {
    if inputs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let classes = spec.output_shape(spec.input_shape)?[0];
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let predictions = predict(spec, params, inputs)?;
    Ok(score(&predictions, labels, classes))
}
