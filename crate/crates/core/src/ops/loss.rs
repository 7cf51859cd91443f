use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct SoftmaxCrossEntropy<T: Real = f32> {
    /// Mean over the batch of `-ln p[label]`.
    pub loss: f64,
    pub probs: Tensor<T>,
    /// `(probs - onehot) / N`
    pub grad_logits: Tensor<T>,
}

pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<SoftmaxCrossEntropy<T>> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut grad = Vec::with_capacity(n * k);
    let mut loss = 0.0f64;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        // log-sum-exp form keeps saturated rows accurate
        loss += total.ln() - (row[label].f64() - max);
        for (j, e) in exps.iter().enumerate() {
            let p = e / total;
            probs.push(T::of(p));
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad.push(T::of((p - onehot) / n as f64));
        }
    }
    Ok(SoftmaxCrossEntropy {
        loss: loss / n as f64,
        probs: Tensor::new(&[n, k], probs)?,
        grad_logits: Tensor::new(&[n, k], grad)?,
    })
}
