//! Random-access sources of per-sample network inputs.

use std::borrow::Cow;

use crate::error::Result;
use crate::tensor::Tensor;

/// Indexable per-sample inputs, each shaped `[C,H,W]`.
///
/// Lets training and evaluation run over data that is materialized lazily
/// (spilled feature maps, on-the-fly preprocessing) as well as plain slices.
pub trait Samples: Sync {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> Result<Cow<'_, Tensor>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Samples for [Tensor] {
    fn len(&self) -> usize {
        <[Tensor]>::len(self)
    }

    fn get(&self, index: usize) -> Result<Cow<'_, Tensor>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

impl Samples for Vec<Tensor> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<Cow<'_, Tensor>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

/// Stacks the selected samples into one `[N,C,H,W]` batch.
pub fn gather<S: Samples + ?Sized>(samples: &S, indices: &[usize]) -> Result<Tensor> {
    let items = indices.iter().map(|&i| samples.get(i)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = items.iter().map(|c| c.as_ref()).collect();
    Tensor::stack(&refs)
}
