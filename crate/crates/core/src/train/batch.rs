use strokeseg_tensor::Tensor;

use crate::data::Sample;
use crate::error::{Error, Result};

/// Stacks samples into `(B, 1, extents...)` image and mask tensors.
pub fn stack(samples: &[&Sample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = samples.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
    let mut shape = vec![samples.len(), 1];
    shape.extend(&first.extents);
    let n: usize = first.extents.iter().product();
    let mut image = Vec::with_capacity(samples.len() * n);
    let mut mask = Vec::with_capacity(samples.len() * n);
    for s in samples {
        if s.extents != first.extents || s.image.len() != n || s.mask.len() != n {
            return Err(Error::Invalid(format!("sample {} has extents {:?}, batch uses {:?}", s.id, s.extents, first.extents)));
        }
        image.extend_from_slice(&s.image);
        mask.extend_from_slice(&s.mask);
    }
    Ok((Tensor::new(shape.clone(), image)?, Tensor::new(shape, mask)?))
}
