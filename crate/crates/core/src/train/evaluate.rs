use strokeseg_tensor::Tensor;

use super::batch::stack;
use crate::data::Sample;
use crate::error::Result;
use crate::loss::{combined_loss, LossConfig};
use crate::metrics::{binarize, metrics, MetricsReport};
use crate::models::Model;
use crate::nn::Forward;
use crate::stats::VolumePair;

/// Inference-mode probabilities and the combined loss for one batch.
pub fn eval_batch(model: &Model<f32>, samples: &[&Sample], loss: &LossConfig) -> Result<(Tensor<f32>, f64)> {
    let (x, y) = stack(samples)?;
    let f = Forward::eval(&model.store);
    let p = model.forward(&f, &f.input(x))?;
    let l = combined_loss(&p, &f.input(y), loss)?.value().data()[0] as f64;
    Ok((p.value().clone(), l))
}

/// Per-sample probabilities, batched in sample order.
pub fn predict_samples(model: &Model<f32>, samples: &[Sample], batch_size: usize) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let (x, _) = stack(&chunk.iter().collect::<Vec<_>>())?;
        let p = model.predict(x)?;
        let n = p.numel() / chunk.len();
        out.extend(p.data().chunks_exact(n).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Metrics for every sample plus predicted and actual lesion volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub volumes: Vec<VolumePair>,
}

pub fn score_predictions(samples: &[Sample], probs: &[Vec<f32>], threshold: f64) -> Result<Evaluation> {
    let mut report = MetricsReport::default();
    let mut volumes = Vec::with_capacity(samples.len());
    for (s, p) in samples.iter().zip(probs) {
        let pred = binarize(p, threshold);
        let gt: Vec<u8> = s.mask.iter().map(|&m| (m > 0.5) as u8).collect();
        report.push(s.id.clone(), metrics(&pred, &gt)?);
        let count = |m: &[u8]| m.iter().filter(|&&v| v == 1).count() as f64 * s.voxel_volume;
        volumes.push(VolumePair { subject_id: s.id.clone(), actual: count(&gt), predicted: count(&pred) });
    }
    Ok(Evaluation { report, volumes })
}

/// Forward pass in inference mode, binarisation at `threshold`, per-sample metrics.
pub fn evaluate(model: &Model<f32>, samples: &[Sample], threshold: f64, batch_size: usize) -> Result<Evaluation> {
    let probs = predict_samples(model, samples, batch_size)?;
    score_predictions(samples, &probs, threshold)
}
