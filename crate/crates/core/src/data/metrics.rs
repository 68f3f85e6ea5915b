use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::training::mse_frames;

/// Fraction of sequences whose ids match the target exactly.
pub fn sequence_accuracy(pred_ids: &[Vec<usize>], target_ids: &[Vec<usize>]) -> Result<f64> {
    if pred_ids.len() != target_ids.len() {
        return Err(Error::shape("sequence_accuracy", &[pred_ids.len()], &[target_ids.len()]));
    }
    if pred_ids.is_empty() {
        return Err(Error::Domain("sequence accuracy of zero samples".into()));
    }
    let hits = pred_ids.iter().zip(target_ids).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred_ids.len() as f64)
}

/// Frame-wise mean squared error averaged over sequences.
///
/// `pred` and `truth` hold one `[T × H × W]` clip per sequence; the result
/// pairs each frame position, numbered from `first_frame`, with its mean
/// error.
pub fn per_frame_mse(pred: &[Tensor<f32>], truth: &[Tensor<f32>], first_frame: usize) -> Result<Vec<(usize, f64)>> {
    if pred.len() != truth.len() {
        return Err(Error::shape("per_frame_mse", &[pred.len()], &[truth.len()]));
    }
    let first = pred
        .first()
        .ok_or_else(|| Error::Domain("per-frame MSE of zero sequences".into()))?;
    let frames = first.shape()[0];
    let mut sums = vec![0.0; frames];
    for (p, t) in pred.iter().zip(truth) {
        if p.shape() != t.shape() || p.shape()[0] != frames {
            return Err(Error::shape("per_frame_mse", p.shape(), t.shape()));
        }
        for (f, s) in sums.iter_mut().enumerate() {
            *s += mse_frames(&p.index_leading(f)?, &t.index_leading(f)?)?;
        }
    }
    let n = pred.len() as f64;
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(f, s)| (first_frame + f, s / n))
        .collect())
}
