use crate::autograd::{bce_value, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::LossKind;

/// Mean binary cross entropy, predictions clipped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("bce_loss", pred.shape(), target.shape()));
    }
    Ok(bce_value(pred.data(), target.data()))
}

/// Mean squared error between two frames, `(1/mn) ΣΣ (I − K)²`.
pub fn mse_frames<T: Scalar>(i: &Tensor<T>, k: &Tensor<T>) -> Result<f64> {
    if i.shape() != k.shape() {
        return Err(Error::shape("mse_frames", i.shape(), k.shape()));
    }
    let s: f64 = i
        .data()
        .iter()
        .zip(k.data())
        .map(|(a, b)| {
            let d = a.f64() - b.f64();
            d * d
        })
        .sum();
    Ok(s / i.numel() as f64)
}

/// Records the configured loss on `g`.
pub fn loss_var<T: Scalar>(g: &mut Graph<T>, kind: LossKind, pred: Var, target: &Tensor<T>) -> Result<Var> {
    match kind {
        LossKind::BinaryCrossEntropy => g.bce(pred, target),
        LossKind::MeanSquaredError => {
            let t = g.constant(target.clone());
            g.mse(pred, t)
        }
    }
}
