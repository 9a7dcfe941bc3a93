use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BCE_CLAMP: f64 = 1e-7;

fn check(pred: &Tensor, target: &Tensor, name: &str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            name,
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    if pred.batch() == 0 {
        return Err(Error::Empty(format!("{name}: empty batch")));
    }
    Ok(())
}

/// Mean over the batch of `½‖pred − target‖²`, and its gradient.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    check(pred, target, "mse_loss")?;
    let n = pred.batch() as f64;
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.into_iter().map(|d| d / n).collect();
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Binary cross-entropy averaged over all elements, with probabilities
/// clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    check(pred, target, "bce_loss")?;
    if let Some(t) = target.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::Domain(format!("binary target must be 0 or 1, got {t}")));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        grad.push((p - t) / (p * (1.0 - p)) / n);
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
