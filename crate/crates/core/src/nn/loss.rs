//! Mean squared error loss with its gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// loss = (1/M) * sum((pred - target)^2) over all M elements;
/// grad_pred = (2/M) * (pred - target).
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss pred vs target",
            &pred.shape(),
            &target.shape(),
        ));
    }
    let m = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let gd = grad.data_mut();
    let mut sum = 0.0;
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        sum += d * d;
        gd[i] = 2.0 * d / m;
    }
    Ok((sum / m, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dehaze_testkit as tk;

    #[test]
    fn zero_for_identical_inputs() {
        let mut rng = tk::rng(8);
        let t = Tensor::random_uniform([2, 3, 3, 1], 0.0, 1.0, &mut rng);
        let (loss, grad) = mse_loss(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_offset() {
        let a = Tensor::filled([1, 4, 4, 1], 0.35);
        let b = Tensor::filled([1, 4, 4, 1], 0.25);
        let (loss, _) = mse_loss(&a, &b).unwrap();
        assert!((loss - 0.01).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::zeros([1, 2, 2, 1]);
        let b = Tensor::zeros([1, 2, 1, 2]);
        assert!(mse_loss(&a, &b).is_err());
    }

    #[test]
    fn grad_matches_finite_differences() {
        let eps = 1e-6;
        let mut rng = tk::rng(9);
        let pred = Tensor::random_uniform([1, 3, 3, 2], -1.0, 1.0, &mut rng);
        let target = Tensor::random_uniform([1, 3, 3, 2], -1.0, 1.0, &mut rng);
        let (_, grad) = mse_loss(&pred, &target).unwrap();
        for i in 0..pred.len() {
            let f = |v: f64| {
                let mut p = pred.clone();
                p.data_mut()[i] = v;
                mse_loss(&p, &target).unwrap().0
            };
            let x = pred.data()[i];
            let fd = (f(x + eps) - f(x - eps)) / (2.0 * eps);
            assert!(tk::rel_err(grad.data()[i], fd) < 1e-6, "i={i}");
        }
    }
}
