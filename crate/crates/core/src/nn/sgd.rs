//! Plain stochastic gradient descent: `p <- p - lr * g`. No momentum, no
//! weight decay.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training hyperparameters. Defaults: learning rate 0.002, batch 64,
/// 18 epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SGDConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl SGDConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Result<Self> {
        let cfg = SGDConfig {
            learning_rate,
            batch_size,
            epochs,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epoch count must be at least 1"));
        }
        Ok(())
    }
}

impl Default for SGDConfig {
    fn default() -> Self {
        SGDConfig {
            learning_rate: 0.002,
            batch_size: 64,
            epochs: 18,
            seed: 0,
        }
    }
}

/// One descent step on a tensor parameter.
pub fn sgd_update(param: &mut Tensor, grad: &Tensor, learning_rate: f64) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape(
            "sgd param vs grad",
            &param.shape(),
            &grad.shape(),
        ));
    }
    param.add_scaled(grad, -learning_rate)
}

/// One descent step on a flat parameter slice (biases).
pub fn sgd_update_slice(param: &mut [f64], grad: &[f64], learning_rate: f64) -> Result<()> {
    if param.len() != grad.len() {
        return Err(Error::invalid(format!(
            "sgd slice length mismatch: {} vs {}",
            param.len(),
            grad.len()
        )));
    }
    for (p, g) in param.iter_mut().zip(grad) {
        *p -= learning_rate * g;
    }
    Ok(())
}
