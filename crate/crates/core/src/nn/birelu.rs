//! Bilateral rectified linear unit: identity inside `[t_min, t_max]`,
//! clamped outside. Used as the final activation so predictions stay in the
//! physical transmission range.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiReLU {
    t_min: f64,
    t_max: f64,
}

impl BiReLU {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || t_min >= t_max {
            return Err(Error::invalid(format!(
                "BiReLU bounds must be finite with t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        Ok(BiReLU { t_min, t_max })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }
}

/// Transmission range [0, 1].
impl Default for BiReLU {
    fn default() -> Self {
        BiReLU {
            t_min: 0.0,
            t_max: 1.0,
        }
    }
}

/// out = clamp(input, t_min, t_max), elementwise.
pub fn birelu_forward(input: &Tensor, act: &BiReLU) -> Tensor {
    input.map(|v| v.clamp(act.t_min, act.t_max))
}

/// Gradient is 1 strictly inside the bounds and 0 elsewhere (the clamped
/// regions are flat; the kinks take the outer subgradient).
pub fn birelu_backward(input: &Tensor, act: &BiReLU, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(
            "birelu grad_out vs input",
            &grad_out.shape(),
            &input.shape(),
        ));
    }
    let mut out = Tensor::zeros(input.shape());
    let od = out.data_mut();
    for (i, (&v, &g)) in input.data().iter().zip(grad_out.data()).enumerate() {
        if v > act.t_min && v < act.t_max {
            od[i] = g;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dehaze_testkit as tk;

    #[test]
    fn interior_is_identity() {
        let act = BiReLU::default();
        let t = Tensor::filled([1, 1, 1, 1], 0.5);
        assert_eq!(birelu_forward(&t, &act).data(), &[0.5]);
    }

    #[test]
    fn clips_both_sides() {
        let act = BiReLU::default();
        let t = Tensor::new([1, 1, 2, 1], vec![-0.3, 1.7]).unwrap();
        assert_eq!(birelu_forward(&t, &act).data(), &[0.0, 1.0]);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(BiReLU::new(1.0, 0.0).is_err());
        assert!(BiReLU::new(0.5, 0.5).is_err());
        assert!(BiReLU::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn backward_matches_finite_differences_away_from_kinks() {
        let act = BiReLU::new(-0.5, 0.75).unwrap();
        let eps = 1e-5;
        let mut rng = tk::rng(31);
        let input = Tensor::random_uniform([1, 4, 4, 2], -2.0, 2.0, &mut rng);
        let go = Tensor::random_uniform([1, 4, 4, 2], -1.0, 1.0, &mut rng);
        let grad = birelu_backward(&input, &act, &go).unwrap();
        for i in 0..input.len() {
            let x = input.data()[i];
            if (x - act.t_min()).abs() < 10.0 * eps || (x - act.t_max()).abs() < 10.0 * eps {
                continue; // kink
            }
            let fd = {
                let f = |v: f64| {
                    let mut p = input.clone();
                    p.data_mut()[i] = v;
                    birelu_forward(&p, &act)
                        .data()
                        .iter()
                        .zip(go.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                };
                (f(x + eps) - f(x - eps)) / (2.0 * eps)
            };
            assert!(tk::rel_err(grad.data()[i], fd) < 1e-4, "i={i}");
        }
    }
}
