//! Dense rank-4 tensor of `f64` values.
//!
//! Layout is row-major `(n, h, w, c)` with the channel index fastest, which
//! is the order every kernel in [`crate::nn`] assumes. Activations use the
//! axes as (batch, height, width, channels); convolution kernels reuse the
//! same container with axes (kh, kw, in-channels, out-channels).

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
    /// Optional gradient buffer, always the same length as `data`.
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor from explicit data; the element count must match the
    /// product of the extents.
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {:?} (= {} elements)",
                data.len(),
                shape,
                expect
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
            grad: None,
        }
    }

    /// Elementwise construction in index order (n, h, w, c).
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor::zeros(shape);
        let [n, h, w, c] = shape;
        let mut i = 0;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        t.data[i] = f(b, y, x, ch);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    /// Uniform random tensor in `[lo, hi)`.
    pub fn random_uniform(shape: [usize; 4], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: (0..len).map(|_| rng.gen_range(lo..hi)).collect(),
            grad: None,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let [n, h, w, c] = self.shape;
        (n, h, w, c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.shape[1] + y) * self.shape[2] + x) * self.shape[3] + c
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(n, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(n, y, x, c);
        self.data[i] = v;
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Attaches a gradient buffer, validating the shape invariant.
    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::invalid(format!(
                "gradient length {} does not match tensor shape {:?}",
                grad.len(),
                self.shape
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// `self += scale * other`, used for gradient accumulation and SGD.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("tensor add", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Elementwise map into a new tensor (gradient not carried over).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        let err = Tensor::new([1, 2, 2, 1], vec![0.0; 3]).unwrap_err();
        assert!(err.to_string().contains("does not match shape"));
    }

    #[test]
    fn indexing_is_channel_fastest() {
        let t = Tensor::from_fn([2, 3, 4, 5], |n, y, x, c| {
            (((n * 3 + y) * 4 + x) * 5 + c) as f64
        });
        assert_eq!(t.at(0, 0, 0, 1), 1.0);
        assert_eq!(t.at(0, 0, 1, 0), 5.0);
        assert_eq!(t.at(1, 2, 3, 4), (t.len() - 1) as f64);
    }

    #[test]
    fn grad_shape_invariant() {
        let mut t = Tensor::zeros([1, 2, 2, 1]);
        assert!(t.set_grad(vec![0.0; 3]).is_err());
        t.set_grad(vec![1.0; 4]).unwrap();
        assert_eq!(t.grad().unwrap(), &[1.0; 4]);
        t.clear_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn add_scaled_checks_shape() {
        let mut a = Tensor::zeros([1, 2, 2, 1]);
        let b = Tensor::zeros([1, 2, 1, 2]);
        assert!(a.add_scaled(&b, 1.0).is_err());
    }
}
