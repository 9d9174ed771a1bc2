//! Spatial max pooling over a centered odd window with stride 1.
//!
//! Out-of-bounds window positions are excluded from the max (the window
//! shrinks at the borders; nothing is padded in), so the output keeps the
//! input's spatial size. The forward pass records the winning position per
//! output element for the backward routing. Ties go to the first winner in
//! row-major window order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Winning input position (flat spatial index `wy * w + wx`) for every
/// output element of a pooling forward pass.
#[derive(Clone, Debug)]
pub struct PoolArgmax {
    shape: [usize; 4],
    winners: Vec<u32>,
}

impl PoolArgmax {
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    /// Winning (wy, wx) for output element (n, y, x, c).
    pub fn winner(&self, n: usize, y: usize, x: usize, c: usize) -> (usize, usize) {
        let [_, h, w, ch] = self.shape;
        let flat = self.winners[((n * h + y) * w + x) * ch + c] as usize;
        (flat / w, flat % w)
    }
}

/// Max over the `window`x`window` neighborhood of each pixel, per channel.
/// The max is computed separably (row pass then column pass); the composed
/// argmax equals the row-major first winner of the full window scan.
pub fn maxpool_spatial_forward(
    input: &Tensor,
    window: usize,
    stride: usize,
) -> Result<(Tensor, PoolArgmax)> {
    if window % 2 == 0 || window == 0 {
        return Err(Error::invalid(format!(
            "pooling window must be odd, got {window}"
        )));
    }
    if stride != 1 {
        return Err(Error::invalid(format!(
            "pooling stride is fixed at 1, got {stride}"
        )));
    }
    let (n, h, w, c) = input.dims();
    let r = window / 2;
    let data = input.data();

    let mut out = Tensor::zeros([n, h, w, c]);
    let mut winners = vec![0u32; n * h * w * c];

    // Row pass: per (y, x, c), max over x-window with its source column.
    let mut row_val = vec![0.0f64; h * w * c];
    let mut row_src = vec![0u32; h * w * c];
    for s in 0..n {
        let sample = &data[s * h * w * c..(s + 1) * h * w * c];
        for y in 0..h {
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r).min(w - 1);
                let base = (y * w + x) * c;
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut src = x0;
                    for wx in x0..=x1 {
                        let v = sample[(y * w + wx) * c + ch];
                        if v > best {
                            best = v;
                            src = wx;
                        }
                    }
                    row_val[base + ch] = best;
                    row_src[base + ch] = src as u32;
                }
            }
        }
        // Column pass over the row maxima.
        let out_s = &mut out.data_mut()[s * h * w * c..(s + 1) * h * w * c];
        let win_s = &mut winners[s * h * w * c..(s + 1) * h * w * c];
        for y in 0..h {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(h - 1);
            for x in 0..w {
                let base = (y * w + x) * c;
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut src_row = y0;
                    for wy in y0..=y1 {
                        let v = row_val[(wy * w + x) * c + ch];
                        if v > best {
                            best = v;
                            src_row = wy;
                        }
                    }
                    out_s[base + ch] = best;
                    win_s[base + ch] =
                        src_row as u32 * w as u32 + row_src[(src_row * w + x) * c + ch];
                }
            }
        }
    }

    Ok((
        out,
        PoolArgmax {
            shape: [n, h, w, c],
            winners,
        },
    ))
}

/// Routes each output gradient to its winning input position, accumulating
/// where several outputs share a winner. Total gradient mass is conserved.
pub fn maxpool_spatial_backward(argmax: &PoolArgmax, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != argmax.shape {
        return Err(Error::shape(
            "maxpool grad_out vs forward output",
            &grad_out.shape(),
            &argmax.shape,
        ));
    }
    let [n, h, w, c] = argmax.shape;
    let mut grad_input = Tensor::zeros([n, h, w, c]);
    let gin = grad_input.data_mut();
    let go = grad_out.data();
    for s in 0..n {
        let off = s * h * w * c;
        for i in 0..h * w * c {
            let spatial = argmax.winners[off + i] as usize;
            let ch = i % c;
            gin[off + spatial * c + ch] += go[off + i];
        }
    }
    Ok(grad_input)
}
