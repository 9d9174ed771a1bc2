//! Stride-1 same-padded 2D convolution with exact forward and backward
//! passes.
//!
//! The implementation lowers each batch sample to an im2col matrix and runs
//! a single dgemm per sample, which is what makes desk-scale training
//! practical on one core. Summation order inside each output element is
//! fixed by the gemm blocking for a given shape, so results are
//! deterministic for a given build regardless of thread count.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rayon::prelude::*;

/// Convolution layer: kernel of shape (kh, kw, in-channels, out-channels),
/// one bias per output channel, stride fixed at 1, zero same-padding so the
/// spatial size is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2DLayer {
    kernel: Tensor,
    bias: Vec<f64>,
    pad_h: usize,
    pad_w: usize,
}

impl Conv2DLayer {
    /// Wraps an explicit kernel and bias. Kernel extents kh and kw must be
    /// odd so that "same" padding is symmetric.
    pub fn new(kernel: Tensor, bias: Vec<f64>) -> Result<Self> {
        let (kh, kw, _cin, cout) = kernel.dims();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!(
                "convolution kernel extents must be odd, got {}x{}",
                kh, kw
            )));
        }
        if bias.len() != cout {
            return Err(Error::invalid(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                cout
            )));
        }
        Ok(Conv2DLayer {
            kernel,
            bias,
            pad_h: kh / 2,
            pad_w: kw / 2,
        })
    }

    /// Glorot-uniform kernel in [-s, s] with s = sqrt(6 / (fan_in + fan_out)),
    /// zero bias. fan_in = cin*kh*kw, fan_out = cout*kh*kw.
    pub fn init(kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut impl Rng) -> Result<Self> {
        let fan_in = (cin * kh * kw) as f64;
        let fan_out = (cout * kh * kw) as f64;
        let s = (6.0 / (fan_in + fan_out)).sqrt();
        let kernel = Tensor::random_uniform([kh, kw, cin, cout], -s, s, rng);
        Conv2DLayer::new(kernel, vec![0.0; cout])
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    /// Mutable kernel data; the shape itself cannot change through this.
    pub fn kernel_mut(&mut self) -> &mut Tensor {
        &mut self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// (kh, kw, cin, cout)
    pub fn kernel_dims(&self) -> (usize, usize, usize, usize) {
        self.kernel.dims()
    }

    pub fn padding(&self) -> (usize, usize) {
        (self.pad_h, self.pad_w)
    }
}

/// Gradients of a scalar loss with respect to a convolution's input, kernel,
/// and bias.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

fn check_channels(input: &Tensor, layer: &Conv2DLayer) -> Result<()> {
    let (_, _, _, cin) = input.dims();
    let (_, _, kin, _) = layer.kernel.dims();
    if cin != kin {
        return Err(Error::shape(
            "conv2d input channels vs kernel",
            &input.shape(),
            &layer.kernel.shape(),
        ));
    }
    Ok(())
}

thread_local! {
    /// Reused im2col buffer; grows to the largest lowering seen on this
    /// thread. Avoids a multi-megabyte allocation per convolution call.
    static COL_BUF: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn with_col_buffer<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    COL_BUF.with(|cell| {
        let mut buf = cell.borrow_mut();
        if buf.len() < len {
            buf.resize(len, 0.0);
        }
        f(&mut buf[..len])
    })
}

/// Fills `col` (h*w rows by kh*kw*cin columns) with the receptive field of
/// every output pixel of one sample; out-of-bounds taps are zero. Interior
/// rows are fully overwritten, so only border rows are zeroed first and a
/// dirty buffer can be reused safely.
fn im2col(sample: &[f64], h: usize, w: usize, cin: usize, kh: usize, kw: usize, col: &mut [f64]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let k = kh * kw * cin;
    debug_assert_eq!(col.len(), h * w * k);
    for y in 0..h {
        for x in 0..w {
            let row = (y * w + x) * k;
            let interior = y >= ph && y + ph < h && x >= pw && x + pw < w;
            if !interior {
                col[row..row + k].fill(0.0);
            }
            for dy in 0..kh {
                let iy = y + dy;
                if iy < ph || iy >= h + ph {
                    continue;
                }
                let iy = iy - ph;
                for dx in 0..kw {
                    let ix = x + dx;
                    if ix < pw || ix >= w + pw {
                        continue;
                    }
                    let ix = ix - pw;
                    let src = (iy * w + ix) * cin;
                    let dst = row + (dy * kw + dx) * cin;
                    col[dst..dst + cin].copy_from_slice(&sample[src..src + cin]);
                }
            }
        }
    }
}

/// Kernel for the input-gradient pass: spatially flipped with in/out channel
/// axes swapped, so that grad_input = conv2d_forward(grad_out, flipped).
fn flipped_kernel(kernel: &Tensor) -> Tensor {
    let (kh, kw, cin, cout) = kernel.dims();
    let src = kernel.data();
    Tensor::from_fn([kh, kw, cout, cin], |dy, dx, o, c| {
        src[(((kh - 1 - dy) * kw + (kw - 1 - dx)) * cin + c) * cout + o]
    })
}

/// Forward pass for a single output channel: per-pixel dot products over the
/// receptive field, no lowering. dgemm degenerates at n = 1, so this direct
/// path is much faster for the final transmission layer.
fn conv2d_forward_single(input: &Tensor, layer: &Conv2DLayer) -> Tensor {
    let (n, h, w, cin) = input.dims();
    let (kh, kw, _, _) = layer.kernel.dims();
    let (ph, pw) = (layer.pad_h, layer.pad_w);
    let kernel = layer.kernel.data();
    let bias = layer.bias[0];
    let in_data = input.data();

    let mut out = Tensor::zeros([n, h, w, 1]);
    out.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(s, out_s)| {
            let sample = &in_data[s * h * w * cin..(s + 1) * h * w * cin];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias;
                    for dy in 0..kh {
                        let iy = y + dy;
                        if iy < ph || iy >= h + ph {
                            continue;
                        }
                        let iy = iy - ph;
                        for dx in 0..kw {
                            let ix = x + dx;
                            if ix < pw || ix >= w + pw {
                                continue;
                            }
                            let ix = ix - pw;
                            let px = &sample[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                            let kv = &kernel[(dy * kw + dx) * cin..(dy * kw + dx + 1) * cin];
                            for (a, b) in px.iter().zip(kv) {
                                acc += a * b;
                            }
                        }
                    }
                    out_s[y * w + x] = acc;
                }
            }
        });
    out
}

/// out[n,y,x,o] = bias[o] + sum over (dy,dx,c) of
/// input[n, y+dy-kh/2, x+dx-kw/2, c] * kernel[dy,dx,c,o], zero outside.
pub fn conv2d_forward(input: &Tensor, layer: &Conv2DLayer) -> Result<Tensor> {
    check_channels(input, layer)?;
    let (n, h, w, cin) = input.dims();
    let (kh, kw, _, cout) = layer.kernel.dims();
    if cout == 1 {
        return Ok(conv2d_forward_single(input, layer));
    }
    let k = kh * kw * cin;
    let m = h * w;

    let mut out = Tensor::zeros([n, h, w, cout]);
    let kernel = layer.kernel.data();
    let bias = &layer.bias;
    let in_data = input.data();

    out.data_mut()
        .par_chunks_mut(m * cout)
        .enumerate()
        .for_each(|(s, out_s)| {
            let sample = &in_data[s * m * cin..(s + 1) * m * cin];
            with_col_buffer(m * k, |col| {
                im2col(sample, h, w, cin, kh, kw, col);
                unsafe {
                    matrixmultiply::dgemm(
                        m,
                        k,
                        cout,
                        1.0,
                        col.as_ptr(),
                        k as isize,
                        1,
                        kernel.as_ptr(),
                        cout as isize,
                        1,
                        0.0,
                        out_s.as_mut_ptr(),
                        cout as isize,
                        1,
                    );
                }
            });
            for px in out_s.chunks_mut(cout) {
                for (v, b) in px.iter_mut().zip(bias) {
                    *v += b;
                }
            }
        });
    Ok(out)
}

/// Backward pass for a single output channel: axpy updates per output pixel
/// instead of degenerate n = 1 gemms.
fn conv2d_backward_single(input: &Tensor, layer: &Conv2DLayer, grad_out: &Tensor) -> ConvGrads {
    let (n, h, w, cin) = input.dims();
    let (kh, kw, _, _) = layer.kernel.dims();
    let (ph, pw) = (layer.pad_h, layer.pad_w);
    let kernel = layer.kernel.data();
    let in_data = input.data();
    let go = grad_out.data();

    let grad_bias = vec![go.iter().sum::<f64>()];
    let mut grad_input = Tensor::zeros([n, h, w, cin]);
    let per_sample: Vec<Vec<f64>> = grad_input
        .data_mut()
        .par_chunks_mut(h * w * cin)
        .enumerate()
        .map(|(s, gin_s)| {
            let sample = &in_data[s * h * w * cin..(s + 1) * h * w * cin];
            let go_s = &go[s * h * w..(s + 1) * h * w];
            let mut gk_s = vec![0.0; kh * kw * cin];
            gin_s.fill(0.0);
            for y in 0..h {
                for x in 0..w {
                    let g = go_s[y * w + x];
                    for dy in 0..kh {
                        let iy = y + dy;
                        if iy < ph || iy >= h + ph {
                            continue;
                        }
                        let iy = iy - ph;
                        for dx in 0..kw {
                            let ix = x + dx;
                            if ix < pw || ix >= w + pw {
                                continue;
                            }
                            let ix = ix - pw;
                            let base = (iy * w + ix) * cin;
                            let tap = (dy * kw + dx) * cin;
                            for c in 0..cin {
                                gin_s[base + c] += g * kernel[tap + c];
                                gk_s[tap + c] += g * sample[base + c];
                            }
                        }
                    }
                }
            }
            gk_s
        })
        .collect();

    let mut grad_kernel = Tensor::zeros([kh, kw, cin, 1]);
    for gk_s in &per_sample {
        for (a, b) in grad_kernel.data_mut().iter_mut().zip(gk_s) {
            *a += b;
        }
    }
    ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    }
}

/// Exact partial derivatives of `sum(grad_out * conv2d_forward(input))` with
/// respect to the input, the kernel, and the bias.
pub fn conv2d_backward(input: &Tensor, layer: &Conv2DLayer, grad_out: &Tensor) -> Result<ConvGrads> {
    check_channels(input, layer)?;
    let (n, h, w, cin) = input.dims();
    let (kh, kw, _, cout) = layer.kernel.dims();
    if grad_out.shape() != [n, h, w, cout] {
        return Err(Error::shape(
            "conv2d grad_out vs forward output",
            &grad_out.shape(),
            &[n, h, w, cout],
        ));
    }
    if cout == 1 {
        return Ok(conv2d_backward_single(input, layer, grad_out));
    }
    let k = kh * kw * cin;
    let m = h * w;
    let in_data = input.data();
    let go = grad_out.data();

    let mut grad_bias = vec![0.0; cout];
    for px in go.chunks(cout) {
        for (b, g) in grad_bias.iter_mut().zip(px) {
            *b += g;
        }
    }

    // Per-sample kernel gradients, reduced sequentially in sample order so
    // the result is independent of the thread count.
    let per_sample: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let sample = &in_data[s * m * cin..(s + 1) * m * cin];
            let go_s = &go[s * m * cout..(s + 1) * m * cout];
            let mut gk_s = vec![0.0; k * cout];
            with_col_buffer(m * k, |col| {
                im2col(sample, h, w, cin, kh, kw, col);
                // gk_s[K x cout] = col^T [K x M] * go_s [M x cout]
                unsafe {
                    matrixmultiply::dgemm(
                        k,
                        m,
                        cout,
                        1.0,
                        col.as_ptr(),
                        1,
                        k as isize,
                        go_s.as_ptr(),
                        cout as isize,
                        1,
                        0.0,
                        gk_s.as_mut_ptr(),
                        cout as isize,
                        1,
                    );
                }
            });
            gk_s
        })
        .collect();

    let mut grad_kernel = Tensor::zeros([kh, kw, cin, cout]);
    for gk_s in &per_sample {
        for (a, b) in grad_kernel.data_mut().iter_mut().zip(gk_s) {
            *a += b;
        }
    }

    // grad_input is itself a same-padded convolution of grad_out with the
    // spatially flipped, channel-transposed kernel.
    let flipped = Conv2DLayer::new(flipped_kernel(&layer.kernel), vec![0.0; cin])?;
    let grad_input = conv2d_forward(grad_out, &flipped)?;

    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}
