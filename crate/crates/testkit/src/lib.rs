//! Reference oracles for the dehaze test suites.
//!
//! Everything in here is written as the most literal nested-loop translation
//! of the underlying definition, on plain slices, so it shares no code with
//! the optimized implementations it is used to check. Keep it slow and
//! obviously correct.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded RNG used by every test that needs random data.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Vector of `len` uniform samples from `[lo, hi)`.
pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Direct six-nested-loop convolution, NHWC input, (kh, kw, cin, cout)
/// kernel, stride 1, zero same-padding. The definition, verbatim.
#[allow(clippy::too_many_arguments)]
pub fn direct_conv2d(
    input: &[f64],
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    cout: usize,
    bias: &[f64],
) -> Vec<f64> {
    assert_eq!(input.len(), n * h * w * cin);
    assert_eq!(kernel.len(), kh * kw * cin * cout);
    assert_eq!(bias.len(), cout);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = vec![0.0; n * h * w * cout];
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for o in 0..cout {
                    let mut acc = bias[o];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = y as isize + dy as isize - ph as isize;
                            let ix = x as isize + dx as isize - pw as isize;
                            if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                continue; // zero padding
                            }
                            for c in 0..cin {
                                let iv = input
                                    [((b * h + iy as usize) * w + ix as usize) * cin + c];
                                let kv = kernel[((dy * kw + dx) * cin + c) * cout + o];
                                acc += iv * kv;
                            }
                        }
                    }
                    out[((b * h + y) * w + x) * cout + o] = acc;
                }
            }
        }
    }
    out
}

/// Windowed maximum with boundary exclusion: per channel, the max over the
/// `window`-sized square centered at each pixel, clipped to the image.
pub fn window_max(input: &[f64], n: usize, h: usize, w: usize, c: usize, window: usize) -> Vec<f64> {
    assert_eq!(input.len(), n * h * w * c);
    let r = window / 2;
    let mut out = vec![0.0; input.len()];
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    for wy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                        for wx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                            let v = input[((b * h + wy) * w + wx) * c + ch];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out[((b * h + y) * w + x) * c + ch] = best;
                }
            }
        }
    }
    out
}

/// Windowed minimum with boundary clamping, single-channel plane.
pub fn window_min_plane(plane: &[f64], h: usize, w: usize, window: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w);
    let r = window / 2;
    let mut out = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for wy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for wx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    best = best.min(plane[wy * w + wx]);
                }
            }
            out[y * w + x] = best;
        }
    }
    out
}

/// Dark channel by the double-minimum definition: min over the patch window
/// (clamped at borders) of the per-pixel channel minimum.
pub fn dark_channel_oracle(img: &[f64], h: usize, w: usize, patch: usize) -> Vec<f64> {
    assert_eq!(img.len(), h * w * 3);
    let plane: Vec<f64> = (0..h * w)
        .map(|i| img[i * 3].min(img[i * 3 + 1]).min(img[i * 3 + 2]))
        .collect();
    window_min_plane(&plane, h, w, patch)
}

/// Transmission by the definition: 1 - eta * min_c min_patch (I_c / A_c),
/// clamped to [0, 1], border windows clamped like the dark channel.
pub fn transmission_oracle(
    img: &[f64],
    h: usize,
    w: usize,
    air: [f64; 3],
    eta: f64,
    patch: usize,
) -> Vec<f64> {
    assert_eq!(img.len(), h * w * 3);
    let plane: Vec<f64> = (0..h * w)
        .map(|i| {
            (img[i * 3] / air[0])
                .min(img[i * 3 + 1] / air[1])
                .min(img[i * 3 + 2] / air[2])
        })
        .collect();
    window_min_plane(&plane, h, w, patch)
        .into_iter()
        .map(|m| (1.0 - eta * m).clamp(0.0, 1.0))
        .collect()
}

/// Airlight by sort-and-average: the mean hazy intensity per channel over the
/// ceil(fraction * H * W) pixels with the largest dark-channel values, ties
/// broken toward smaller row-major index.
pub fn airlight_oracle(img: &[f64], h: usize, w: usize, dark: &[f64], fraction: f64) -> [f64; 3] {
    assert_eq!(img.len(), h * w * 3);
    assert_eq!(dark.len(), h * w);
    let mut order: Vec<usize> = (0..h * w).collect();
    order.sort_by(|&a, &b| {
        dark[b]
            .partial_cmp(&dark[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    let k = ((fraction * (h * w) as f64).ceil() as usize).max(1);
    let mut acc = [0.0f64; 3];
    for &i in order.iter().take(k) {
        for c in 0..3 {
            acc[c] += img[i * 3 + c];
        }
    }
    [acc[0] / k as f64, acc[1] / k as f64, acc[2] / k as f64]
}

/// Central finite difference of `f` at `x` along one coordinate, using the
/// caller's mutable access to that coordinate.
pub fn central_difference<F>(mut f: F, x: f64, eps: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Relative error with an absolute floor so that near-zero pairs compare
/// sensibly.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}

/// Mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// PSNR on unit-range data, by the definition.
pub fn psnr_oracle(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// A smooth low-frequency scalar field in [0, 1], used to build depth maps
/// and textured scenes. Sum of a few random sinusoids, normalized.
pub fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    let mut comps = Vec::new();
    for _ in 0..4 {
        let fy = rng.gen_range(0.5..2.5);
        let fx = rng.gen_range(0.5..2.5);
        let py = rng.gen_range(0.0..std::f64::consts::TAU);
        let px = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.3..1.0);
        comps.push((fy, fx, py, px, amp));
    }
    let mut field = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (y as f64 / h as f64, x as f64 / w as f64);
            let mut s = 0.0;
            for &(fy, fx, py, px, amp) in &comps {
                s += amp * (std::f64::consts::TAU * (fy * u + py / std::f64::consts::TAU)).sin()
                    * (std::f64::consts::TAU * (fx * v + px / std::f64::consts::TAU)).cos();
            }
            field[y * w + x] = s;
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &field {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    field.iter_mut().for_each(|v| *v = (*v - lo) / span);
    field
}

/// A textured haze-free scene: smooth per-channel base colors modulated by a
/// sharp random texture so that most local patches contain near-dark pixels
/// (the regime in which dark-channel-style haze estimation is informative).
pub fn textured_scene(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    let base: Vec<Vec<f64>> = (0..3).map(|_| smooth_field(rng, h, w)).collect();
    let mut img = vec![0.0; h * w * 3];
    for i in 0..h * w {
        // Texture multiplier heavy-tailed toward zero: u^2 keeps dark pixels frequent.
        let t = {
            let u: f64 = rng.gen_range(0.0..1.0);
            u * u
        };
        for c in 0..3 {
            img[i * 3 + c] = (0.15 + 0.85 * base[c][i]) * t;
        }
    }
    img
}
