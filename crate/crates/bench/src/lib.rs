//! Input generators shared by the criterion benchmarks.

use dehaze_core::{Image, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random RGB image with unit-interval intensities.
pub fn random_image(seed: u64, h: usize, w: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
    Image::new(h, w, 3, data).expect("generated values are in range")
}

/// Random tensor with the given shape and value range.
pub fn random_tensor(seed: u64, shape: [usize; 4], lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::random_uniform(shape, lo, hi, &mut rng)
}
