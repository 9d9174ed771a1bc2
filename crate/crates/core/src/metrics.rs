//! Full-reference image quality metrics (MSE, PSNR, SSIM) and wall-clock
//! benchmarking of dehazing methods.

use crate::error::{Error, Result};
use crate::raster::Image;
use std::time::Instant;

/// SSIM parameters. Defaults are the canonical ones: 11x11 Gaussian window
/// with sigma 1.5, K1 = 0.01, K2 = 0.03 over unit dynamic range, color
/// reduced to Rec. 601 luma.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

fn check_dims(a: &Image, b: &Image, context: &'static str) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::shape(
            context,
            &[a.height(), a.width(), a.channels()],
            &[b.height(), b.width(), b.channels()],
        ));
    }
    Ok(())
}

/// Mean over all pixels and channels of the squared difference.
pub fn mse_image(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b, "mse_image")?;
    let mut sum = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        sum += d * d;
    }
    Ok(sum / a.data().len() as f64)
}

/// 10 * log10(1 / mse) on unit dynamic range; +infinity for identical
/// images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = mse_image(a, b)?;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    let mut w = Vec::with_capacity(size * size);
    for y in -r..=r {
        for x in -r..=r {
            w.push((-((y * y + x * x) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Mean local SSIM with the given configuration; windows are evaluated only
/// where they fit entirely inside the image.
pub fn ssim_with(a: &Image, b: &Image, cfg: &SsimConfig) -> Result<f64> {
    check_dims(a, b, "ssim")?;
    if cfg.window % 2 == 0 || cfg.window == 0 {
        return Err(Error::invalid(format!(
            "ssim window must be odd, got {}",
            cfg.window
        )));
    }
    let (h, w) = (a.height(), a.width());
    if h < cfg.window || w < cfg.window {
        return Err(Error::invalid(format!(
            "image {h}x{w} is smaller than the {0}x{0} ssim window",
            cfg.window
        )));
    }
    let la = a.luma();
    let lb = b.luma();
    let weights = gaussian_window(cfg.window, cfg.sigma);
    let c1 = cfg.k1 * cfg.k1;
    let c2 = cfg.k2 * cfg.k2;
    let win = cfg.window;

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - win {
        for x0 in 0..=w - win {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            let mut wi = 0;
            for dy in 0..win {
                let row = (y0 + dy) * w + x0;
                for dx in 0..win {
                    let wgt = weights[wi];
                    wi += 1;
                    let va = la[row + dx];
                    let vb = lb[row + dx];
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let val = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += val;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM with the default configuration.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimConfig::default())
}

/// Per-image metric record.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub path: String,
    pub ssim: f64,
    pub mse: f64,
    pub psnr: f64,
}

/// Per-image metrics plus their arithmetic means.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn mean_ssim(&self) -> f64 {
        self.rows.iter().map(|r| r.ssim).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_mse(&self) -> f64 {
        self.rows.iter().map(|r| r.mse).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_psnr(&self) -> f64 {
        self.rows.iter().map(|r| r.psnr).sum::<f64>() / self.rows.len() as f64
    }

    /// Machine-readable records: header plus one CSV row per image.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,ssim,mse,psnr\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.path, r.ssim, r.mse, r.psnr));
        }
        out
    }

    /// Human-readable summary lines.
    pub fn summary(&self) -> String {
        format!(
            "images: {}  mean ssim: {:.4}  mean mse: {:.6}  mean psnr: {:.4} dB",
            self.rows.len(),
            self.mean_ssim(),
            self.mean_mse(),
            self.mean_psnr()
        )
    }
}

/// Wall-clock statistics for one benchmarked image.
#[derive(Clone, Copy, Debug)]
pub struct TimingStat {
    pub mean_secs: f64,
    pub stddev_secs: f64,
}

/// Runs `method` `repeats` times on each image and reports per-image mean
/// and sample standard deviation of the wall-clock seconds.
pub fn bench_time<F>(mut method: F, images: &[Image], repeats: usize) -> Result<Vec<TimingStat>>
where
    F: FnMut(&Image) -> Result<()>,
{
    if repeats < 3 {
        return Err(Error::invalid(format!(
            "benchmark needs at least 3 repeats, got {repeats}"
        )));
    }
    let mut stats = Vec::with_capacity(images.len());
    for img in images {
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t0 = Instant::now();
            method(img)?;
            times.push(t0.elapsed().as_secs_f64());
        }
        let mean = times.iter().sum::<f64>() / repeats as f64;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (repeats - 1) as f64;
        stats.push(TimingStat {
            mean_secs: mean,
            stddev_secs: var.sqrt(),
        });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dehaze_testkit as tk;

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = tk::rng(seed);
        Image::new(h, w, 3, tk::uniform_vec(&mut rng, h * w * 3, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn mse_trivial_cases() {
        let a = random_image(1, 6, 6);
        assert_eq!(mse_image(&a, &a).unwrap(), 0.0);
        let b = Image::constant(4, 4, 3, 0.3).unwrap();
        let c = Image::constant(4, 4, 3, 0.4).unwrap();
        assert!((mse_image(&b, &c).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_direct_sum_oracle() {
        let a = random_image(2, 5, 7);
        let b = random_image(3, 5, 7);
        let direct: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.data().len() as f64;
        assert!((mse_image(&a, &b).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn mse_is_symmetric() {
        let a = random_image(4, 6, 6);
        let b = random_image(5, 6, 6);
        assert_eq!(mse_image(&a, &b).unwrap(), mse_image(&b, &a).unwrap());
    }

    #[test]
    fn psnr_of_constant_offset_is_twenty_db() {
        let a = Image::constant(8, 8, 3, 0.25).unwrap();
        let b = Image::constant(8, 8, 3, 0.35).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = random_image(6, 6, 6);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_from_paper_scale_mse() {
        // 10*log10(1/0.0239) from the identity, not a table lookup.
        let expect = 10.0 * (1.0f64 / 0.0239).log10();
        assert!((expect - 16.216).abs() < 1e-3);
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let base = Image::constant(8, 8, 3, 0.5).unwrap();
        let near = Image::constant(8, 8, 3, 0.52).unwrap();
        let far = Image::constant(8, 8, 3, 0.6).unwrap();
        assert!(psnr(&base, &near).unwrap() > psnr(&base, &far).unwrap());
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let a = random_image(7, 16, 16);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        // mu_a = 0, mu_b = 1, all variances zero:
        // ssim = (C1 * C2) / ((1 + C1) * C2) = C1 / (1 + C1).
        let a = Image::constant(12, 12, 1, 0.0).unwrap();
        let b = Image::constant(12, 12, 1, 1.0).unwrap();
        let c1 = 0.01f64 * 0.01;
        let expect = c1 / (1.0 + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = random_image(8, 14, 14);
        let b = random_image(9, 14, 14);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Image::constant(8, 8, 1, 0.5).unwrap();
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn metric_mse_agrees_with_loss_mse() {
        let a = random_image(10, 9, 9);
        let b = random_image(11, 9, 9);
        let m = mse_image(&a, &b).unwrap();
        let (l, _) = crate::nn::mse_loss(&a.to_tensor(), &b.to_tensor()).unwrap();
        assert!((m - l).abs() <= 1e-15);
    }

    #[test]
    fn bench_noop_is_fast_and_repeats_validated() {
        let imgs = vec![Image::constant(4, 4, 3, 0.5).unwrap()];
        let stats = bench_time(|_| Ok(()), &imgs, 5).unwrap();
        assert_eq!(stats.len(), 1);
        assert!(stats[0].mean_secs >= 0.0 && stats[0].mean_secs < 0.01);
        assert!(bench_time(|_| Ok(()), &imgs, 2).is_err());
    }

    #[test]
    fn report_csv_and_means() {
        let mut report = MetricReport::default();
        report.push(MetricRow {
            path: "a.png".into(),
            ssim: 1.0,
            mse: 0.0,
            psnr: f64::INFINITY,
        });
        report.push(MetricRow {
            path: "b.png".into(),
            ssim: 0.5,
            mse: 0.01,
            psnr: 20.0,
        });
        assert!((report.mean_ssim() - 0.75).abs() < 1e-15);
        let csv = report.to_csv();
        assert!(csv.starts_with("path,ssim,mse,psnr\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("inf"));
    }
}
