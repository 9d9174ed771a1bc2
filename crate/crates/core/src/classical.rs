//! Classical dark-channel-prior dehazing: dark channel, airlight estimation,
//! transmission estimation, and scene recovery by inverting the optical
//! model `I = R*Tr + A*(1 - Tr)`.

use crate::error::{Error, Result};
use crate::raster::{Airlight, Image, TransmissionMap};

/// Patch size for the minimum filters.
pub const DEFAULT_PATCH: usize = 15;
/// Fraction of brightest dark-channel pixels used for the airlight.
pub const DEFAULT_FRACTION: f64 = 0.001;
/// Haze retention constant in the transmission estimate.
pub const DEFAULT_ETA: f64 = 0.95;
/// Lower bound on transmission during recovery.
pub const DEFAULT_T_FLOOR: f64 = 0.1;

/// Per-pixel double minimum (over a local patch and over the color
/// channels) of an image's intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct DarkChannel {
    height: usize,
    width: usize,
    patch_size: usize,
    data: Vec<f64>,
}

impl DarkChannel {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Separable windowed minimum with the window clamped to the image bounds
/// (no padding values participate, so border minima stay honest).
fn window_min(plane: &[f64], h: usize, w: usize, radius: usize) -> Vec<f64> {
    let mut rows = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            let mut best = f64::INFINITY;
            for wx in x0..=x1 {
                best = best.min(plane[y * w + wx]);
            }
            rows[y * w + x] = best;
        }
    }
    let mut out = vec![0.0f64; h * w];
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for x in 0..w {
            let mut best = f64::INFINITY;
            for wy in y0..=y1 {
                best = best.min(rows[wy * w + x]);
            }
            out[y * w + x] = best;
        }
    }
    out
}

fn check_patch(patch_size: usize) -> Result<usize> {
    if patch_size == 0 || patch_size % 2 == 0 {
        return Err(Error::invalid(format!(
            "patch size must be odd and >= 1, got {patch_size}"
        )));
    }
    Ok(patch_size / 2)
}

fn check_rgb(img: &Image, what: &str) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "{what} requires a 3-channel image, got {} channel(s)",
            img.channels()
        )));
    }
    Ok(())
}

/// D(x) = min over the patch centered at x of the per-pixel channel minimum.
pub fn dark_channel(img: &Image, patch_size: usize) -> Result<DarkChannel> {
    let radius = check_patch(patch_size)?;
    check_rgb(img, "dark_channel")?;
    let plane = img.channel_min();
    let data = window_min(&plane, img.height(), img.width(), radius);
    Ok(DarkChannel {
        height: img.height(),
        width: img.width(),
        patch_size,
        data,
    })
}

/// Mean hazy intensity per channel over the `ceil(fraction * H * W)` pixels
/// with the brightest dark-channel values; ties broken toward smaller
/// row-major index.
pub fn estimate_airlight(img: &Image, dark: &DarkChannel, fraction: f64) -> Result<Airlight> {
    check_rgb(img, "estimate_airlight")?;
    if img.height() != dark.height || img.width() != dark.width {
        return Err(Error::shape(
            "estimate_airlight image vs dark channel",
            &[img.height(), img.width()],
            &[dark.height, dark.width],
        ));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let pixels = img.height() * img.width();
    if pixels == 0 {
        return Err(Error::invalid("cannot estimate airlight on an empty image"));
    }
    let mut order: Vec<usize> = (0..pixels).collect();
    order.sort_by(|&a, &b| {
        dark.data[b]
            .partial_cmp(&dark.data[a])
            .expect("dark channel values are finite")
            .then_with(|| a.cmp(&b))
    });
    let k = ((fraction * pixels as f64).ceil() as usize).clamp(1, pixels);
    let mut acc = [0.0f64; 3];
    for &i in order.iter().take(k) {
        let (y, x) = (i / img.width(), i % img.width());
        for (c, a) in acc.iter_mut().enumerate() {
            *a += img.at(y, x, c);
        }
    }
    Airlight::new([acc[0] / k as f64, acc[1] / k as f64, acc[2] / k as f64])
}

/// Tr(x) = 1 - eta * min_c min_patch (I_c / A_c), clamped to [0, 1]; patch
/// handling identical to the dark channel.
pub fn estimate_transmission(
    img: &Image,
    air: &Airlight,
    eta: f64,
    patch_size: usize,
) -> Result<TransmissionMap> {
    let radius = check_patch(patch_size)?;
    check_rgb(img, "estimate_transmission")?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!(
            "eta must lie in (0, 1], got {eta}"
        )));
    }
    // Airlight construction already guarantees components > 0; re-check so a
    // hand-built value cannot divide by zero.
    if air.0.iter().any(|&a| a <= 0.0) {
        return Err(Error::invalid(format!(
            "airlight components must be positive, got {:?}",
            air.0
        )));
    }
    let (h, w) = (img.height(), img.width());
    let plane: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            (img.at(y, x, 0) / air.0[0])
                .min(img.at(y, x, 1) / air.0[1])
                .min(img.at(y, x, 2) / air.0[2])
        })
        .collect();
    let data = window_min(&plane, h, w, radius)
        .into_iter()
        .map(|m| (1.0 - eta * m).clamp(0.0, 1.0))
        .collect();
    TransmissionMap::new(h, w, data)
}

/// Inverts the optical model: R_c = (I_c - A_c) / max(Tr, t_floor) + A_c,
/// clamped to [0, 1].
pub fn recover_scene(
    img: &Image,
    tr: &TransmissionMap,
    air: &Airlight,
    t_floor: f64,
) -> Result<Image> {
    check_rgb(img, "recover_scene")?;
    if img.height() != tr.height() || img.width() != tr.width() {
        return Err(Error::shape(
            "recover_scene image vs transmission",
            &[img.height(), img.width()],
            &[tr.height(), tr.width()],
        ));
    }
    if !(t_floor > 0.0 && t_floor < 1.0) {
        return Err(Error::invalid(format!(
            "t_floor must lie in (0, 1), got {t_floor}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let t = tr.at(y, x).max(t_floor);
            for c in 0..3 {
                let r = (img.at(y, x, c) - air.0[c]) / t + air.0[c];
                data.push(r.clamp(0.0, 1.0));
            }
        }
    }
    Image::new(h, w, 3, data)
}

/// The full pipeline with default parameters: dark channel (patch 15),
/// airlight (brightest 0.1%), transmission (eta 0.95), recovery (floor 0.1).
pub fn dehaze_classical(img: &Image) -> Result<(Image, TransmissionMap, Airlight)> {
    let dark = dark_channel(img, DEFAULT_PATCH)?;
    let air = estimate_airlight(img, &dark, DEFAULT_FRACTION)?;
    let tr = estimate_transmission(img, &air, DEFAULT_ETA, DEFAULT_PATCH)?;
    let recovered = recover_scene(img, &tr, &air, DEFAULT_T_FLOOR)?;
    Ok((recovered, tr, air))
}
