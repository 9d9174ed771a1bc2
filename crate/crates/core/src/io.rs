//! Raster file I/O. Only lossless formats are accepted; everything is
//! written as 16-bit PNG through an atomic write-then-rename so partial
//! files never appear under their final name.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Image, TransmissionMap};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::process;
use std::sync::atomic::{AtomicU64, Ordering};

const U16_MAX: f64 = 65535.0;

/// Quantizes a unit-interval value to 16 bits (round to nearest).
pub fn quant16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * U16_MAX).round() as u16
}

/// Inverse of [`quant16`].
pub fn dequant16(q: u16) -> f64 {
    q as f64 / U16_MAX
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::ImageFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn reject_lossy(path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if matches!(ext.as_str(), "jpg" | "jpeg" | "webp" | "gif") {
        return Err(image_err(
            path,
            format!("lossy/limited format .{ext} is not supported; use a lossless raster (png/pgm/ppm)"),
        ));
    }
    Ok(())
}

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename). Parent directories must already exist.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let file_name = path
        .file_name()
        .and_then(|f| f.to_str())
        .ok_or_else(|| Error::invalid(format!("invalid output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{file_name}.{}.{}.tmp", process::id(), n));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Decodes a lossless raster file into a unit-interval image. Gray inputs
/// become 1-channel, color inputs 3-channel; an alpha channel, if present,
/// is dropped.
pub fn read_image(path: &Path) -> Result<Image> {
    reject_lossy(path)?;
    let dynamic = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match dynamic {
        DynamicImage::ImageLuma8(buf) => {
            (1, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => {
            (1, buf.into_raw().iter().map(|&v| dequant16(v)).collect())
        }
        DynamicImage::ImageLumaA8(buf) => (
            1,
            buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageLumaA16(buf) => (1, buf.pixels().map(|p| dequant16(p.0[0])).collect()),
        DynamicImage::ImageRgb8(buf) => {
            (3, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageRgb16(buf) => {
            (3, buf.into_raw().iter().map(|&v| dequant16(v)).collect())
        }
        other => {
            let buf = other.to_rgb16();
            (3, buf.into_raw().iter().map(|&v| dequant16(v)).collect())
        }
    };
    Image::new(h, w, channels, data)
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let (h, w) = (img.height() as u32, img.width() as u32);
    let mut bytes = Vec::new();
    let mut cursor = Cursor::new(&mut bytes);
    match img.channels() {
        1 => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, img.data().iter().map(|&v| quant16(v)).collect())
                    .expect("buffer length matches dimensions");
            DynamicImage::ImageLuma16(buf)
                .write_to(&mut cursor, image::ImageFormat::Png)
                .map_err(|e| Error::invalid(format!("png encode failed: {e}")))?;
        }
        _ => {
            let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, img.data().iter().map(|&v| quant16(v)).collect())
                    .expect("buffer length matches dimensions");
            DynamicImage::ImageRgb16(buf)
                .write_to(&mut cursor, image::ImageFormat::Png)
                .map_err(|e| Error::invalid(format!("png encode failed: {e}")))?;
        }
    }
    Ok(bytes)
}

/// Writes an image as 16-bit PNG (grayscale or RGB by channel count).
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    atomic_write(path, &encode_png(img)?)
}

/// Writes a transmission map as 16-bit grayscale PNG.
pub fn write_transmission(path: &Path, tr: &TransmissionMap) -> Result<()> {
    write_image(path, &tr.to_gray_image())
}

/// Reads a transmission map stored as a grayscale raster; color inputs are
/// reduced to luma.
pub fn read_transmission(path: &Path) -> Result<TransmissionMap> {
    let img = read_image(path)?;
    TransmissionMap::new(img.height(), img.width(), img.luma())
}

/// Reads a depth map: either a single-channel raster (values mapped to
/// [0, 1]) or a plain-text grid of whitespace-separated nonnegative reals,
/// one row per line.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ext == "txt" {
        return read_depth_text(path);
    }
    let img = read_image(path)?;
    DepthMap::new(img.height(), img.width(), img.luma())
}

fn read_depth_text(path: &Path) -> Result<DepthMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                image_err(
                    path,
                    format!("line {}: '{tok}' is not a number", line_no + 1),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(image_err(path, "depth grid is empty"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(image_err(path, "depth grid rows have unequal lengths"));
    }
    let height = rows.len();
    DepthMap::new(height, width, rows.concat())
}
