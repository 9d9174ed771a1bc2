//! Raster domain types: images, transmission maps, depth maps, and the
//! global airlight color. Pixel data is row-major with interleaved channels
//! and lives in the unit interval (depth excepted).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// H x W x C raster of unit-interval intensities, C in {1, 3}.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                "image intensities must lie in [0, 1] and be finite",
            ));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Per-pixel minimum over the color channels.
    pub fn channel_min(&self) -> Vec<f64> {
        self.data
            .chunks(self.channels)
            .map(|px| px.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Rec. 601 luma (0.299, 0.587, 0.114); identity for grayscale images.
    pub fn luma(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks(3)
            .map(|px| 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2])
            .collect()
    }

    /// Copies into a batch-1 tensor of shape [1, H, W, C].
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.height, self.width, self.channels], self.data.clone())
            .expect("image data length is validated at construction")
    }

    /// Axis-aligned crop; the window must lie inside the image.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid(format!(
                "crop {}x{}+{}+{} exceeds image {}x{}",
                height, width, top, left, self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in top..top + height {
            let row = (y * self.width + left) * self.channels;
            data.extend_from_slice(&self.data[row..row + width * self.channels]);
        }
        Image::new(height, width, self.channels, data)
    }
}

/// H x W map of per-pixel transmission values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl TransmissionMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "transmission data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::invalid("transmission values must lie in [0, 1]"));
        }
        Ok(TransmissionMap {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        TransmissionMap::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.height, self.width, 1], self.data.clone())
            .expect("transmission data length is validated at construction")
    }

    /// Reinterprets a [1, H, W, 1] tensor as a transmission map.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (n, h, w, c) = t.dims();
        if n != 1 || c != 1 {
            return Err(Error::shape(
                "transmission from tensor",
                &t.shape(),
                &[1, h, w, 1],
            ));
        }
        TransmissionMap::new(h, w, t.data().to_vec())
    }

    /// Grayscale image view (same data, 1 channel).
    pub fn to_gray_image(&self) -> Image {
        Image::new(self.height, self.width, 1, self.data.clone())
            .expect("transmission values are unit-interval by construction")
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid("transmission crop exceeds map bounds"));
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            data.extend_from_slice(&self.data[y * self.width + left..y * self.width + left + width]);
        }
        TransmissionMap::new(height, width, data)
    }
}

/// Scene depth per pixel; nonnegative finite values in arbitrary consistent
/// units.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "depth data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if !data.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("depth values must be finite and >= 0"));
        }
        Ok(DepthMap {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Depth rescaled so the maximum is 1 (identity on an all-zero map).
    pub fn normalized(&self) -> DepthMap {
        let max = self.data.iter().copied().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return self.clone();
        }
        DepthMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v / max).collect(),
        }
    }
}

/// Global atmospheric light; each channel in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Airlight(pub [f64; 3]);

impl Airlight {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if !rgb.iter().all(|v| v.is_finite() && *v > 0.0 && *v <= 1.0) {
            return Err(Error::invalid(format!(
                "airlight components must lie in (0, 1], got {rgb:?}"
            )));
        }
        Ok(Airlight(rgb))
    }

    pub fn gray(value: f64) -> Result<Self> {
        Airlight::new([value, value, value])
    }

    pub fn channel(&self, c: usize) -> f64 {
        self.0[c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_validates_range_and_channels() {
        assert!(Image::new(2, 2, 3, vec![0.5; 12]).is_ok());
        assert!(Image::new(2, 2, 2, vec![0.5; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![1.5; 4]).is_err());
        assert!(Image::new(2, 2, 1, vec![f64::NAN; 4]).is_err());
        assert!(Image::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn crop_round_trip() {
        let img = Image::new(
            3,
            3,
            1,
            (0..9).map(|v| v as f64 / 10.0).collect(),
        )
        .unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[0.4, 0.5, 0.7, 0.8]);
        assert!(img.crop(2, 2, 2, 2).is_err());
    }

    #[test]
    fn depth_normalization() {
        let d = DepthMap::new(1, 3, vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(d.normalized().data(), &[0.0, 0.5, 1.0]);
        let z = DepthMap::new(1, 2, vec![0.0, 0.0]).unwrap();
        assert_eq!(z.normalized().data(), &[0.0, 0.0]);
        assert!(DepthMap::new(1, 2, vec![-1.0, 0.0]).is_err());
    }

    #[test]
    fn airlight_bounds() {
        assert!(Airlight::new([0.8, 0.8, 0.8]).is_ok());
        assert!(Airlight::new([0.0, 0.5, 0.5]).is_err());
        assert!(Airlight::new([1.1, 0.5, 0.5]).is_err());
    }

    #[test]
    fn luma_weights() {
        let img = Image::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((img.luma()[0] - 0.299).abs() < 1e-15);
    }
}
