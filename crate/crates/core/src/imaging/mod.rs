//! Pixel buffers and the handful of operations the pipeline needs.
//!
//! Samples are kept as `f64` in 8-bit scale (0..=255) and only rounded and
//! clamped when encoding to a file.

mod filter;
mod laplacian;
mod resize;

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use thiserror::Error;

use crate::boxgeom::SquareCrop;

pub use filter::{
    convolve, gaussian_blur, gaussian_kernel, gaussian_taps, separable, Border, Kernel,
};
pub use laplacian::{laplacian_kernel, laplacian_variance, population_variance};
pub use resize::{half_size, resize, resize_to, ResizeFilter};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("crop {rect:?} outside {width}x{height} image")]
    OutOfBounds {
        rect: (f64, f64, f64),
        width: usize,
        height: usize,
    },
    #[error("expected a square image, got {width}x{height}")]
    NotSquare { width: usize, height: usize },
    #[error("expected a single-channel image, got {0} channels")]
    NotGray(usize),
    #[error("decoding {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("encoding image: {0}")]
    Encode(#[source] image::ImageError),
    #[error("writing {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major interleaved image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidBuffer(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImagingError::InvalidBuffer(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(ImagingError::InvalidBuffer(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("valid dimensions")
    }

    /// Single-channel image from a function of `(x, y)`.
    pub fn gray_from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data).expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// One channel as a gray image.
    pub fn channel(&self, c: usize) -> ImageBuffer {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ImageBuffer::new(self.width, self.height, 1, data).expect("valid dimensions")
    }

    /// Rebuild an interleaved image from per-channel planes of equal size.
    pub fn from_channels(planes: &[ImageBuffer]) -> Result<ImageBuffer, ImagingError> {
        let first = planes
            .first()
            .ok_or_else(|| ImagingError::InvalidBuffer("no channels".into()))?;
        if planes
            .iter()
            .any(|p| p.channels != 1 || p.width != first.width || p.height != first.height)
        {
            return Err(ImagingError::InvalidBuffer("mismatched planes".into()));
        }
        let n = first.width * first.height;
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        ImageBuffer::new(first.width, first.height, planes.len(), data)
    }

    /// Apply a single-channel operation to every channel.
    pub fn map_channels<F>(&self, f: F) -> Result<ImageBuffer, ImagingError>
    where
        F: Fn(&ImageBuffer) -> Result<ImageBuffer, ImagingError>,
    {
        if self.channels == 1 {
            return f(self);
        }
        let planes = (0..self.channels)
            .map(|c| f(&self.channel(c)))
            .collect::<Result<Vec<_>, _>>()?;
        ImageBuffer::from_channels(&planes)
    }

    /// Round and clamp every sample to the 8-bit grid.
    pub fn quantized(&self) -> ImageBuffer {
        let data = self.data.iter().map(|&v| quantize(v) as f64).collect();
        ImageBuffer::new(self.width, self.height, self.channels, data).expect("same dimensions")
    }

    pub fn from_dynamic(img: &DynamicImage) -> ImageBuffer {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                let data = g.as_raw().iter().map(|&v| f64::from(v)).collect();
                ImageBuffer::new(w as usize, h as usize, 1, data).expect("decoded dimensions")
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                let data = rgb.as_raw().iter().map(|&v| f64::from(v)).collect();
                ImageBuffer::new(w as usize, h as usize, 3, data).expect("decoded dimensions")
            }
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let raw: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("sized buffer"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("sized buffer"))
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<ImageBuffer, ImagingError> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| ImagingError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        Ok(ImageBuffer::from_dynamic(&img))
    }

    pub fn decode(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
        let img = image::load_from_memory(bytes).map_err(|source| ImagingError::Decode {
            path: "<memory>".into(),
            source,
        })?;
        Ok(ImageBuffer::from_dynamic(&img))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(ImagingError::Encode)?;
        Ok(out.into_inner())
    }

    /// Write as PNG or JPEG depending on the extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        let path = path.as_ref();
        self.to_dynamic().save(path).map_err(|e| match e {
            image::ImageError::IoError(source) => ImagingError::Write {
                path: path.display().to_string(),
                source,
            },
            other => ImagingError::Encode(other),
        })
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 luma. Gray input is returned unchanged.
pub fn to_luma(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
        .collect();
    ImageBuffer::new(img.width, img.height, 1, data).expect("same dimensions")
}

/// Copy an integer-aligned rectangle.
pub fn crop_rect(
    img: &ImageBuffer,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Result<ImageBuffer, ImagingError> {
    if w == 0 || h == 0 || x + w > img.width || y + h > img.height {
        return Err(ImagingError::OutOfBounds {
            rect: (x as f64, y as f64, w.max(h) as f64),
            width: img.width,
            height: img.height,
        });
    }
    let ch = img.channels;
    let mut data = Vec::with_capacity(w * h * ch);
    for row in y..y + h {
        let start = (row * img.width + x) * ch;
        data.extend_from_slice(&img.data[start..start + w * ch]);
    }
    ImageBuffer::new(w, h, ch, data)
}

/// Copy the pixels under a square crop. Fractional crop coordinates are
/// snapped to the pixel grid.
pub fn crop(img: &ImageBuffer, rect: &SquareCrop) -> Result<ImageBuffer, ImagingError> {
    const SLACK: f64 = 1e-6;
    let (w, h) = (img.width as f64, img.height as f64);
    if rect.x < -SLACK
        || rect.y < -SLACK
        || rect.x + rect.side > w + SLACK
        || rect.y + rect.side > h + SLACK
    {
        return Err(ImagingError::OutOfBounds {
            rect: (rect.x, rect.y, rect.side),
            width: img.width,
            height: img.height,
        });
    }
    let (x, y, side) = rect.pixel_rect(img.width as u32, img.height as u32);
    crop_rect(img, x as usize, y as usize, side as usize, side as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::BBox;

    fn ramp(n: usize) -> ImageBuffer {
        ImageBuffer::gray_from_fn(n, n, |x, y| (y * n + x) as f64)
    }

    fn square(x: f64, y: f64, side: f64) -> SquareCrop {
        SquareCrop {
            x,
            y,
            side,
            source_box: BBox::new(x, y, side, side),
            center_distance: 0.0,
        }
    }

    #[test]
    fn luma_of_white_and_red() {
        let white = ImageBuffer::filled(1, 1, 3, 255.0);
        assert!((to_luma(&white).data()[0] - 255.0).abs() < 1e-9);
        let red = ImageBuffer::new(1, 1, 3, vec![255.0, 0.0, 0.0]).unwrap();
        assert!((to_luma(&red).data()[0] - 76.245).abs() < 1e-9);
    }

    #[test]
    fn luma_of_gray_is_identity() {
        let g = ramp(4);
        assert_eq!(to_luma(&g), g);
    }

    #[test]
    fn full_crop_is_identity() {
        let img = ramp(4);
        assert_eq!(crop(&img, &square(0.0, 0.0, 4.0)).unwrap(), img);
    }

    #[test]
    fn corner_crop_of_ramp() {
        let img = ramp(4);
        let c = crop(&img, &square(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(c.data(), &[0.0, 1.0, 4.0, 5.0]);
    }

    #[test]
    fn crop_of_full_crop_is_idempotent() {
        let img = ramp(5);
        let once = crop(&img, &square(0.0, 0.0, 5.0)).unwrap();
        let twice = crop(&once, &square(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn nested_crops_compose() {
        let img = ramp(10);
        let outer = crop(&img, &square(2.0, 3.0, 6.0)).unwrap();
        let inner = crop(&outer, &square(1.0, 2.0, 3.0)).unwrap();
        let direct = crop(&img, &square(3.0, 5.0, 3.0)).unwrap();
        assert_eq!(inner, direct);
    }

    #[test]
    fn out_of_bounds_crop_fails() {
        let img = ramp(4);
        assert!(matches!(
            crop(&img, &square(2.0, 0.0, 3.0)),
            Err(ImagingError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn buffer_invariants() {
        assert!(ImageBuffer::new(0, 3, 1, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 3, vec![0.0; 11]).is_err());
    }

    #[test]
    fn png_round_trip_quantizes() {
        let img = ImageBuffer::gray_from_fn(3, 2, |x, y| x as f64 * 10.4 + y as f64 * 300.0);
        let back = ImageBuffer::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img.quantized());
    }
}
