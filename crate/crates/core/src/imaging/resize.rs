use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ImageBuffer, ImagingError};

/// Resampling kernel. Downscaling widens the kernel (antialiasing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    /// Keys cubic, a = −0.5.
    Bicubic,
    Lanczos3,
    Bilinear,
    /// Box kernel; with antialiasing this averages pixel areas.
    Area,
}

impl ResizeFilter {
    /// Lanczos3 when shrinking, bicubic otherwise.
    pub fn auto(from: usize, to: usize) -> Self {
        if to < from {
            ResizeFilter::Lanczos3
        } else {
            ResizeFilter::Bicubic
        }
    }

    fn support(self) -> f64 {
        match self {
            ResizeFilter::Bicubic => 4.0,
            ResizeFilter::Lanczos3 => 6.0,
            ResizeFilter::Bilinear => 2.0,
            ResizeFilter::Area => 1.0,
        }
    }

    fn eval(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            ResizeFilter::Bicubic => {
                let (a2, a3) = (ax * ax, ax * ax * ax);
                if ax <= 1.0 {
                    1.5 * a3 - 2.5 * a2 + 1.0
                } else if ax <= 2.0 {
                    -0.5 * a3 + 2.5 * a2 - 4.0 * ax + 2.0
                } else {
                    0.0
                }
            }
            ResizeFilter::Lanczos3 => {
                if ax < 3.0 {
                    sinc(x) * sinc(x / 3.0)
                } else {
                    0.0
                }
            }
            ResizeFilter::Bilinear => (1.0 - ax).max(0.0),
            ResizeFilter::Area => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Per output sample: source indices and normalized weights.
struct Contributions {
    taps: Vec<Vec<(usize, f64)>>,
}

/// Mirror with edge repetition (`dcba|abcd|dcba`).
fn symmetric_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

impl Contributions {
    fn new(in_len: usize, out_len: usize, filter: ResizeFilter) -> Self {
        let scale = out_len as f64 / in_len as f64;
        let (kscale, width) = if scale < 1.0 {
            (scale, filter.support() / scale)
        } else {
            (1.0, filter.support())
        };
        let p = width.ceil() as i64 + 2;
        let taps = (1..=out_len)
            .map(|x| {
                let u = x as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
                let left = (u - width / 2.0).floor() as i64;
                let mut raw: Vec<(i64, f64)> = (0..p)
                    .map(|k| {
                        let idx = left + k;
                        (idx, kscale * filter.eval(kscale * (u - idx as f64)))
                    })
                    .collect();
                let sum: f64 = raw.iter().map(|(_, w)| w).sum();
                raw.retain(|(_, w)| *w != 0.0);
                raw.into_iter()
                    .map(|(idx, w)| (symmetric_index(idx - 1, in_len), w / sum))
                    .collect()
            })
            .collect();
        Self { taps }
    }
}

fn resize_rows(src: &[f64], w: usize, h: usize, ch: usize, c: &Contributions) -> Vec<f64> {
    let out_h = c.taps.len();
    let stride = w * ch;
    let mut out = vec![0.0; out_h * stride];
    for (y, taps) in c.taps.iter().enumerate() {
        let dst = &mut out[y * stride..(y + 1) * stride];
        for &(sy, wt) in taps {
            debug_assert!(sy < h);
            let row = &src[sy * stride..(sy + 1) * stride];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += wt * s;
            }
        }
    }
    out
}

fn resize_cols(src: &[f64], w: usize, h: usize, ch: usize, c: &Contributions) -> Vec<f64> {
    let out_w = c.taps.len();
    let mut out = vec![0.0; out_w * h * ch];
    for y in 0..h {
        let row = &src[y * w * ch..(y + 1) * w * ch];
        let dst = &mut out[y * out_w * ch..(y + 1) * out_w * ch];
        for (x, taps) in c.taps.iter().enumerate() {
            for k in 0..ch {
                dst[x * ch + k] = taps.iter().map(|&(sx, wt)| wt * row[sx * ch + k]).sum();
            }
        }
    }
    out
}

/// Resize to `out_w`×`out_h` with separable MATLAB-style resampling
/// (symmetric borders, antialiased kernels when shrinking).
pub fn resize_to(
    img: &ImageBuffer,
    out_w: usize,
    out_h: usize,
    filter: ResizeFilter,
) -> Result<ImageBuffer, ImagingError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::InvalidBuffer(format!(
            "resize target {out_w}x{out_h}"
        )));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if (w, h) == (out_w, out_h) {
        return Ok(img.clone());
    }
    let sx = out_w as f64 / w as f64;
    let sy = out_h as f64 / h as f64;
    let rows = Contributions::new(h, out_h, filter);
    let cols = Contributions::new(w, out_w, filter);
    let data = if sy <= sx {
        let tmp = resize_rows(img.data(), w, h, ch, &rows);
        resize_cols(&tmp, w, out_h, ch, &cols)
    } else {
        let tmp = resize_cols(img.data(), w, h, ch, &cols);
        resize_rows(&tmp, out_w, h, ch, &rows)
    };
    ImageBuffer::new(out_w, out_h, ch, data)
}

/// Resize a square image to `side`×`side`.
pub fn resize(
    img: &ImageBuffer,
    side: usize,
    filter: ResizeFilter,
) -> Result<ImageBuffer, ImagingError> {
    if !img.is_square() {
        return Err(ImagingError::NotSquare {
            width: img.width(),
            height: img.height(),
        });
    }
    resize_to(img, side, side, filter)
}

/// MATLAB `imresize(img, 0.5)` output size convention: `ceil(n/2)`.
pub fn half_size(img: &ImageBuffer) -> Result<ImageBuffer, ImagingError> {
    resize_to(
        img,
        img.width().div_ceil(2),
        img.height().div_ceil(2),
        ResizeFilter::Bicubic,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [ResizeFilter; 4] = [
        ResizeFilter::Bicubic,
        ResizeFilter::Lanczos3,
        ResizeFilter::Bilinear,
        ResizeFilter::Area,
    ];

    #[test]
    fn symmetric_padding() {
        assert_eq!(symmetric_index(-1, 4), 0);
        assert_eq!(symmetric_index(-2, 4), 1);
        assert_eq!(symmetric_index(4, 4), 3);
        assert_eq!(symmetric_index(5, 4), 2);
    }

    #[test]
    fn constant_is_preserved() {
        let img = ImageBuffer::filled(37, 37, 3, 123.0);
        for f in ALL {
            for side in [5, 16, 37, 90] {
                let out = resize(&img, side, f).unwrap();
                assert!(
                    out.data().iter().all(|v| (v - 123.0).abs() < 1e-9),
                    "{f:?} {side}"
                );
            }
        }
    }

    #[test]
    fn same_size_is_identity() {
        let img = ImageBuffer::gray_from_fn(9, 9, |x, y| (x * y) as f64);
        for f in ALL {
            assert_eq!(resize(&img, 9, f).unwrap(), img);
        }
    }

    #[test]
    fn non_square_rejected() {
        let img = ImageBuffer::filled(4, 5, 1, 0.0);
        assert!(matches!(
            resize(&img, 2, ResizeFilter::Bicubic),
            Err(ImagingError::NotSquare { .. })
        ));
    }

    #[test]
    fn area_halving_averages_blocks() {
        let img = ImageBuffer::gray_from_fn(4, 4, |x, y| (x + 4 * y) as f64);
        let out = resize(&img, 2, ResizeFilter::Area).unwrap();
        assert_eq!(out.data(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn half_size_rounds_up() {
        let img = ImageBuffer::filled(7, 5, 1, 1.0);
        let out = half_size(&img).unwrap();
        assert_eq!((out.width(), out.height()), (4, 3));
    }

    #[test]
    fn auto_filter() {
        assert_eq!(ResizeFilter::auto(1024, 512), ResizeFilter::Lanczos3);
        assert_eq!(ResizeFilter::auto(400, 512), ResizeFilter::Bicubic);
        assert_eq!(ResizeFilter::auto(512, 512), ResizeFilter::Bicubic);
    }
}
