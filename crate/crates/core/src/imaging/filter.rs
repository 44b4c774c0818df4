use super::{ImageBuffer, ImagingError};

/// How samples outside the image are synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Repeat the edge sample (`aaa|abc|ccc`).
    Replicate,
    /// Treat outside samples as zero.
    Zero,
    /// Mirror without repeating the edge (`cb|abc|ba`).
    Reflect,
}

/// Odd-sized 2-D filter kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Self {
        assert!(
            width % 2 == 1 && height % 2 == 1,
            "kernel sides must be odd"
        );
        assert_eq!(weights.len(), width * height);
        Self {
            width,
            height,
            weights,
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalized(mut self) -> Self {
        let s = self.sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
        self
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Normalized `size`×`size` isotropic Gaussian.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Kernel {
    let t = gaussian_taps(size, sigma);
    let weights = t
        .iter()
        .flat_map(|&a| t.iter().map(move |&b| a * b))
        .collect();
    Kernel::new(size, size, weights).normalized()
}

#[inline]
pub(crate) fn resolve(i: isize, n: usize, border: Border) -> Option<usize> {
    let n = n as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match border {
        Border::Zero => None,
        Border::Replicate => Some(i.clamp(0, n - 1) as usize),
        Border::Reflect => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * (n - 1);
            let mut m = i.rem_euclid(period);
            if m >= n {
                m = period - m;
            }
            Some(m as usize)
        }
    }
}

fn correlate_plane(img: &ImageBuffer, kernel: &Kernel, border: Border) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let (rx, ry) = ((kernel.width / 2) as isize, (kernel.height / 2) as isize);
    let src = img.data();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..kernel.height {
                let Some(sy) = resolve(y as isize + ky as isize - ry, h, border) else {
                    continue;
                };
                let row = &src[sy * w..(sy + 1) * w];
                for kx in 0..kernel.width {
                    if let Some(sx) = resolve(x as isize + kx as isize - rx, w, border) {
                        acc += kernel.at(kx, ky) * row[sx];
                    }
                }
            }
            out[y * w + x] = acc;
        }
    }
    ImageBuffer::new(w, h, 1, out).expect("same dimensions")
}

/// Filter every channel with `kernel` (correlation; all kernels used here are
/// point-symmetric, so this equals convolution).
pub fn convolve(img: &ImageBuffer, kernel: &Kernel, border: Border) -> ImageBuffer {
    img.map_channels(|p| Ok::<_, ImagingError>(correlate_plane(p, kernel, border)))
        .expect("plane filtering is infallible")
}

fn separable_plane(img: &ImageBuffer, taps: &[f64], border: Border) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let r = (taps.len() / 2) as isize;
    let src = img.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                if let Some(sx) = resolve(x as isize + k as isize - r, w, border) {
                    acc += t * row[sx];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for (k, &t) in taps.iter().enumerate() {
        for y in 0..h {
            let Some(sy) = resolve(y as isize + k as isize - r, h, border) else {
                continue;
            };
            let dst = &mut out[y * w..(y + 1) * w];
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += t * s;
            }
        }
    }
    ImageBuffer::new(w, h, 1, out).expect("same dimensions")
}

/// Filter with the outer product `taps ⊗ taps`.
pub fn separable(img: &ImageBuffer, taps: &[f64], border: Border) -> ImageBuffer {
    assert!(taps.len() % 2 == 1, "tap count must be odd");
    img.map_channels(|p| Ok::<_, ImagingError>(separable_plane(p, taps, border)))
        .expect("plane filtering is infallible")
}

/// Gaussian blur with a `2⌈3σ⌉+1` window and replicated borders.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if sigma <= 0.0 {
        return img.clone();
    }
    let size = 2 * (3.0 * sigma).ceil() as usize + 1;
    separable(img, &gaussian_taps(size, sigma), Border::Replicate)
}
