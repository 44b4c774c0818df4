use crate::imaging::{gaussian_taps, separable, Border, ImageBuffer};

use super::IqaError;

pub const WINDOW: usize = 7;
pub const WINDOW_SIGMA: f64 = 7.0 / 6.0;
pub const STABILIZER: f64 = 1.0;

/// Mean-subtracted contrast-normalized coefficients, plus the local deviation
/// used to normalize them.
#[derive(Debug, Clone, PartialEq)]
pub struct MscnField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub local_std: Vec<f64>,
}

impl MscnField {
    /// Copy of the `w`×`h` block at `(x, y)`.
    pub fn block(&self, x: usize, y: usize, w: usize, h: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(w * h);
        for row in y..y + h {
            out.extend_from_slice(&self.values[row * self.width + x..row * self.width + x + w]);
        }
        out
    }

    pub fn block_mean_std(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let mut s = 0.0;
        for row in y..y + h {
            s += self.local_std[row * self.width + x..row * self.width + x + w]
                .iter()
                .sum::<f64>();
        }
        s / (w * h) as f64
    }
}

/// MSCN with replicated borders.
pub fn mscn(gray: &ImageBuffer) -> Result<MscnField, IqaError> {
    mscn_with_border(gray, Border::Replicate)
}

pub fn mscn_with_border(gray: &ImageBuffer, border: Border) -> Result<MscnField, IqaError> {
    if gray.channels() != 1 {
        return Err(IqaError::NotGray(gray.channels()));
    }
    if gray.width() < WINDOW || gray.height() < WINDOW {
        return Err(IqaError::TooSmall {
            width: gray.width(),
            height: gray.height(),
            min: WINDOW,
        });
    }
    let taps = gaussian_taps(WINDOW, WINDOW_SIGMA);
    let mu = separable(gray, &taps, border);
    let squared = ImageBuffer::new(
        gray.width(),
        gray.height(),
        1,
        gray.data().iter().map(|v| v * v).collect(),
    )?;
    let mu_sq = separable(&squared, &taps, border);
    let mut values = Vec::with_capacity(gray.data().len());
    let mut local_std = Vec::with_capacity(gray.data().len());
    for ((&v, &m), &m2) in gray.data().iter().zip(mu.data()).zip(mu_sq.data()) {
        let sd = (m2 - m * m).abs().sqrt();
        values.push((v - m) / (sd + STABILIZER));
        local_std.push(sd);
    }
    Ok(MscnField {
        width: gray.width(),
        height: gray.height(),
        values,
        local_std,
    })
}

/// Products of each sample with its circularly shifted neighbour `(dy, dx)`
/// inside a `w`×`h` block.
pub fn shifted_products(values: &[f64], w: usize, h: usize, dy: isize, dx: isize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
        for x in 0..w {
            let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
            out.push(values[y * w + x] * values[sy * w + sx]);
        }
    }
    out
}

/// Horizontal, vertical and the two diagonal neighbour offsets.
pub const SHIFTS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
