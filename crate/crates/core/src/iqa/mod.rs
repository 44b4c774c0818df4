//! Natural-scene-statistics quality metrics: MSCN coefficients, (A)GGD fits,
//! NIQE and BRISQUE.

mod brisque;
mod estimate;
mod mscn;
mod niqe;

use std::path::PathBuf;

use thiserror::Error;

use crate::imaging::ImagingError;

pub use brisque::{brisque, brisque_features, brisque_score, SvrModel, BRISQUE_DIM};
pub use estimate::{
    estimate_aggd, estimate_ggd, AggdParams, GgdParams, ALPHA_MAX, ALPHA_MIN, ALPHA_STEP,
};
pub use mscn::{mscn, mscn_with_border, shifted_products, MscnField, SHIFTS};
pub use niqe::{
    niqe_fit, niqe_score, patch_features, pinv_symmetric, NiqeModel, PatchFeatures,
    DEFAULT_PATCH_SIZE, DEFAULT_SHARPNESS_FRACTION, NIQE_DIM,
};

#[derive(Debug, Error)]
pub enum IqaError {
    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("expected a single-channel image, got {0} channels")]
    NotGray(usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("one-sided support")]
    OneSided,
    #[error("no patch yielded finite features")]
    NoUsablePatches,
    #[error("insufficient pristine data: {usable} usable patches, need {needed}")]
    InsufficientPristine { usable: usize, needed: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite feature vector")]
    NonFinite,
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("reading model {path}: {source}")]
    ModelIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Eighteen NSS features of a whole MSCN field in BRISQUE order:
/// `[ggd.α, ggd.σ²]` followed, for each neighbour orientation, by
/// `[α, mean_offset, σ_l², σ_r²]` of the product AGGD.
pub fn nss_features_18(field: &MscnField) -> Result<[f64; 18], IqaError> {
    let mut out = [0.0; 18];
    let ggd = estimate_ggd(&field.values)?;
    out[0] = ggd.alpha;
    out[1] = ggd.sigma_sq;
    for (i, &(dy, dx)) in SHIFTS.iter().enumerate() {
        let p = estimate_aggd(&shifted_products(
            &field.values,
            field.width,
            field.height,
            dy,
            dx,
        ))?;
        out[2 + 4 * i..6 + 4 * i].copy_from_slice(&[
            p.alpha,
            p.mean_offset,
            p.sigma_left * p.sigma_left,
            p.sigma_right * p.sigma_right,
        ]);
    }
    Ok(out)
}

/// Eighteen NIQE features of one MSCN block: `[α, (β_l+β_r)/2]` of the
/// coefficients themselves, then `[α, mean_offset, β_l, β_r]` per orientation.
pub fn niqe_block_features(values: &[f64], w: usize, h: usize) -> Result<[f64; 18], IqaError> {
    let mut out = [0.0; 18];
    let base = estimate_aggd(values)?;
    out[0] = base.alpha;
    out[1] = (base.beta_left + base.beta_right) / 2.0;
    for (i, &(dy, dx)) in SHIFTS.iter().enumerate() {
        let p = estimate_aggd(&shifted_products(values, w, h, dy, dx))?;
        out[2 + 4 * i..6 + 4 * i].copy_from_slice(&[
            p.alpha,
            p.mean_offset,
            p.beta_left,
            p.beta_right,
        ]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ImageBuffer;

    fn noise(n: usize, seed: u64) -> ImageBuffer {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(128.0, 30.0).unwrap();
        ImageBuffer::gray_from_fn(n, n, |_, _| normal.sample(&mut rng))
    }

    #[test]
    fn white_noise_features_are_finite() {
        let img = noise(256, 7);
        let f = nss_features_18(&mscn(&img).unwrap()).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        // Local normalization bounds the coefficients, so the fitted shape
        // sits near 3 (a numpy recomputation gives 2.99 at this size).
        assert!((2.6..=3.4).contains(&f[0]), "alpha {}", f[0]);
        let centered: Vec<f64> = img.data().iter().map(|v| v - 128.0).collect();
        let raw = estimate_ggd(&centered).unwrap();
        assert!((1.9..=2.1).contains(&raw.alpha), "alpha {}", raw.alpha);
    }

    #[test]
    fn rotation_keeps_ggd_slots() {
        let img = noise(40, 3);
        let rot = ImageBuffer::gray_from_fn(40, 40, |x, y| img.get(39 - x, 39 - y, 0));
        let a = nss_features_18(&mscn(&img).unwrap()).unwrap();
        let b = nss_features_18(&mscn(&rot).unwrap()).unwrap();
        assert_eq!(a[0], b[0]);
        assert!((a[1] - b[1]).abs() < 1e-9 * a[1]);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let field = mscn(&ImageBuffer::filled(16, 16, 1, 9.0)).unwrap();
        assert!(matches!(
            nss_features_18(&field),
            Err(IqaError::ZeroVariance)
        ));
    }
}
