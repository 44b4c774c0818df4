//! Seeded synthetic degradation for building low/high-quality image pairs.
//!
//! Two rounds of blur, resize, noise and JPEG, then an optional sinc filter
//! and a resize back to the output size. Random draws come from a generator
//! keyed by `(seed, crop_id, stage)`, so a crop's degradation does not depend
//! on which worker handles it or in what order. Everything drawn is kept in
//! [`DrawnParams`]; [`render`] replays it without touching a random source.

mod config;
mod draw;
mod pairs;
mod render;

use thiserror::Error;

use crate::imaging::{ImageBuffer, ImagingError};

pub use config::{
    BlurConfig, DegradationConfig, FinalConfig, IntSpan, JpegConfig, NoiseConfig,
    ResizeStageConfig, RoundConfig, SincConfig, Span,
};
pub use draw::{
    draw, stage_rng, BlurParams, DrawnParams, JpegParams, NoiseKind, NoiseParams, ResizeParams,
    RoundParams, SincParams,
};
pub use pairs::{build_pairs, PairRecord, PairReport, CODEC};
pub use render::{blur_kernel, render, sinc_kernel};

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error("degradation config: {0}")]
    Config(String),
    #[error("expected a {expected}x{expected} input, got {width}x{height}")]
    InputSize {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("writing pair manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("pair record: {0}")]
    Json(#[from] serde_json::Error),
}

impl DegradeError {
    pub fn is_config(&self) -> bool {
        matches!(self, DegradeError::Config(_))
    }
}

/// Draw parameters for `crop_id` and apply them.
pub fn degrade(
    img: &ImageBuffer,
    cfg: &DegradationConfig,
    crop_id: &str,
) -> Result<(ImageBuffer, DrawnParams), DegradeError> {
    cfg.validate()?;
    let n = cfg.final_stage.output_size;
    if img.width() != n || img.height() != n {
        return Err(DegradeError::InputSize {
            expected: n,
            width: img.width(),
            height: img.height(),
        });
    }
    let params = draw(cfg, crop_id, n);
    let out = render(img, &params)?;
    Ok((out, params))
}
