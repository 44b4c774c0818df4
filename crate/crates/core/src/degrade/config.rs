use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DegradeError;
use crate::imaging::ResizeFilter;

/// Closed real interval, written `[min, max]` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for Span {
    fn from([min, max]: [f64; 2]) -> Self {
        Span { min, max }
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.min, s.max]
    }
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Span { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Span { min: v, max: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    fn check(&self, what: &str) -> Result<(), DegradeError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(DegradeError::Config(format!(
                "{what}: empty or non-finite range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Closed integer interval, written `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct IntSpan {
    pub min: u32,
    pub max: u32,
}

impl From<[u32; 2]> for IntSpan {
    fn from([min, max]: [u32; 2]) -> Self {
        IntSpan { min, max }
    }
}

impl From<IntSpan> for [u32; 2] {
    fn from(s: IntSpan) -> Self {
        [s.min, s.max]
    }
}

impl IntSpan {
    pub const fn new(min: u32, max: u32) -> Self {
        IntSpan { min, max }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.min <= v && v <= self.max
    }

    fn check(&self, what: &str) -> Result<(), DegradeError> {
        if self.min > self.max {
            return Err(DegradeError::Config(format!(
                "{what}: empty range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn check_odd(&self, what: &str) -> Result<(), DegradeError> {
        self.check(what)?;
        if self.min % 2 == 0 || self.max % 2 == 0 {
            return Err(DegradeError::Config(format!(
                "{what}: kernel sizes must be odd, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

fn check_prob(p: f64, what: &str) -> Result<(), DegradeError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DegradeError::Config(format!(
            "{what}: probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_nonneg(s: &Span, what: &str) -> Result<(), DegradeError> {
    s.check(what)?;
    if s.min < 0.0 {
        return Err(DegradeError::Config(format!(
            "{what}: negative lower bound {}",
            s.min
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurConfig {
    pub prob: f64,
    pub kernel_size: IntSpan,
    pub sigma: Span,
    pub anisotropic_prob: f64,
    /// Radians.
    pub rotation: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResizeStageConfig {
    pub scale: Span,
    pub filters: Vec<ResizeFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Otherwise Poisson.
    pub gaussian_prob: f64,
    /// 8-bit units.
    pub gaussian_sigma: Span,
    pub poisson_scale: Span,
    pub gray_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JpegConfig {
    /// Quality 100 skips the codec.
    pub quality: IntSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    #[serde(default = "enabled")]
    pub enabled: bool,
    pub blur: BlurConfig,
    pub resize: ResizeStageConfig,
    pub noise: NoiseConfig,
    pub jpeg: JpegConfig,
}

fn enabled() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SincConfig {
    pub prob: f64,
    pub kernel_size: IntSpan,
    /// Cutoff frequency in radians per pixel.
    pub omega: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalConfig {
    pub sinc: SincConfig,
    pub filters: Vec<ResizeFilter>,
    pub output_size: usize,
    /// Emit LQ at a quarter of the output size.
    #[serde(default)]
    pub downscale_x4: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    pub seed: u64,
    pub first: RoundConfig,
    pub second: RoundConfig,
    #[serde(rename = "final")]
    pub final_stage: FinalConfig,
}

const FILTERS: [ResizeFilter; 3] = [
    ResizeFilter::Bicubic,
    ResizeFilter::Bilinear,
    ResizeFilter::Area,
];

impl RoundConfig {
    pub fn first_order() -> Self {
        RoundConfig {
            enabled: true,
            blur: BlurConfig {
                prob: 1.0,
                kernel_size: IntSpan::new(7, 21),
                sigma: Span::new(0.2, 3.0),
                anisotropic_prob: 0.5,
                rotation: Span::new(-PI, PI),
            },
            resize: ResizeStageConfig {
                scale: Span::new(0.15, 1.5),
                filters: FILTERS.to_vec(),
            },
            noise: NoiseConfig {
                gaussian_prob: 0.5,
                gaussian_sigma: Span::new(1.0, 30.0),
                poisson_scale: Span::new(0.05, 3.0),
                gray_prob: 0.4,
            },
            jpeg: JpegConfig {
                quality: IntSpan::new(30, 95),
            },
        }
    }

    pub fn second_order() -> Self {
        RoundConfig {
            enabled: true,
            blur: BlurConfig {
                prob: 0.8,
                kernel_size: IntSpan::new(7, 21),
                sigma: Span::new(0.2, 1.5),
                anisotropic_prob: 0.5,
                rotation: Span::new(-PI, PI),
            },
            resize: ResizeStageConfig {
                scale: Span::new(0.3, 1.2),
                filters: FILTERS.to_vec(),
            },
            noise: NoiseConfig {
                gaussian_prob: 0.5,
                gaussian_sigma: Span::new(1.0, 25.0),
                poisson_scale: Span::new(0.05, 2.5),
                gray_prob: 0.4,
            },
            jpeg: JpegConfig {
                quality: IntSpan::new(30, 95),
            },
        }
    }

    /// Every stage collapsed to a no-op.
    pub fn identity() -> Self {
        RoundConfig {
            enabled: true,
            blur: BlurConfig {
                prob: 1.0,
                kernel_size: IntSpan::new(7, 7),
                sigma: Span::fixed(0.0),
                anisotropic_prob: 0.0,
                rotation: Span::fixed(0.0),
            },
            resize: ResizeStageConfig {
                scale: Span::fixed(1.0),
                filters: vec![ResizeFilter::Bicubic],
            },
            noise: NoiseConfig {
                gaussian_prob: 1.0,
                gaussian_sigma: Span::fixed(0.0),
                poisson_scale: Span::fixed(0.0),
                gray_prob: 0.0,
            },
            jpeg: JpegConfig {
                quality: IntSpan::new(100, 100),
            },
        }
    }

    fn validate(&self, name: &str) -> Result<(), DegradeError> {
        let b = &self.blur;
        check_prob(b.prob, &format!("{name}.blur.prob"))?;
        check_prob(b.anisotropic_prob, &format!("{name}.blur.anisotropic_prob"))?;
        b.kernel_size
            .check_odd(&format!("{name}.blur.kernel_size"))?;
        check_nonneg(&b.sigma, &format!("{name}.blur.sigma"))?;
        b.rotation.check(&format!("{name}.blur.rotation"))?;
        let r = &self.resize;
        r.scale.check(&format!("{name}.resize.scale"))?;
        if r.scale.min <= 0.0 {
            return Err(DegradeError::Config(format!(
                "{name}.resize.scale must be positive"
            )));
        }
        if r.filters.is_empty() {
            return Err(DegradeError::Config(format!(
                "{name}.resize.filters is empty"
            )));
        }
        let n = &self.noise;
        check_prob(n.gaussian_prob, &format!("{name}.noise.gaussian_prob"))?;
        check_prob(n.gray_prob, &format!("{name}.noise.gray_prob"))?;
        check_nonneg(&n.gaussian_sigma, &format!("{name}.noise.gaussian_sigma"))?;
        check_nonneg(&n.poisson_scale, &format!("{name}.noise.poisson_scale"))?;
        let q = &self.jpeg.quality;
        q.check(&format!("{name}.jpeg.quality"))?;
        if q.min < 1 || q.max > 100 {
            return Err(DegradeError::Config(format!(
                "{name}.jpeg.quality must lie in [1, 100]"
            )));
        }
        Ok(())
    }
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            seed: 0,
            first: RoundConfig::first_order(),
            second: RoundConfig::second_order(),
            final_stage: FinalConfig {
                sinc: SincConfig {
                    prob: 0.8,
                    kernel_size: IntSpan::new(7, 21),
                    omega: Span::new(PI / 3.0, PI),
                },
                filters: FILTERS.to_vec(),
                output_size: 512,
                downscale_x4: false,
            },
        }
    }
}

impl DegradationConfig {
    /// Collapsed ranges: output equals input up to 8-bit rounding.
    pub fn identity(seed: u64) -> Self {
        let mut cfg = DegradationConfig {
            seed,
            first: RoundConfig::identity(),
            second: RoundConfig::identity(),
            ..Default::default()
        };
        cfg.final_stage.sinc.prob = 0.0;
        cfg.final_stage.filters = vec![ResizeFilter::Bicubic];
        cfg
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        self.first.validate("first")?;
        self.second.validate("second")?;
        let f = &self.final_stage;
        check_prob(f.sinc.prob, "final.sinc.prob")?;
        f.sinc.kernel_size.check_odd("final.sinc.kernel_size")?;
        f.sinc.omega.check("final.sinc.omega")?;
        if f.sinc.omega.min <= 0.0 {
            return Err(DegradeError::Config(
                "final.sinc.omega must be positive".into(),
            ));
        }
        if f.filters.is_empty() {
            return Err(DegradeError::Config("final.filters is empty".into()));
        }
        if f.output_size < 8 || (f.downscale_x4 && f.output_size % 4 != 0) {
            return Err(DegradeError::Config(format!(
                "final.output_size {} unusable",
                f.output_size
            )));
        }
        Ok(())
    }

    /// Side of the emitted LQ image.
    pub fn lq_size(&self) -> usize {
        if self.final_stage.downscale_x4 {
            self.final_stage.output_size / 4
        } else {
            self.final_stage.output_size
        }
    }
}
