use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DegradationConfig, IntSpan, RoundConfig, Span};
use crate::imaging::ResizeFilter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurParams {
    pub kernel_size: u32,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rotation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResizeParams {
    pub scale: f64,
    pub filter: ResizeFilter,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Poisson { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub gray: bool,
    /// Seeds the per-pixel noise field.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JpegParams {
    pub quality: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundParams {
    pub blur: Option<BlurParams>,
    pub resize: ResizeParams,
    pub noise: NoiseParams,
    pub jpeg: JpegParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SincParams {
    pub kernel_size: u32,
    pub omega: f64,
}

/// Everything a degradation drew, enough to replay it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawnParams {
    pub rounds: Vec<RoundParams>,
    pub sinc: Option<SincParams>,
    pub final_filter: ResizeFilter,
    pub output_size: usize,
}

/// Generator for one stage of one crop.
pub fn stage_rng(seed: u64, crop_id: &str, stage: u32) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update((crop_id.len() as u64).to_le_bytes())
        .chain_update(crop_id.as_bytes())
        .chain_update(stage.to_le_bytes())
        .finalize();
    ChaCha8Rng::from_seed(digest.into())
}

fn uniform(rng: &mut ChaCha8Rng, s: Span) -> f64 {
    if s.min == s.max {
        s.min
    } else {
        rng.random_range(s.min..=s.max)
    }
}

fn uniform_int(rng: &mut ChaCha8Rng, s: IntSpan) -> u32 {
    rng.random_range(s.min..=s.max)
}

fn odd_size(rng: &mut ChaCha8Rng, s: IntSpan) -> u32 {
    let choices = (s.max - s.min) / 2;
    s.min + 2 * rng.random_range(0..=choices)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn draw_round(
    cfg: &RoundConfig,
    seed: u64,
    crop_id: &str,
    base: u32,
    size: (usize, usize),
) -> RoundParams {
    let mut rng = stage_rng(seed, crop_id, base);
    let b = &cfg.blur;
    let blur = (rng.random::<f64>() < b.prob).then(|| {
        let kernel_size = odd_size(&mut rng, b.kernel_size);
        if rng.random::<f64>() < b.anisotropic_prob {
            BlurParams {
                kernel_size,
                sigma_x: uniform(&mut rng, b.sigma),
                sigma_y: uniform(&mut rng, b.sigma),
                rotation: uniform(&mut rng, b.rotation),
            }
        } else {
            let s = uniform(&mut rng, b.sigma);
            BlurParams {
                kernel_size,
                sigma_x: s,
                sigma_y: s,
                rotation: 0.0,
            }
        }
    });

    let mut rng = stage_rng(seed, crop_id, base + 1);
    let scale = uniform(&mut rng, cfg.resize.scale);
    let filter = pick(&mut rng, &cfg.resize.filters);
    let dim = |n: usize| ((n as f64 * scale).round() as usize).max(8);
    let resize = ResizeParams {
        scale,
        filter,
        width: dim(size.0),
        height: dim(size.1),
    };

    let mut rng = stage_rng(seed, crop_id, base + 2);
    let n = &cfg.noise;
    let kind = if rng.random::<f64>() < n.gaussian_prob {
        NoiseKind::Gaussian {
            sigma: uniform(&mut rng, n.gaussian_sigma),
        }
    } else {
        NoiseKind::Poisson {
            scale: uniform(&mut rng, n.poisson_scale),
        }
    };
    let noise = NoiseParams {
        kind,
        gray: rng.random::<f64>() < n.gray_prob,
        seed: rng.random(),
    };

    let mut rng = stage_rng(seed, crop_id, base + 3);
    let jpeg = JpegParams {
        quality: uniform_int(&mut rng, cfg.jpeg.quality),
    };
    RoundParams {
        blur,
        resize,
        noise,
        jpeg,
    }
}

/// Draw every stage's parameters for `crop_id` on an `input_size` square.
pub fn draw(cfg: &DegradationConfig, crop_id: &str, input_size: usize) -> DrawnParams {
    let mut size = (input_size, input_size);
    let mut rounds = Vec::new();
    for (i, round) in [&cfg.first, &cfg.second].into_iter().enumerate() {
        if !round.enabled {
            continue;
        }
        let p = draw_round(round, cfg.seed, crop_id, 4 * i as u32, size);
        size = (p.resize.width, p.resize.height);
        rounds.push(p);
    }
    let f = &cfg.final_stage;
    let mut rng = stage_rng(cfg.seed, crop_id, 8);
    let sinc = (rng.random::<f64>() < f.sinc.prob).then(|| SincParams {
        kernel_size: odd_size(&mut rng, f.sinc.kernel_size),
        omega: uniform(&mut rng, f.sinc.omega),
    });
    let mut rng = stage_rng(cfg.seed, crop_id, 9);
    DrawnParams {
        rounds,
        sinc,
        final_filter: pick(&mut rng, &f.filters),
        output_size: cfg.lq_size(),
    }
}

impl DrawnParams {
    /// Check every drawn value against the configured ranges.
    pub fn check_within(&self, cfg: &DegradationConfig) -> Result<(), String> {
        let rounds: Vec<&RoundConfig> = [&cfg.first, &cfg.second]
            .into_iter()
            .filter(|r| r.enabled)
            .collect();
        if rounds.len() != self.rounds.len() {
            return Err(format!(
                "{} rounds drawn, {} enabled",
                self.rounds.len(),
                rounds.len()
            ));
        }
        for (i, (p, c)) in self.rounds.iter().zip(rounds).enumerate() {
            if let Some(b) = p.blur {
                let ok = c.blur.kernel_size.contains(b.kernel_size)
                    && b.kernel_size % 2 == 1
                    && c.blur.sigma.contains(b.sigma_x)
                    && c.blur.sigma.contains(b.sigma_y)
                    && (b.rotation == 0.0 || c.blur.rotation.contains(b.rotation));
                if !ok {
                    return Err(format!("round {i}: blur {b:?} out of range"));
                }
            }
            if !c.resize.scale.contains(p.resize.scale)
                || !c.resize.filters.contains(&p.resize.filter)
            {
                return Err(format!("round {i}: resize {:?} out of range", p.resize));
            }
            let ok = match p.noise.kind {
                NoiseKind::Gaussian { sigma } => c.noise.gaussian_sigma.contains(sigma),
                NoiseKind::Poisson { scale } => c.noise.poisson_scale.contains(scale),
            };
            if !ok {
                return Err(format!("round {i}: noise {:?} out of range", p.noise));
            }
            if !c.jpeg.quality.contains(p.jpeg.quality) {
                return Err(format!(
                    "round {i}: jpeg quality {} out of range",
                    p.jpeg.quality
                ));
            }
        }
        if let Some(s) = self.sinc {
            let f = &cfg.final_stage.sinc;
            if !f.kernel_size.contains(s.kernel_size)
                || s.kernel_size % 2 == 0
                || !f.omega.contains(s.omega)
            {
                return Err(format!("sinc {s:?} out of range"));
            }
        }
        if !cfg.final_stage.filters.contains(&self.final_filter) {
            return Err(format!(
                "final filter {:?} not configured",
                self.final_filter
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn stage_streams_are_keyed() {
        let a = stage_rng(1, "x", 0).next_u64();
        assert_eq!(a, stage_rng(1, "x", 0).next_u64());
        assert_ne!(a, stage_rng(2, "x", 0).next_u64());
        assert_ne!(a, stage_rng(1, "y", 0).next_u64());
        assert_ne!(a, stage_rng(1, "x", 1).next_u64());
    }

    #[test]
    fn odd_sizes_only() {
        let mut rng = stage_rng(0, "k", 0);
        for _ in 0..500 {
            let k = odd_size(&mut rng, IntSpan::new(7, 21));
            assert!(k % 2 == 1 && (7..=21).contains(&k));
        }
    }

    #[test]
    fn draws_stay_in_range() {
        let cfg = DegradationConfig::default();
        for i in 0..300 {
            let p = draw(&cfg, &format!("crop{i}"), 512);
            p.check_within(&cfg).unwrap();
        }
    }

    #[test]
    fn disabled_round_is_skipped() {
        let mut cfg = DegradationConfig::default();
        cfg.second.enabled = false;
        assert_eq!(draw(&cfg, "a", 512).rounds.len(), 1);
    }

    #[test]
    fn params_serialize() {
        let p = draw(&DegradationConfig::default(), "a", 512);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<DrawnParams>(&text).unwrap(), p);
    }
}
