use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::IqaError;

pub const ALPHA_MIN: f64 = 0.05;
pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_STEP: f64 = 0.001;

/// Generalized Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgdParams {
    pub alpha: f64,
    pub sigma_sq: f64,
}

/// Asymmetric generalized Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggdParams {
    pub alpha: f64,
    /// Left and right scale parameters.
    pub beta_left: f64,
    pub beta_right: f64,
    /// Distribution mean implied by the fit.
    pub mean_offset: f64,
    /// Root mean square of the negative and positive samples.
    pub sigma_left: f64,
    pub sigma_right: f64,
}

struct Grid {
    alpha: Vec<f64>,
    /// Γ(1/α)Γ(3/α)/Γ(2/α)²; its reciprocal is the AGGD ratio.
    ggd_ratio: Vec<f64>,
    aggd_ratio: Vec<f64>,
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let n = ((ALPHA_MAX - ALPHA_MIN) / ALPHA_STEP).round() as usize + 1;
        let alpha: Vec<f64> = (0..n).map(|i| ALPHA_MIN + i as f64 * ALPHA_STEP).collect();
        let ggd_ratio: Vec<f64> = alpha
            .iter()
            .map(|&a| (ln_gamma(1.0 / a) + ln_gamma(3.0 / a) - 2.0 * ln_gamma(2.0 / a)).exp())
            .collect();
        let aggd_ratio = ggd_ratio.iter().map(|r| 1.0 / r).collect();
        Grid {
            alpha,
            ggd_ratio,
            aggd_ratio,
        }
    })
}

/// Index of the first minimum of `|table[i] - target|`.
fn nearest(table: &[f64], target: f64) -> usize {
    let mut best = 0;
    let mut best_diff = f64::INFINITY;
    for (i, &v) in table.iter().enumerate() {
        let d = (v - target).abs();
        if d < best_diff {
            best = i;
            best_diff = d;
        }
    }
    best
}

/// `sqrt(Γ(1/α)/Γ(3/α))`, the factor from standard deviation to scale.
fn std_to_scale(alpha: f64) -> f64 {
    (0.5 * (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha))).exp()
}

/// Moment-matching GGD fit.
pub fn estimate_ggd(samples: &[f64]) -> Result<GgdParams, IqaError> {
    if samples.len() < 2 {
        return Err(IqaError::TooFewSamples(samples.len()));
    }
    let n = samples.len() as f64;
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(IqaError::ZeroVariance);
    }
    let sigma_sq = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let e_abs = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let rho = sigma_sq / (e_abs * e_abs);
    let g = grid();
    Ok(GgdParams {
        alpha: g.alpha[nearest(&g.ggd_ratio, rho)],
        sigma_sq,
    })
}

/// Moment-matching AGGD fit from left/right deviations.
pub fn estimate_aggd(samples: &[f64]) -> Result<AggdParams, IqaError> {
    if samples.len() < 2 {
        return Err(IqaError::TooFewSamples(samples.len()));
    }
    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in samples {
        let sq = v * v;
        if v < 0.0 {
            left_sq += sq;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += sq;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += sq;
    }
    if left_n == 0 || right_n == 0 {
        return Err(IqaError::OneSided);
    }
    let n = samples.len() as f64;
    let sigma_left = (left_sq / left_n as f64).sqrt();
    let sigma_right = (right_sq / right_n as f64).sqrt();
    let mean_abs = abs_sum / n;
    let rhat = mean_abs * mean_abs / (sq_sum / n);
    // Symmetric in (left, right), so mirrored samples pick the same alpha.
    let (a, b) = (sigma_left, sigma_right);
    let a2b2 = a * a + b * b;
    let rhat_norm = rhat * (a * a * a + b * b * b) * (a + b) / (a2b2 * a2b2);
    let g = grid();
    let alpha = g.alpha[nearest(&g.aggd_ratio, rhat_norm)];
    let k = std_to_scale(alpha);
    let (beta_left, beta_right) = (sigma_left * k, sigma_right * k);
    let mean_offset =
        (beta_right - beta_left) * (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp();
    Ok(AggdParams {
        alpha,
        beta_left,
        beta_right,
        mean_offset,
        sigma_left,
        sigma_right,
    })
}
