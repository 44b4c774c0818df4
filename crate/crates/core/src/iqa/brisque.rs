//! BRISQUE features and the RBF support-vector regressor that maps them to a
//! score.
//!
//! The regressor is read from a libsvm `epsilon_svr` model file; the
//! per-feature scaling ranges come from a sidecar with one `index min max`
//! line per feature (`#` starts a comment).

use std::path::Path;
use std::sync::OnceLock;

use super::{mscn_with_border, nss_features_18, IqaError};
use crate::imaging::{half_size, to_luma, Border, ImageBuffer};

pub const BRISQUE_DIM: usize = 36;

static LIVE_SVM: &str = include_str!("../../data/brisque_live.svm");
static LIVE_RANGE: &str = include_str!("../../data/brisque_live.range");

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub support_vectors: Vec<[f64; BRISQUE_DIM]>,
    pub coefficients: Vec<f64>,
    pub gamma: f64,
    pub bias: f64,
    /// `(min, max)` per feature, mapped to `[-1, 1]`.
    pub ranges: Vec<(f64, f64)>,
}

/// 18 features of the zero-padded MSCN field at full scale, then 18 on the
/// half-size image.
pub fn brisque_features(img: &ImageBuffer) -> Result<[f64; BRISQUE_DIM], IqaError> {
    let gray = to_luma(img);
    let mut out = [0.0; BRISQUE_DIM];
    out[..18].copy_from_slice(&nss_features_18(&mscn_with_border(&gray, Border::Zero)?)?);
    let half = half_size(&gray)?;
    out[18..].copy_from_slice(&nss_features_18(&mscn_with_border(&half, Border::Zero)?)?);
    Ok(out)
}

fn format_err(line: usize, message: impl Into<String>) -> IqaError {
    IqaError::ModelFormat {
        line,
        message: message.into(),
    }
}

impl SvrModel {
    /// The bundled model (trained on the LIVE database).
    pub fn bundled() -> &'static SvrModel {
        static MODEL: OnceLock<SvrModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            SvrModel::parse(LIVE_SVM, LIVE_RANGE).expect("bundled BRISQUE model is valid")
        })
    }

    pub fn parse(svm: &str, range: &str) -> Result<Self, IqaError> {
        let mut gamma = None;
        let mut rho = None;
        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        let mut in_sv = false;
        for (i, line) in svm.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !in_sv {
                let (key, value) = line.split_once(' ').unwrap_or((line, ""));
                match key {
                    "SV" => in_sv = true,
                    "svm_type" if value != "epsilon_svr" && value != "nu_svr" => {
                        return Err(format_err(n, format!("unsupported svm_type {value}")))
                    }
                    "kernel_type" if value != "rbf" => {
                        return Err(format_err(n, format!("unsupported kernel_type {value}")))
                    }
                    "gamma" => {
                        gamma = Some(
                            value
                                .parse::<f64>()
                                .map_err(|e| format_err(n, e.to_string()))?,
                        )
                    }
                    "rho" => {
                        rho = Some(
                            value
                                .parse::<f64>()
                                .map_err(|e| format_err(n, e.to_string()))?,
                        )
                    }
                    _ => {}
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let coef: f64 = parts
                .next()
                .expect("non-empty line")
                .parse()
                .map_err(|e| format_err(n, format!("coefficient: {e}")))?;
            let mut sv = [0.0; BRISQUE_DIM];
            for p in parts {
                let (idx, val) = p
                    .split_once(':')
                    .ok_or_else(|| format_err(n, format!("bad feature '{p}'")))?;
                let idx: usize = idx
                    .parse()
                    .map_err(|e| format_err(n, format!("index: {e}")))?;
                if idx == 0 || idx > BRISQUE_DIM {
                    return Err(format_err(n, format!("feature index {idx} out of range")));
                }
                sv[idx - 1] = val
                    .parse()
                    .map_err(|e| format_err(n, format!("value: {e}")))?;
            }
            coefficients.push(coef);
            support_vectors.push(sv);
        }
        let gamma = gamma.ok_or_else(|| format_err(0, "missing gamma"))?;
        let rho = rho.ok_or_else(|| format_err(0, "missing rho"))?;

        let mut ranges = vec![None; BRISQUE_DIM];
        for (i, line) in range.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<&str> = line.split_whitespace().collect();
            let [idx, lo, hi] = v[..] else {
                return Err(format_err(n, "expected 'index min max'"));
            };
            let idx: usize = idx
                .parse()
                .map_err(|e| format_err(n, format!("index: {e}")))?;
            if idx == 0 || idx > BRISQUE_DIM {
                return Err(format_err(n, format!("feature index {idx} out of range")));
            }
            let lo: f64 = lo.parse().map_err(|e| format_err(n, format!("min: {e}")))?;
            let hi: f64 = hi.parse().map_err(|e| format_err(n, format!("max: {e}")))?;
            ranges[idx - 1] = Some((lo, hi));
        }
        let ranges = ranges
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| format_err(0, format!("no range for feature {}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        let model = SvrModel {
            support_vectors,
            coefficients,
            gamma,
            bias: -rho,
            ranges,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(
        svm_path: impl AsRef<Path>,
        range_path: impl AsRef<Path>,
    ) -> Result<Self, IqaError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| IqaError::ModelIo {
                path: p.to_path_buf(),
                source,
            })
        };
        Self::parse(&read(svm_path.as_ref())?, &read(range_path.as_ref())?)
    }

    pub fn validate(&self) -> Result<(), IqaError> {
        if self.support_vectors.len() != self.coefficients.len() {
            return Err(format_err(
                0,
                "support vector and coefficient counts differ",
            ));
        }
        if self.ranges.len() != BRISQUE_DIM {
            return Err(format_err(
                0,
                format!("{} ranges, expected {BRISQUE_DIM}", self.ranges.len()),
            ));
        }
        if let Some(i) = self
            .ranges
            .iter()
            .position(|(lo, hi)| lo >= hi || lo.is_nan() || hi.is_nan())
        {
            return Err(format_err(0, format!("empty range for feature {}", i + 1)));
        }
        Ok(())
    }

    /// Map raw features to `[-1, 1]`, clamping (with a warning) anything
    /// outside the training range.
    pub fn scale(&self, features: &[f64; BRISQUE_DIM]) -> [f64; BRISQUE_DIM] {
        let mut out = [0.0; BRISQUE_DIM];
        for (i, (&v, &(lo, hi))) in features.iter().zip(&self.ranges).enumerate() {
            let s = -1.0 + 2.0 * (v - lo) / (hi - lo);
            if !(-1.0..=1.0).contains(&s) {
                log::warn!(
                    "BRISQUE feature {} = {v} outside [{lo}, {hi}]; clamped",
                    i + 1
                );
            }
            out[i] = s.clamp(-1.0, 1.0);
        }
        out
    }
}

/// RBF-kernel SVR output on scaled features (lower is better).
pub fn brisque_score(features: &[f64; BRISQUE_DIM], model: &SvrModel) -> Result<f64, IqaError> {
    if features.iter().any(|v| !v.is_finite()) {
        return Err(IqaError::NonFinite);
    }
    let x = model.scale(features);
    let sum: f64 = model
        .support_vectors
        .iter()
        .zip(&model.coefficients)
        .map(|(sv, c)| {
            let d2: f64 = sv.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            c * (-model.gamma * d2).exp()
        })
        .sum();
    Ok(sum + model.bias)
}

/// Features and score in one call.
pub fn brisque(img: &ImageBuffer, model: &SvrModel) -> Result<f64, IqaError> {
    brisque_score(&brisque_features(img)?, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_ranges() -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); BRISQUE_DIM]
    }

    #[test]
    fn bundled_model_loads() {
        let m = SvrModel::bundled();
        assert_eq!(m.support_vectors.len(), 770);
        assert_eq!(m.gamma, 0.05);
        assert_eq!(m.bias, 155.845);
    }

    #[test]
    fn single_support_vector_identity() {
        let sv = [0.25; BRISQUE_DIM];
        let m = SvrModel {
            support_vectors: vec![sv],
            coefficients: vec![3.5],
            gamma: 0.7,
            bias: -1.25,
            ranges: identity_ranges(),
        };
        assert!((brisque_score(&sv, &m).unwrap() - (3.5 - 1.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_give_bias() {
        let m = SvrModel {
            support_vectors: vec![[0.1; BRISQUE_DIM]; 3],
            coefficients: vec![0.0; 3],
            gamma: 0.05,
            bias: 12.0,
            ranges: identity_ranges(),
        };
        assert_eq!(brisque_score(&[0.9; BRISQUE_DIM], &m).unwrap(), 12.0);
    }

    #[test]
    fn out_of_range_features_are_clamped() {
        let m = SvrModel {
            support_vectors: vec![],
            coefficients: vec![],
            gamma: 0.05,
            bias: 0.0,
            ranges: identity_ranges(),
        };
        let mut f = [0.0; BRISQUE_DIM];
        f[0] = 5.0;
        f[1] = -7.0;
        let s = m.scale(&f);
        assert_eq!((s[0], s[1]), (1.0, -1.0));
    }

    #[test]
    fn parse_rejects_linear_kernel() {
        let svm = "svm_type epsilon_svr\nkernel_type linear\ngamma 1\nrho 0\nSV\n";
        assert!(SvrModel::parse(svm, LIVE_RANGE).is_err());
    }

    #[test]
    fn constant_image_is_degenerate() {
        assert!(brisque_features(&ImageBuffer::filled(32, 32, 1, 50.0)).is_err());
    }
}
