//! NIQE: distance between a test image's patch statistics and a pristine
//! multivariate Gaussian.
//!
//! Model files are plain text:
//!
//! ```text
//! # free-form comment lines
//! hqacf-niqe-model 1
//! dim 36
//! patch_size 96
//! sharpness_fraction 0.75
//! mean
//! <36 numbers>
//! covariance
//! <36 lines of 36 numbers>
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::{mscn, niqe_block_features, IqaError};
use crate::imaging::{crop_rect, half_size, to_luma, ImageBuffer};

pub const NIQE_DIM: usize = 36;
pub const DEFAULT_PATCH_SIZE: usize = 96;
pub const DEFAULT_SHARPNESS_FRACTION: f64 = 0.75;
const MIN_PRISTINE_PATCHES: usize = NIQE_DIM;
const PINV_CUTOFF: f64 = 1e-10;
const HEADER: &str = "hqacf-niqe-model 1";

static PRISTINE_TEXT: &str = include_str!("../../data/niqe_pristine.model");

/// Pristine multivariate Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct NiqeModel {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub patch_size: usize,
    pub sharpness_fraction: f64,
}

/// Features of one tile. `features` is `None` when a fit failed on the tile.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures {
    pub x: usize,
    pub y: usize,
    /// Mean local deviation over the tile.
    pub sharpness: f64,
    pub features: Option<[f64; NIQE_DIM]>,
}

impl NiqeModel {
    pub fn new(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        patch_size: usize,
        sharpness_fraction: f64,
    ) -> Result<Self, IqaError> {
        let model = Self {
            mean,
            covariance,
            patch_size,
            sharpness_fraction,
        };
        model.validate()?;
        Ok(model)
    }

    /// The bundled pristine model.
    pub fn pristine() -> &'static NiqeModel {
        static MODEL: OnceLock<NiqeModel> = OnceLock::new();
        MODEL.get_or_init(|| NiqeModel::parse(PRISTINE_TEXT).expect("bundled NIQE model is valid"))
    }

    pub fn validate(&self) -> Result<(), IqaError> {
        let bad = |message: String| Err(IqaError::ModelFormat { line: 0, message });
        if self.mean.len() != NIQE_DIM || self.covariance.shape() != (NIQE_DIM, NIQE_DIM) {
            return bad(format!(
                "expected dim {NIQE_DIM}, got mean {} and covariance {:?}",
                self.mean.len(),
                self.covariance.shape()
            ));
        }
        check_patch_params(self.patch_size, self.sharpness_fraction)?;
        if self
            .mean
            .iter()
            .chain(self.covariance.iter())
            .any(|v| !v.is_finite())
        {
            return bad("non-finite entries".into());
        }
        let c = &self.covariance;
        let scale = c.amax().max(1.0);
        for i in 0..NIQE_DIM {
            for j in 0..i {
                if (c[(i, j)] - c[(j, i)]).abs() > 1e-9 * scale {
                    return bad(format!("covariance not symmetric at ({i}, {j})"));
                }
            }
        }
        let eig = SymmetricEigen::new(c.clone()).eigenvalues;
        let min = eig.min();
        if min < -1e-9 * scale {
            return bad(format!("covariance has negative eigenvalue {min}"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, IqaError> {
        let mut cur = Lines {
            lines: text
                .lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
                .collect(),
            pos: 0,
        };
        let (n, header) = cur.next("header")?;
        if header != HEADER {
            return Err(fail(n, format!("expected '{HEADER}'")));
        }
        let (n, dim) = cur.keyed("dim")?;
        let dim: usize = dim.parse().map_err(|_| fail(n, "bad dim".into()))?;
        if dim != NIQE_DIM {
            return Err(fail(
                n,
                format!("dim {dim} unsupported, expected {NIQE_DIM}"),
            ));
        }
        let (n, patch) = cur.keyed("patch_size")?;
        let patch_size: usize = patch
            .parse()
            .map_err(|_| fail(n, "bad patch_size".into()))?;
        let (n, frac) = cur.keyed("sharpness_fraction")?;
        let sharpness_fraction: f64 = frac
            .parse()
            .map_err(|_| fail(n, "bad sharpness_fraction".into()))?;
        cur.label("mean")?;
        let mean = DVector::from_vec(cur.numbers("mean row", dim)?);
        cur.label("covariance")?;
        let mut rows = Vec::with_capacity(dim * dim);
        for _ in 0..dim {
            rows.extend(cur.numbers("covariance row", dim)?);
        }
        if let Some(&(n, _)) = cur.lines.get(cur.pos) {
            return Err(fail(n, "trailing content".into()));
        }
        NiqeModel::new(
            mean,
            DMatrix::from_row_slice(dim, dim, &rows),
            patch_size,
            sharpness_fraction,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IqaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IqaError::ModelIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |it: &mut dyn Iterator<Item = f64>| {
            it.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
        };
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "dim {NIQE_DIM}").unwrap();
        writeln!(s, "patch_size {}", self.patch_size).unwrap();
        writeln!(s, "sharpness_fraction {}", self.sharpness_fraction).unwrap();
        writeln!(s, "mean\n{}", join(&mut self.mean.iter().copied())).unwrap();
        writeln!(s, "covariance").unwrap();
        for r in self.covariance.row_iter() {
            writeln!(s, "{}", join(&mut r.iter().copied())).unwrap();
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IqaError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| IqaError::ModelIo {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn fail(line: usize, message: String) -> IqaError {
    IqaError::ModelFormat { line, message }
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), IqaError> {
        let item = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| fail(0, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(item)
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), IqaError> {
        let (n, l) = self.next(key)?;
        match l.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok((n, v.trim())),
            _ => Err(fail(n, format!("expected '{key} <value>'"))),
        }
    }

    fn label(&mut self, label: &str) -> Result<(), IqaError> {
        let (n, l) = self.next(label)?;
        if l != label {
            return Err(fail(n, format!("expected '{label}'")));
        }
        Ok(())
    }

    fn numbers(&mut self, what: &str, dim: usize) -> Result<Vec<f64>, IqaError> {
        let (n, l) = self.next(what)?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| fail(n, format!("{what}: {e}")))?;
        if v.len() != dim {
            return Err(fail(
                n,
                format!("{what}: {} values, expected {dim}", v.len()),
            ));
        }
        Ok(v)
    }
}

fn check_patch_params(patch_size: usize, fraction: f64) -> Result<(), IqaError> {
    if patch_size < 14 || patch_size % 2 != 0 {
        return Err(IqaError::InvalidParameter(format!(
            "patch_size {patch_size} must be even and at least 14"
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(IqaError::InvalidParameter(format!(
            "sharpness_fraction {fraction} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Tile the image (cropped to whole tiles) and compute 36 features per tile:
/// 18 at full scale and 18 on the half-size image.
pub fn patch_features(
    img: &ImageBuffer,
    patch_size: usize,
) -> Result<Vec<PatchFeatures>, IqaError> {
    check_patch_params(patch_size, 1.0)?;
    let gray = to_luma(img);
    let (nx, ny) = (gray.width() / patch_size, gray.height() / patch_size);
    if nx == 0 || ny == 0 {
        return Err(IqaError::TooSmall {
            width: gray.width(),
            height: gray.height(),
            min: patch_size,
        });
    }
    let gray = crop_rect(&gray, 0, 0, nx * patch_size, ny * patch_size)?;
    let full = mscn(&gray)?;
    let half = mscn(&half_size(&gray)?)?;
    let hp = patch_size / 2;
    let mut out = Vec::with_capacity(nx * ny);
    for by in 0..ny {
        for bx in 0..nx {
            let (x, y) = (bx * patch_size, by * patch_size);
            let a = niqe_block_features(
                &full.block(x, y, patch_size, patch_size),
                patch_size,
                patch_size,
            );
            let b = niqe_block_features(&half.block(bx * hp, by * hp, hp, hp), hp, hp);
            let features = match (a, b) {
                (Ok(a), Ok(b)) => {
                    let mut f = [0.0; NIQE_DIM];
                    f[..18].copy_from_slice(&a);
                    f[18..].copy_from_slice(&b);
                    f.iter().all(|v| v.is_finite()).then_some(f)
                }
                _ => None,
            };
            out.push(PatchFeatures {
                x,
                y,
                sharpness: full.block_mean_std(x, y, patch_size, patch_size),
                features,
            });
        }
    }
    Ok(out)
}

/// Sample mean and covariance (N−1 denominator; zero for a single row).
fn mean_cov(rows: &[[f64; NIQE_DIM]]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut mean = DVector::zeros(NIQE_DIM);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(NIQE_DIM, NIQE_DIM);
    if n > 1 {
        for r in rows {
            let d = DVector::from_column_slice(r) - &mean;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= (n - 1) as f64;
    }
    (mean, cov)
}

/// Moore–Penrose inverse of a symmetric matrix; eigenvalues at or below
/// `1e-10` of the largest magnitude are treated as zero.
pub fn pinv_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let cutoff = PINV_CUTOFF * eig.eigenvalues.amax();
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// NIQE score (lower is better). Every tile contributes; tiles whose fits
/// fail are skipped.
pub fn niqe_score(img: &ImageBuffer, model: &NiqeModel) -> Result<f64, IqaError> {
    let rows: Vec<[f64; NIQE_DIM]> = patch_features(img, model.patch_size)?
        .into_iter()
        .filter_map(|p| p.features)
        .collect();
    if rows.is_empty() {
        return Err(IqaError::NoUsablePatches);
    }
    let (mean, cov) = mean_cov(&rows);
    let pooled = (&model.covariance + cov) / 2.0;
    let d = &model.mean - mean;
    let q = (d.transpose() * pinv_symmetric(&pooled) * &d)[(0, 0)];
    Ok(q.max(0.0).sqrt())
}

/// Fit a pristine model. From every image the sharpest `sharpness_fraction`
/// of tiles (by mean local deviation) is kept; images smaller than two tiles
/// per side are skipped with a warning.
pub fn niqe_fit(
    pristine: &[ImageBuffer],
    patch_size: usize,
    sharpness_fraction: f64,
) -> Result<NiqeModel, IqaError> {
    check_patch_params(patch_size, sharpness_fraction)?;
    let per_image: Vec<Vec<[f64; NIQE_DIM]>> = pristine
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            if img.width() < 2 * patch_size || img.height() < 2 * patch_size {
                log::warn!(
                    "pristine image {i} ({}x{}) is smaller than two tiles; skipped",
                    img.width(),
                    img.height()
                );
                return Ok(Vec::new());
            }
            let mut tiles = patch_features(img, patch_size)?;
            let keep = ((sharpness_fraction * tiles.len() as f64).ceil() as usize).max(1);
            tiles.sort_by(|a, b| b.sharpness.total_cmp(&a.sharpness));
            Ok(tiles
                .into_iter()
                .take(keep)
                .filter_map(|t| t.features)
                .collect())
        })
        .collect::<Result<_, IqaError>>()?;
    let rows: Vec<[f64; NIQE_DIM]> = per_image.into_iter().flatten().collect();
    if rows.len() < MIN_PRISTINE_PATCHES {
        return Err(IqaError::InsufficientPristine {
            usable: rows.len(),
            needed: MIN_PRISTINE_PATCHES,
        });
    }
    let (mean, mut cov) = mean_cov(&rows);
    cov = (&cov + cov.transpose()) / 2.0;
    NiqeModel::new(mean, cov, patch_size, sharpness_fraction)
}
