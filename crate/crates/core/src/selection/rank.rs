use std::cmp::Ordering;

use super::{
    validate_specs, ManifestEntry, MetricSpec, ScoreTable, SelectionError, SelectionManifest,
    Status,
};

pub const DEFAULT_FRACTION: f64 = 1.0 / 3.0;

/// Standardize every metric column and attach the mean z-score.
///
/// Lower-is-better metrics are negated first so that a larger z is always
/// better. Standard deviations are population statistics.
pub fn normalize(table: &ScoreTable, specs: &[MetricSpec]) -> Result<ScoreTable, SelectionError> {
    validate_specs(specs)?;
    let n = table.len();
    if n < 2 {
        return Err(SelectionError::TooFewRows(n));
    }
    let mut columns = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut col = Vec::with_capacity(n);
        for row in table.rows() {
            let v = *row
                .scores
                .get(&spec.name)
                .ok_or_else(|| SelectionError::MissingScore {
                    crop_id: row.crop_id.clone(),
                    metric: spec.name.clone(),
                })?;
            if !v.is_finite() {
                return Err(SelectionError::NonFinite {
                    crop_id: row.crop_id.clone(),
                    metric: spec.name.clone(),
                });
            }
            col.push(spec.sign() * v);
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd.is_nan() || sd <= 0.0 || sd <= 1e-12 * mean.abs() {
            return Err(SelectionError::Degenerate(spec.name.clone()));
        }
        columns.push(
            col.into_iter()
                .map(|v| (v - mean) / sd)
                .collect::<Vec<f64>>(),
        );
    }
    let mut out = table.clone();
    for (i, row) in out.rows_mut().enumerate() {
        row.z = specs
            .iter()
            .zip(&columns)
            .map(|(s, c)| (s.name.clone(), c[i]))
            .collect();
        row.aggregate = Some(columns.iter().map(|c| c[i]).sum::<f64>() / specs.len() as f64);
    }
    Ok(out)
}

/// `⌊fraction · n⌋`, robust to the representation error of fractions like 1/3.
pub fn top_count(fraction: f64, n: usize) -> Result<usize, SelectionError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SelectionError::Fraction(fraction));
    }
    Ok(((fraction * n as f64 + 1e-9).floor() as usize).min(n))
}

/// Rank by aggregate (descending, ties by crop id), keep the top fraction,
/// then require every thresholded metric to pass on its raw value.
pub fn select_top(
    table: &ScoreTable,
    fraction: f64,
    specs: &[MetricSpec],
) -> Result<SelectionManifest, SelectionError> {
    let keep = top_count(fraction, table.len())?;
    validate_specs(specs)?;
    let mut rows: Vec<_> = table.rows().collect();
    if rows.iter().any(|r| r.aggregate.is_none()) {
        return Err(SelectionError::NotNormalized);
    }
    rows.sort_by(|a, b| {
        b.aggregate
            .unwrap()
            .partial_cmp(&a.aggregate.unwrap())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.crop_id.cmp(&b.crop_id))
    });
    let mut entries = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let status = if i >= keep {
            Status::BelowTopFraction
        } else {
            let failed = specs
                .iter()
                .find(|s| row.scores.get(&s.name).map_or(true, |&v| !s.passes(v)));
            match failed {
                Some(s) => Status::FailedThreshold(s.name.clone()),
                None => Status::Selected,
            }
        };
        let mut e = ManifestEntry::from_row(row, status);
        e.rank = Some(i + 1);
        entries.push(e);
    }
    Ok(SelectionManifest::new(entries))
}
