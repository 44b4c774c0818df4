use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::annotations::DatasetOrigin;
use crate::boxgeom::SquareCrop;

/// Metric values and provenance of one scored crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub crop_id: String,
    pub source_image_id: String,
    pub dataset: DatasetOrigin,
    pub crop: SquareCrop,
    /// Of the source image, carried over from the blur gate.
    pub laplacian_variance: f64,
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub z: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<f64>,
}

/// Rows keyed by crop id, iterated in id order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    rows: BTreeMap<String, ScoreRow>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub rows: usize,
    pub columns: Vec<String>,
    pub duplicates: Vec<String>,
    pub warnings: Vec<String>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, row: ScoreRow) -> Result<(), SelectionError> {
        if self.rows.contains_key(&row.crop_id) {
            return Err(SelectionError::DuplicateCrop(row.crop_id));
        }
        self.rows.insert(row.crop_id.clone(), row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, crop_id: &str) -> Option<&ScoreRow> {
        self.rows.get(crop_id)
    }

    pub fn rows(&self) -> impl Iterator<Item = &ScoreRow> {
        self.rows.values()
    }

    pub(crate) fn rows_mut(&mut self) -> impl Iterator<Item = &mut ScoreRow> {
        self.rows.values_mut()
    }

    /// Every metric name present in at least one row.
    pub fn metric_names(&self) -> BTreeSet<String> {
        self.rows
            .values()
            .flat_map(|r| r.scores.keys().cloned())
            .collect()
    }

    pub fn column(&self, metric: &str) -> Vec<Option<f64>> {
        self.rows
            .values()
            .map(|r| r.scores.get(metric).copied())
            .collect()
    }

    /// One JSON object per line, in crop id order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), SelectionError> {
        for row in self.rows.values() {
            serde_json::to_writer(&mut w, row)
                .map_err(|source| SelectionError::Manifest { line: 0, source })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Self, SelectionError> {
        use std::io::BufRead;
        let mut table = ScoreTable::new();
        for (i, line) in std::io::BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ScoreRow =
                serde_json::from_str(&line).map_err(|source| SelectionError::Manifest {
                    line: i + 1,
                    source,
                })?;
            table.insert(row)?;
        }
        Ok(table)
    }

    /// `crop_id` followed by the given metrics; absent cells are left empty.
    pub fn write_csv<W: Write>(&self, w: W, metrics: &[String]) -> Result<(), SelectionError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["crop_id".to_string(), "laplacian_variance".to_string()];
        header.extend(metrics.iter().cloned());
        out.write_record(&header)?;
        for row in self.rows.values() {
            let mut rec = vec![row.crop_id.clone(), row.laplacian_variance.to_string()];
            rec.extend(
                metrics
                    .iter()
                    .map(|m| row.scores.get(m).map(f64::to_string).unwrap_or_default()),
            );
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Merge a `crop_id,<metric...>` CSV into the table.
///
/// Every column besides `crop_id` is merged. Each of `expected_metrics` must
/// be present as a column, and every crop id must already be in the table.
/// A crop id repeated in the file takes its last row, with a warning.
pub fn ingest_external_scores<R: Read>(
    table: &mut ScoreTable,
    reader: R,
    expected_metrics: &[String],
) -> Result<IngestReport, SelectionError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "crop_id")
        .ok_or_else(|| SelectionError::MissingColumn("crop_id".into()))?;
    if let Some(missing) = expected_metrics
        .iter()
        .find(|m| !headers.iter().any(|h| h == m.as_str()))
    {
        return Err(SelectionError::MissingColumn(missing.clone()));
    }
    let columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != id_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut parsed: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut report = IngestReport {
        columns: columns.iter().map(|(_, h)| h.clone()).collect(),
        ..Default::default()
    };
    let mut unknown = BTreeSet::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let crop_id = rec.get(id_col).unwrap_or_default().to_string();
        if !table.rows.contains_key(&crop_id) {
            unknown.insert(crop_id);
            continue;
        }
        let mut values = BTreeMap::new();
        for (i, name) in &columns {
            let cell = rec.get(*i).unwrap_or_default();
            let v: f64 = cell.parse().map_err(|_| SelectionError::BadValue {
                line,
                message: format!("{name} = '{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(SelectionError::NonFinite {
                    crop_id,
                    metric: name.clone(),
                });
            }
            values.insert(name.clone(), v);
        }
        if parsed.insert(crop_id.clone(), values).is_some() {
            let msg = format!("crop {crop_id} listed more than once; keeping the last row");
            log::warn!("{msg}");
            report.warnings.push(msg);
            report.duplicates.push(crop_id);
        }
    }
    if !unknown.is_empty() {
        return Err(SelectionError::UnknownCrops(unknown.into_iter().collect()));
    }
    report.rows = parsed.len();
    for (crop_id, values) in parsed {
        table
            .rows
            .get_mut(&crop_id)
            .expect("checked above")
            .scores
            .extend(values);
    }
    Ok(report)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::annotations::BBox;

    pub(crate) fn row(id: &str, scores: &[(&str, f64)]) -> ScoreRow {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        ScoreRow {
            crop_id: id.into(),
            source_image_id: format!("img_{id}"),
            dataset: DatasetOrigin::Coco,
            crop: SquareCrop {
                x: 0.0,
                y: 0.0,
                side: 10.0,
                source_box: b,
                center_distance: 0.0,
            },
            laplacian_variance: 200.0,
            scores: scores.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            z: BTreeMap::new(),
            aggregate: None,
        }
    }

    fn table(ids: &[&str]) -> ScoreTable {
        let mut t = ScoreTable::new();
        for id in ids {
            t.insert(row(id, &[("niqe", 3.0)])).unwrap();
        }
        t
    }

    fn expected() -> Vec<String> {
        vec!["clipiqa".into(), "maniqa".into(), "musiq".into()]
    }

    #[test]
    fn merges_full_columns() {
        let mut t = table(&["a", "b"]);
        let csv = "crop_id,clipiqa,maniqa,musiq\na,0.5,0.4,60\nb,0.7,0.3,55.5\n";
        let rep = ingest_external_scores(&mut t, csv.as_bytes(), &expected()).unwrap();
        assert_eq!(rep.rows, 2);
        assert!(rep.warnings.is_empty());
        assert_eq!(t.get("b").unwrap().scores["musiq"], 55.5);
        assert_eq!(t.get("a").unwrap().scores["niqe"], 3.0);
    }

    #[test]
    fn unknown_ids_are_listed() {
        let mut t = table(&["a"]);
        let csv = "crop_id,clipiqa,maniqa,musiq\nzz,0.5,0.4,60\nyy,1,1,1\na,1,1,1\n";
        match ingest_external_scores(&mut t, csv.as_bytes(), &expected()) {
            Err(SelectionError::UnknownCrops(ids)) => assert_eq!(ids, vec!["yy", "zz"]),
            other => panic!("{other:?}"),
        }
        assert!(!t.get("a").unwrap().scores.contains_key("clipiqa"));
    }

    #[test]
    fn missing_expected_column() {
        let mut t = table(&["a"]);
        let csv = "crop_id,clipiqa,maniqa\na,0.5,0.4\n";
        assert!(matches!(
            ingest_external_scores(&mut t, csv.as_bytes(), &expected()),
            Err(SelectionError::MissingColumn(c)) if c == "musiq"
        ));
    }

    #[test]
    fn duplicate_rows_last_wins() {
        let mut t = table(&["a"]);
        let csv = "crop_id,clipiqa\na,0.1\na,0.9\n";
        let rep = ingest_external_scores(&mut t, csv.as_bytes(), &["clipiqa".into()]).unwrap();
        assert_eq!(rep.duplicates, vec!["a"]);
        assert_eq!(t.get("a").unwrap().scores["clipiqa"], 0.9);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = table(&["a", "b,c"]);
        t.insert(row("d", &[("niqe", 0.1 + 0.2)])).unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(ScoreTable::read_jsonl(buf.as_slice()).unwrap(), t);
    }
}
