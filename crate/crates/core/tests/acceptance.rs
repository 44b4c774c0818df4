//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hqacf::annotations::{BBox, DatasetOrigin};
use hqacf::boxgeom::{center_priority_nms, squarify, SquareCrop};
use hqacf::degrade::{build_pairs, degrade, render, DegradationConfig, PairRecord};
use hqacf::imaging::{
    crop, gaussian_blur, laplacian_variance, resize, to_luma, ImageBuffer, ResizeFilter,
};
use hqacf::iqa::{estimate_aggd, estimate_ggd, niqe_fit, niqe_score, NiqeModel};
use hqacf::pipeline::{files, run, PipelineConfig, PipelineError, RunOptions};
use hqacf::selection::{
    crop_file_name, normalize, select_top, Direction, ManifestEntry, MetricSource, MetricSpec,
    ScoreRow, ScoreTable, SelectionManifest, Status,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

type Check = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    check: fn() -> Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(rel)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dummy_crop() -> SquareCrop {
    SquareCrop {
        x: 0.0,
        y: 0.0,
        side: 512.0,
        source_box: BBox::new(0.0, 0.0, 512.0, 512.0),
        center_distance: 0.0,
    }
}

fn score_row(id: String, scores: BTreeMap<String, f64>) -> ScoreRow {
    ScoreRow {
        crop_id: id.clone(),
        source_image_id: id,
        dataset: DatasetOrigin::Coco,
        crop: dummy_crop(),
        laplacian_variance: 0.0,
        scores,
        z: BTreeMap::new(),
        aggregate: None,
    }
}

const METRIC_NAMES: [&str; 5] = ["niqe", "brisque", "clipiqa", "maniqa", "musiq"];

fn spec(name: &str, direction: Direction) -> MetricSpec {
    MetricSpec::new(name, direction, MetricSource::InCore)
}

/// Per-metric oracle z-scores, sign applied after standardizing raw values.
fn oracle_z(values: &[f64], direction: Direction) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (m2 / n).sqrt();
    let sign = match direction {
        Direction::HigherBetter => 1.0,
        Direction::LowerBetter => -1.0,
    };
    values.iter().map(|v| sign * (v - mean) / sd).collect()
}

fn z_statistics() -> Check {
    let mut r = rng(1);
    let mut worst_moment: f64 = 0.0;
    let mut worst_agg: f64 = 0.0;
    let tables = 200;
    for t in 0..tables {
        let n = r.random_range(10..=1000);
        let m = r.random_range(1..=5);
        let specs: Vec<MetricSpec> = METRIC_NAMES[..m]
            .iter()
            .map(|&name| {
                let dir = if name == "niqe" || r.random_bool(0.5) {
                    Direction::LowerBetter
                } else {
                    Direction::HigherBetter
                };
                spec(name, dir)
            })
            .collect();
        let shape: Vec<(f64, f64)> = (0..m)
            .map(|_| {
                (
                    r.random_range(-100.0..100.0),
                    10f64.powf(r.random_range(-2.0..3.0)),
                )
            })
            .collect();
        let mut table = ScoreTable::new();
        let mut columns = vec![Vec::with_capacity(n); m];
        for i in 0..n {
            let mut scores = BTreeMap::new();
            for (j, s) in specs.iter().enumerate() {
                let v = shape[j].0 + shape[j].1 * r.random_range(-1.0..1.0);
                columns[j].push(v);
                scores.insert(s.name.clone(), v);
            }
            table
                .insert(score_row(format!("c{i:05}"), scores))
                .map_err(|e| e.to_string())?;
        }
        let out = normalize(&table, &specs).map_err(|e| format!("table {t}: {e}"))?;
        let zs: Vec<Vec<f64>> = specs
            .iter()
            .zip(&columns)
            .map(|(s, c)| oracle_z(c, s.direction))
            .collect();
        for s in &specs {
            let col: Vec<f64> = out.rows().map(|row| row.z[&s.name]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            worst_moment = worst_moment.max(mean.abs()).max((sd - 1.0).abs());
        }
        for (i, row) in out.rows().enumerate() {
            let want = zs.iter().map(|c| c[i]).sum::<f64>() / m as f64;
            let got = row.aggregate.ok_or("aggregate missing")?;
            worst_agg = worst_agg.max((got - want).abs());
        }
    }
    ensure(worst_moment <= 1e-9, || {
        format!("z moment error {worst_moment:e}")
    })?;
    ensure(worst_agg <= 1e-12, || {
        format!("aggregate error {worst_agg:e}")
    })?;
    Ok(format!(
        "{tables} tables, max moment error {worst_moment:.1e}, max aggregate error {worst_agg:.1e}"
    ))
}

fn selection_oracle() -> Check {
    let mut r = rng(2);
    let fractions = [
        (1, 3),
        (1, 10),
        (1, 4),
        (1, 2),
        (2, 3),
        (1, 1),
        (3, 7),
        (5, 12),
    ];
    let mut selected_total = 0;
    let mut threshold_rejections = 0;
    for t in 0..1000 {
        let n: usize = r.random_range(2..=100);
        let extra = r.random_range(0..=3);
        let mut specs = vec![spec("niqe", Direction::LowerBetter)];
        for &name in &METRIC_NAMES[1..1 + extra] {
            let dir = if r.random_bool(0.5) {
                Direction::LowerBetter
            } else {
                Direction::HigherBetter
            };
            specs.push(spec(name, dir));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 && r.random_bool(0.1) {
                let j = r.random_range(0..i);
                rows.push(rows[j].clone());
            } else {
                rows.push(
                    (0..specs.len())
                        .map(|_| r.random_range(0.0..10.0))
                        .collect(),
                );
            }
        }
        for (j, s) in specs.iter_mut().enumerate() {
            if r.random_bool(0.4) {
                let pick = rows[r.random_range(0..n)][j];
                *s = s.clone().with_threshold(pick);
            }
        }
        let (p, q) = fractions[r.random_range(0..fractions.len())];
        let ids: Vec<String> = (0..n).map(|i| format!("t{t}_{i:03}")).collect();
        let mut table = ScoreTable::new();
        for (id, vals) in ids.iter().zip(&rows) {
            let scores = specs
                .iter()
                .zip(vals)
                .map(|(s, &v)| (s.name.clone(), v))
                .collect();
            table
                .insert(score_row(id.clone(), scores))
                .map_err(|e| e.to_string())?;
        }
        let fraction = p as f64 / q as f64;
        let normalized = match normalize(&table, &specs) {
            Ok(t) => t,
            // every row identical in some column
            Err(_) if rows.iter().all(|v| *v == rows[0]) => continue,
            Err(e) => return Err(format!("table {t}: {e}")),
        };
        let manifest = select_top(&normalized, fraction, &specs).map_err(|e| e.to_string())?;

        // oracle
        let cols: Vec<Vec<f64>> = specs
            .iter()
            .enumerate()
            .map(|(j, s)| oracle_z(&rows.iter().map(|v| v[j]).collect::<Vec<_>>(), s.direction))
            .collect();
        let agg: Vec<f64> = (0..n)
            .map(|i| cols.iter().map(|c| c[i]).sum::<f64>() / specs.len() as f64)
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| agg[b].total_cmp(&agg[a]).then(ids[a].cmp(&ids[b])));
        let keep = p * n / q;
        let want: Vec<(String, Status, usize)> = order
            .iter()
            .enumerate()
            .map(|(rank, &i)| {
                let status = if rank >= keep {
                    Status::BelowTopFraction
                } else {
                    let failed = specs.iter().enumerate().find(|(j, s)| {
                        let v = rows[i][*j];
                        match (s.threshold, s.direction) {
                            (None, _) => false,
                            (Some(th), Direction::HigherBetter) => v < th,
                            (Some(th), Direction::LowerBetter) => v > th,
                        }
                    });
                    match failed {
                        Some((_, s)) => Status::FailedThreshold(s.name.clone()),
                        None => Status::Selected,
                    }
                };
                (ids[i].clone(), status, rank + 1)
            })
            .collect();
        let mut got: Vec<(String, Status, usize)> = manifest
            .entries
            .iter()
            .map(|e| (e.crop_id.clone(), e.status.clone(), e.rank.unwrap_or(0)))
            .collect();
        got.sort_by_key(|g| g.2);
        ensure(got == want, || {
            format!("table {t} (n={n}, fraction {p}/{q}) differs from oracle")
        })?;
        let sel = got.iter().filter(|g| g.1 == Status::Selected).count();
        ensure(sel <= keep, || format!("table {t}: back-fill"))?;
        selected_total += sel;
        threshold_rejections += got
            .iter()
            .filter(|g| matches!(g.1, Status::FailedThreshold(_)))
            .count();
    }
    ensure(threshold_rejections > 0, || {
        "thresholds never rejected anything".into()
    })?;
    Ok(format!(
        "1000 tables, {selected_total} selected, {threshold_rejections} threshold rejections"
    ))
}

fn oracle_iou(a: &SquareCrop, b: &SquareCrop) -> f64 {
    let ix = (a.x + a.side).min(b.x + b.side) - a.x.max(b.x);
    let iy = (a.y + a.side).min(b.y + b.side) - a.y.max(b.y);
    let inter = ix.max(0.0) * iy.max(0.0);
    inter / (a.side * a.side + b.side * b.side - inter)
}

fn random_crops(r: &mut ChaCha8Rng, k: usize) -> Vec<SquareCrop> {
    let (iw, ih) = (r.random_range(200..800u32), r.random_range(200..800u32));
    let mut out: Vec<SquareCrop> = Vec::with_capacity(k);
    for _ in 0..k {
        if !out.is_empty() && r.random_bool(0.1) {
            let c = out[r.random_range(0..out.len())];
            out.push(c);
            continue;
        }
        if !out.is_empty() && r.random_bool(0.1) {
            // mirror image: same center distance, different x
            let mut c = out[r.random_range(0..out.len())];
            c.x = f64::from(iw) - c.x - c.side;
            out.push(c);
            continue;
        }
        let w = r.random_range(10.0..f64::from(iw) * 0.6);
        let h = r.random_range(10.0..f64::from(ih) * 0.6);
        let x = r.random_range(0.0..f64::from(iw) - w);
        let y = r.random_range(0.0..f64::from(ih) - h);
        out.push(squarify(&BBox::new(x, y, w, h), iw, ih));
    }
    out
}

/// Exhaustive search for the subset that satisfies the greedy fixed point:
/// a crop is kept exactly when no earlier-priority kept crop overlaps it.
fn exhaustive_nms(crops: &[SquareCrop], thr: f64) -> Result<Vec<SquareCrop>, String> {
    let mut order: Vec<usize> = (0..crops.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&crops[a], &crops[b]);
        p.center_distance
            .total_cmp(&q.center_distance)
            .then(p.x.total_cmp(&q.x))
            .then(p.y.total_cmp(&q.y))
    });
    let pri: Vec<SquareCrop> = order.iter().map(|&i| crops[i]).collect();
    let mut found = Vec::new();
    for mask in 0u32..(1 << pri.len()) {
        let consistent = (0..pri.len()).all(|j| {
            let blocked =
                (0..j).any(|i| mask & (1 << i) != 0 && oracle_iou(&pri[i], &pri[j]) > thr);
            (mask & (1 << j) != 0) == !blocked
        });
        if consistent {
            found.push(mask);
        }
    }
    match found.as_slice() {
        [mask] => Ok((0..pri.len())
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| pri[j])
            .collect()),
        other => Err(format!("{} consistent subsets", other.len())),
    }
}

fn nms_oracle() -> Check {
    let mut r = rng(3);
    let thresholds = [0.45, 0.3, 0.7, 0.0, 1.0];
    let mut suppressed = 0;
    for t in 0..10_000 {
        let k = r.random_range(0..=6);
        let crops = random_crops(&mut r, k);
        let thr = if r.random_bool(0.2) {
            r.random_range(0.0..1.0)
        } else {
            thresholds[r.random_range(0..thresholds.len())]
        };
        let want = exhaustive_nms(&crops, thr).map_err(|e| format!("trial {t}: {e}"))?;
        let got = center_priority_nms(&crops, thr).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("trial {t}: differs from oracle"))?;
        let again = center_priority_nms(&got, thr).map_err(|e| e.to_string())?;
        ensure(again == got, || format!("trial {t}: not idempotent"))?;
        let mut shuffled = crops.clone();
        shuffled.shuffle(&mut r);
        let perm = center_priority_nms(&shuffled, thr).map_err(|e| e.to_string())?;
        ensure(perm == got, || format!("trial {t}: depends on input order"))?;
        suppressed += crops.len() - got.len();
    }
    Ok(format!("10000 trials, {suppressed} crops suppressed"))
}

fn squarify_geometry() -> Check {
    let mut r = rng(4);
    let eps = 1e-9;
    let mut feasible = 0;
    for t in 0..10_000 {
        let iw = r.random_range(16..=2000u32);
        let ih = r.random_range(16..=2000u32);
        let (fw, fh) = (f64::from(iw), f64::from(ih));
        let x = r.random_range(0.0..fw - 1.0);
        let y = r.random_range(0.0..fh - 1.0);
        let w = r.random_range(0.5..=fw - x);
        let h = r.random_range(0.5..=fh - y);
        let b = BBox::new(x, y, w, h);
        let c = squarify(&b, iw, ih);
        let rect = c.as_bbox();
        ensure(rect.w == rect.h && c.side > 0.0, || {
            format!("pair {t}: not square")
        })?;
        ensure(
            c.x >= -eps && c.y >= -eps && c.x + c.side <= fw + eps && c.y + c.side <= fh + eps,
            || format!("pair {t}: {c:?} outside {iw}x{ih}"),
        )?;
        let want = w.max(h);
        if want <= fw.min(fh) {
            feasible += 1;
            ensure((c.side - want).abs() <= eps, || {
                format!("pair {t}: side {} vs {want}", c.side)
            })?;
            ensure(
                c.x <= x + eps
                    && c.y <= y + eps
                    && c.x + c.side >= x + w - eps
                    && c.y + c.side >= y + h - eps,
                || format!("pair {t}: box {b:?} not inside {c:?}"),
            )?;
        }
    }
    Ok(format!("10000 pairs, {feasible} with feasible containment"))
}

/// Direct 4-neighbour Laplacian with replicated borders, then population variance.
fn oracle_laplacian_variance(img: &[Vec<f64>]) -> f64 {
    let h = img.len() as isize;
    let w = img[0].len() as isize;
    let at = |y: isize, x: isize| img[y.clamp(0, h - 1) as usize][x.clamp(0, w - 1) as usize];
    let mut resp = Vec::new();
    for y in 0..h {
        for x in 0..w {
            resp.push(at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x));
        }
    }
    let n = resp.len() as f64;
    let mean = resp.iter().sum::<f64>() / n;
    resp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

fn nss_images() -> Result<Vec<(String, ImageBuffer)>, String> {
    let mut paths: Vec<PathBuf> = fs::read_dir(data("nss"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jpg"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            ImageBuffer::open(p)
                .map(|img| (name, img))
                .map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect()
}

fn laplacian_checks() -> Check {
    let mut r = rng(5);
    for _ in 0..50 {
        let (w, h) = (r.random_range(3..64), r.random_range(3..64));
        let v = if r.random_bool(0.5) {
            f64::from(r.random_range(0..=255u8))
        } else {
            r.random_range(0.0..255.0)
        };
        let got =
            laplacian_variance(&ImageBuffer::filled(w, h, 1, v)).map_err(|e| e.to_string())?;
        ensure(got == 0.0, || format!("constant {v} on {w}x{h}: {got}"))?;
    }
    let mut worst: f64 = 0.0;
    for py in 0..5 {
        for px in 0..5 {
            for amp in [1.0, 255.0] {
                let mut grid = vec![vec![0.0; 5]; 5];
                grid[py][px] = amp;
                let img = ImageBuffer::gray_from_fn(5, 5, |x, y| grid[y][x]);
                let got = laplacian_variance(&img).map_err(|e| e.to_string())?;
                let want = oracle_laplacian_variance(&grid);
                worst = worst.max((got - want).abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("delta error {worst:e}"))?;
    let images = nss_images()?;
    ensure(images.len() == 50, || {
        format!("{} corpus images", images.len())
    })?;
    let mut min_ratio = f64::INFINITY;
    for (name, img) in &images {
        let gray = to_luma(img);
        let before = laplacian_variance(&gray).map_err(|e| e.to_string())?;
        let after = laplacian_variance(&gaussian_blur(&gray, 3.0)).map_err(|e| e.to_string())?;
        ensure(after < before, || format!("{name}: {before} -> {after}"))?;
        min_ratio = min_ratio.min(before / after);
    }
    Ok(format!(
        "delta error {worst:.1e}; blur lowered variance on 50/50 (min ratio {min_ratio:.1})"
    ))
}

fn ggd_sample(r: &mut ChaCha8Rng, alpha: f64, scale: f64, n: usize) -> Vec<f64> {
    let g = Gamma::new(1.0 / alpha, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let m = scale * g.sample(r).powf(1.0 / alpha);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn aggd_sample(r: &mut ChaCha8Rng, alpha: f64, bl: f64, br: f64, n: usize) -> Vec<f64> {
    let g = Gamma::new(1.0 / alpha, 1.0).unwrap();
    let p_left = bl / (bl + br);
    (0..n)
        .map(|_| {
            let u = g.sample(r).powf(1.0 / alpha);
            if r.random_bool(p_left) {
                -bl * u
            } else {
                br * u
            }
        })
        .collect()
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn niqe_numerics() -> Check {
    let camera = ImageBuffer::open(data("canonical/camera.png")).map_err(|e| e.to_string())?;
    let model = niqe_fit(std::slice::from_ref(&camera), 64, 1.0).map_err(|e| e.to_string())?;
    let self_score = niqe_score(&camera, &model).map_err(|e| e.to_string())?;
    ensure(self_score.abs() <= 1e-6, || {
        format!("self score {self_score}")
    })?;

    let mut r = rng(6);
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for (alpha, scale) in [(0.6, 1.0), (1.0, 0.5), (2.0, 2.0), (3.0, 1.5)] {
        let fit = estimate_ggd(&ggd_sample(&mut r, alpha, scale, n)).map_err(|e| e.to_string())?;
        let sigma_sq = scale * scale * (ln_gamma(3.0 / alpha) - ln_gamma(1.0 / alpha)).exp();
        let e = rel(fit.alpha, alpha).max(rel(fit.sigma_sq, sigma_sq));
        ensure(e <= 0.1, || format!("ggd alpha {alpha}: {fit:?}"))?;
        worst = worst.max(e);
    }
    for (alpha, bl, br) in [(1.5, 1.0, 3.0), (0.8, 2.0, 1.0), (2.0, 1.0, 1.0)] {
        let fit =
            estimate_aggd(&aggd_sample(&mut r, alpha, bl, br, n)).map_err(|e| e.to_string())?;
        let e = rel(fit.alpha, alpha)
            .max(rel(fit.beta_left, bl))
            .max(rel(fit.beta_right, br));
        ensure(e <= 0.1, || format!("aggd ({alpha}, {bl}, {br}): {fit:?}"))?;
        worst = worst.max(e);
    }

    let refs: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(data("canonical/reference.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let mut parity: f64 = 0.0;
    for name in ["camera", "moon", "astronaut_gray"] {
        let img =
            ImageBuffer::open(data(&format!("canonical/{name}.png"))).map_err(|e| e.to_string())?;
        let got = niqe_score(&img, NiqeModel::pristine()).map_err(|e| e.to_string())?;
        let want = refs["niqe"][name].as_f64().ok_or("reference missing")?;
        ensure((got - want).abs() <= 0.5, || {
            format!("{name}: {got} vs {want}")
        })?;
        parity = parity.max((got - want).abs());
    }
    Ok(format!(
        "self score {self_score:.1e}, max estimator error {:.2}%, max reference gap {parity:.3}",
        worst * 100.0
    ))
}

fn jpeg_roundtrip(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer, String> {
    let mut buf = Vec::new();
    let rgb = img.to_dynamic().to_rgb8();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&rgb)
        .map_err(|e| e.to_string())?;
    ImageBuffer::decode(&buf).map_err(|e| e.to_string())
}

fn toy_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(data("toy/pipeline.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn read_manifest(dir: &Path) -> Result<SelectionManifest, String> {
    let file = fs::File::open(dir.join(files::MANIFEST)).map_err(|e| e.to_string())?;
    SelectionManifest::read_jsonl(std::io::BufReader::new(file)).map_err(|e| e.to_string())
}

fn niqe_ordering() -> Check {
    let images = nss_images()?;
    let model = NiqeModel::pristine();
    let results: Vec<Result<(bool, bool), String>> = images
        .par_iter()
        .map(|(name, img)| {
            let score = |i: &ImageBuffer| niqe_score(i, model).map_err(|e| format!("{name}: {e}"));
            let base = score(img)?;
            let blurred = score(&gaussian_blur(img, 3.0).quantized())?;
            let jpeg = score(&jpeg_roundtrip(img, 10)?)?;
            Ok((blurred > base, jpeg > base))
        })
        .collect();
    let mut blur_worse = 0;
    let mut jpeg_worse = 0;
    let mut exceptions = Vec::new();
    for ((name, _), res) in images.iter().zip(results) {
        let (b, j) = res?;
        blur_worse += usize::from(b);
        jpeg_worse += usize::from(j);
        if !b {
            exceptions.push(format!("{name} blur"));
        }
        if !j {
            exceptions.push(format!("{name} jpeg"));
        }
    }
    let cases = 2 * images.len();
    let share = (blur_worse + jpeg_worse) as f64 / cases as f64;
    ensure(share >= 0.95, || {
        format!("degraded copies worse in {blur_worse}+{jpeg_worse} of {cases}")
    })?;

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(&toy_config(out.path()), &RunOptions::default()).map_err(|e| e.to_string())?;
    let manifest = read_manifest(out.path())?;
    let pool: Vec<f64> = manifest
        .entries
        .iter()
        .filter_map(|e| e.scores.get("niqe").copied())
        .collect();
    let curated: Vec<f64> = manifest
        .selected()
        .filter_map(|e| e.scores.get("niqe").copied())
        .collect();
    ensure(!curated.is_empty(), || "nothing selected".into())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (pm, cm) = (mean(&pool), mean(&curated));
    ensure(cm < pm, || {
        format!("curated mean {cm} not below pool mean {pm}")
    })?;
    Ok(format!(
        "worse in {}/{cases} (blur {blur_worse}, jpeg {jpeg_worse}; exceptions: {}); curated mean niqe {cm:.3} < pool {pm:.3} ({} vs {})",
        blur_worse + jpeg_worse,
        exceptions.join(", "),
        curated.len(),
        pool.len()
    ))
}

fn determinism() -> Check {
    let dirs: Vec<tempfile::TempDir> = (0..3)
        .map(|_| tempfile::tempdir())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut one = toy_config(dirs[0].path());
    one.worker_count = 1;
    run(&one, &RunOptions::default()).map_err(|e| e.to_string())?;
    let mut eight = toy_config(dirs[1].path());
    eight.worker_count = 8;
    eight.shard_size = 3;
    run(&eight, &RunOptions::default()).map_err(|e| e.to_string())?;

    let killed = toy_config(dirs[2].path());
    let halt = RunOptions {
        resume: false,
        halt_after_shards: Some(2),
    };
    match run(&killed, &halt) {
        Err(PipelineError::Halted(2)) => {}
        other => return Err(format!("expected a halt, got {:?}", other.map(|o| o.stats))),
    }
    let resumed = run(
        &killed,
        &RunOptions {
            resume: true,
            halt_after_shards: None,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(resumed.reused_shards == 2, || {
        format!("resume reused {} shards", resumed.reused_shards)
    })?;

    let read =
        |d: &tempfile::TempDir| fs::read(d.path().join(files::MANIFEST)).map_err(|e| e.to_string());
    let base = read(&dirs[0])?;
    ensure(base == read(&dirs[1])?, || "workers 1 vs 8 differ".into())?;
    ensure(base == read(&dirs[2])?, || {
        "halted and resumed run differs".into()
    })?;
    Ok(format!(
        "{} manifest bytes identical across workers 1/8 and halt+resume",
        base.len()
    ))
}

fn rgb_512(name: &str) -> Result<ImageBuffer, String> {
    let img = ImageBuffer::open(data(&format!("nss/{name}.jpg"))).map_err(|e| e.to_string())?;
    Ok(resize(&img, 512, ResizeFilter::Bicubic)
        .map_err(|e| e.to_string())?
        .quantized())
}

fn degradation() -> Check {
    let img = rgb_512("nss_05_china")?;
    let (out, _) =
        degrade(&img, &DegradationConfig::identity(1), "id").map_err(|e| e.to_string())?;
    let max = img
        .data()
        .iter()
        .zip(out.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(max <= 1.0, || format!("identity max diff {max}"))?;

    let cfg = DegradationConfig {
        seed: 42,
        ..Default::default()
    };
    let (a, pa) = degrade(&img, &cfg, "crop#0").map_err(|e| e.to_string())?;
    let (b, pb) = degrade(&img, &cfg, "crop#0").map_err(|e| e.to_string())?;
    ensure(pa == pb, || "parameters differ under the same seed".into())?;
    ensure(
        a.encode_png().map_err(|e| e.to_string())? == b.encode_png().map_err(|e| e.to_string())?,
        || "LQ differs under the same seed".into(),
    )?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let hq = dir.path().join("hq");
    fs::create_dir_all(&hq).map_err(|e| e.to_string())?;
    let names = [
        "nss_00_astronaut",
        "nss_01_brick",
        "nss_04_chelsea",
        "nss_08_coins",
    ];
    let mut entries = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let id = format!("coco_{i}#0");
        rgb_512(name)?
            .save(hq.join(crop_file_name(&id, "png")))
            .map_err(|e| e.to_string())?;
        entries.push(ManifestEntry::rejected(
            id,
            "img".into(),
            DatasetOrigin::Coco,
            dummy_crop(),
            None,
            Status::Selected,
        ));
    }
    let pairs = dir.path().join("pairs");
    build_pairs(&SelectionManifest::new(entries), &hq, &cfg, &pairs).map_err(|e| e.to_string())?;
    let log = fs::read_to_string(pairs.join("pairs.jsonl")).map_err(|e| e.to_string())?;
    let mut replayed = 0;
    for line in log.lines() {
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let hq_img = ImageBuffer::open(&rec.hq_path).map_err(|e| e.to_string())?;
        let lq = ImageBuffer::open(&rec.lq_path).map_err(|e| e.to_string())?;
        let replay = render(&hq_img, &rec.params).map_err(|e| e.to_string())?;
        ensure(replay == lq, || format!("{}: replay differs", rec.crop_id))?;
        replayed += 1;
    }
    ensure(replayed == names.len(), || {
        format!("{replayed} pairs logged")
    })?;
    Ok(format!(
        "identity max diff {max}, seed reproducible, {replayed}/{replayed} pairs replayed exactly"
    ))
}

/// Textured 512x512 RGB test card with one person-sized box.
fn synthetic(i: u64) -> (ImageBuffer, BBox) {
    let mut r = rng(1000 + i);
    let (fx, fy) = (r.random_range(0.02..0.3), r.random_range(0.02..0.3));
    let noise: Vec<f64> = (0..512 * 512)
        .map(|_| r.random_range(-20.0..20.0))
        .collect();
    let planes: Vec<ImageBuffer> = (0..3)
        .map(|c| {
            ImageBuffer::gray_from_fn(512, 512, |x, y| {
                let s = ((x as f64 * fx + c as f64).sin() * (y as f64 * fy).cos()) * 80.0;
                (128.0 + s + noise[y * 512 + x]).clamp(0.0, 255.0).round()
            })
        })
        .collect();
    let w = r.random_range(150.0..300.0);
    let h = r.random_range(250.0..480.0);
    let b = BBox::new(
        r.random_range(0.0..512.0 - w),
        r.random_range(0.0..512.0 - h),
        w,
        h,
    );
    (ImageBuffer::from_channels(&planes).unwrap(), b)
}

fn throughput() -> Check {
    let n = 1000u64;
    let model = NiqeModel::pristine();
    let start = Instant::now();
    let scores: Vec<Result<f64, String>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (img, b) = synthetic(i);
            laplacian_variance(&to_luma(&img)).map_err(|e| e.to_string())?;
            let sq = squarify(&b, 512, 512);
            let patch = crop(&img, &sq).map_err(|e| e.to_string())?;
            let filter = ResizeFilter::auto(patch.width(), 512);
            let out = resize(&patch, 512, filter)
                .map_err(|e| e.to_string())?
                .quantized();
            niqe_score(&out, model).map_err(|e| e.to_string())
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = scores.iter().filter(|s| s.is_ok()).count();
    if let Some(Err(e)) = scores.iter().find(|s| s.is_err()) {
        return Err(format!("{} failures, first: {e}", n as usize - ok));
    }
    Ok(format!(
        "{n} images in {elapsed:.1} s on {} threads ({:.1} images/s; target < 60 s on 8 cores)",
        rayon::current_num_threads(),
        n as f64 / elapsed
    ))
}

fn main() {
    let criteria = [
        Criterion {
            name: "z-score standardization and aggregate",
            budget: Some(Duration::from_secs(5)),
            check: z_statistics,
        },
        Criterion {
            name: "selection matches sort-and-filter oracle",
            budget: Some(Duration::from_secs(10)),
            check: selection_oracle,
        },
        Criterion {
            name: "center-priority NMS matches exhaustive oracle",
            budget: Some(Duration::from_secs(10)),
            check: nms_oracle,
        },
        Criterion {
            name: "squarify geometry",
            budget: Some(Duration::from_secs(2)),
            check: squarify_geometry,
        },
        Criterion {
            name: "Laplacian variance",
            budget: Some(Duration::from_secs(10)),
            check: laplacian_checks,
        },
        Criterion {
            name: "NIQE numerics",
            budget: Some(Duration::from_secs(60)),
            check: niqe_numerics,
        },
        Criterion {
            name: "NIQE quality ordering",
            budget: Some(Duration::from_secs(120)),
            check: niqe_ordering,
        },
        Criterion {
            name: "end-to-end determinism",
            budget: Some(Duration::from_secs(60)),
            check: determinism,
        },
        Criterion {
            name: "degradation reproducibility",
            budget: Some(Duration::from_secs(30)),
            check: degradation,
        },
        Criterion {
            name: "throughput (soft)",
            budget: None,
            check: throughput,
        },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!(
                "took {:.2} s, budget {} s",
                elapsed.as_secs_f64(),
                b.as_secs()
            )),
            (r, _) => r,
        };
        let label = match (&result, c.budget) {
            (Ok(_), Some(_)) => "PASS",
            (Ok(_), None) => "INFO",
            (Err(_), _) => {
                failed += 1;
                "FAIL"
            }
        };
        let detail = match &result {
            Ok(d) | Err(d) => d,
        };
        println!(
            "{label} {:<46} {:>8.2} s  {detail}",
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
