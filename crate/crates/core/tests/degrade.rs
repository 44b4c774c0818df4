use std::path::{Path, PathBuf};

use hqacf::annotations::{BBox, DatasetOrigin};
use hqacf::boxgeom::SquareCrop;
use hqacf::degrade::{build_pairs, degrade, render, DegradationConfig, DrawnParams, PairRecord};
use hqacf::imaging::{laplacian_variance, resize, to_luma, ImageBuffer, ResizeFilter};
use hqacf::iqa::{niqe_score, NiqeModel};
use hqacf::selection::{crop_file_name, ManifestEntry, SelectionManifest, Status};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(rel)
}

fn rgb_512(name: &str) -> ImageBuffer {
    let img = ImageBuffer::open(data(&format!("nss/{name}.jpg"))).unwrap();
    resize(&img, 512, ResizeFilter::Bicubic)
        .unwrap()
        .quantized()
}

#[test]
fn identity_config_is_identity() {
    let img = rgb_512("nss_05_china");
    let (out, params) = degrade(&img, &DegradationConfig::identity(1), "c0").unwrap();
    assert_eq!(params.rounds.len(), 2);
    let max = img
        .data()
        .iter()
        .zip(out.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max <= 1.0, "max diff {max}");
}

#[test]
fn same_seed_same_output() {
    let img = rgb_512("nss_07_coffee");
    let cfg = DegradationConfig {
        seed: 42,
        ..Default::default()
    };
    let (a, pa) = degrade(&img, &cfg, "crop-a").unwrap();
    let (b, pb) = degrade(&img, &cfg, "crop-a").unwrap();
    assert_eq!(pa, pb);
    assert_eq!(a.encode_png().unwrap(), b.encode_png().unwrap());
    let (c, _) = degrade(&img, &cfg, "crop-b").unwrap();
    assert_ne!(a, c);
}

#[test]
fn non_512_input_is_rejected() {
    let img = ImageBuffer::filled(256, 256, 3, 9.0);
    assert!(degrade(&img, &DegradationConfig::default(), "x").is_err());
}

#[test]
fn default_config_degrades_a_sharp_image() {
    let img = ImageBuffer::open(data("canonical/camera.png")).unwrap();
    let cfg = DegradationConfig {
        seed: 3,
        ..Default::default()
    };
    let lap0 = laplacian_variance(&to_luma(&img)).unwrap();
    let niqe0 = niqe_score(&img, NiqeModel::pristine()).unwrap();
    for id in ["camera#0", "camera#1", "camera#2"] {
        let (lq, params) = degrade(&img, &cfg, id).unwrap();
        params.check_within(&cfg).unwrap();
        let lap = laplacian_variance(&to_luma(&lq)).unwrap();
        let niqe = niqe_score(&lq, NiqeModel::pristine()).unwrap();
        println!("{id}: laplacian {lap0:.1} -> {lap:.1}, niqe {niqe0:.3} -> {niqe:.3}");
        assert!(lap < lap0);
        assert!(niqe > niqe0);
    }
}

#[test]
fn x4_flag_emits_quarter_size() {
    let img = rgb_512("nss_09_flower");
    let mut cfg = DegradationConfig::default();
    cfg.final_stage.downscale_x4 = true;
    let (lq, _) = degrade(&img, &cfg, "f").unwrap();
    assert_eq!((lq.width(), lq.height()), (128, 128));
}

fn manifest_with(ids: &[String]) -> SelectionManifest {
    let crop = SquareCrop {
        x: 0.0,
        y: 0.0,
        side: 512.0,
        source_box: BBox::new(0.0, 0.0, 512.0, 512.0),
        center_distance: 0.0,
    };
    SelectionManifest::new(
        ids.iter()
            .map(|id| {
                ManifestEntry::rejected(
                    id.clone(),
                    "img".into(),
                    DatasetOrigin::Coco,
                    crop,
                    None,
                    Status::Selected,
                )
            })
            .collect(),
    )
}

#[test]
fn pairs_are_complete_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let hq = dir.path().join("hq");
    std::fs::create_dir_all(&hq).unwrap();
    let names = [
        "nss_00_astronaut",
        "nss_01_brick",
        "nss_04_chelsea",
        "nss_06_clock",
        "nss_08_coins",
    ];
    let ids: Vec<String> = (0..10).map(|i| format!("coco_{i}#0")).collect();
    for (i, id) in ids.iter().enumerate() {
        rgb_512(names[i % names.len()])
            .save(hq.join(crop_file_name(id, "png")))
            .unwrap();
    }
    let mut manifest = manifest_with(&ids);
    manifest.entries[3].status = Status::BelowTopFraction;
    let mut missing = manifest_with(&["ghost#0".to_string()]);
    manifest.extend(std::mem::take(&mut missing));

    let cfg = DegradationConfig {
        seed: 11,
        ..Default::default()
    };
    let out1 = dir.path().join("run1");
    let rep = build_pairs(&manifest, &hq, &cfg, &out1).unwrap();
    assert_eq!(rep.records.len(), 9);
    assert_eq!(rep.skipped.len(), 1);
    assert_eq!(rep.skipped[0].0, "ghost#0");
    let lines = std::fs::read_to_string(out1.join("pairs.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 9);

    let out2 = dir.path().join("run2");
    build_pairs(&manifest, &hq, &cfg, &out2).unwrap();
    for rec in &rep.records {
        let name = rec.lq_path.file_name().unwrap();
        assert_eq!(
            std::fs::read(&rec.lq_path).unwrap(),
            std::fs::read(out2.join("lq").join(name)).unwrap()
        );
    }

    for line in lines.lines() {
        let rec: PairRecord = serde_json::from_str(line).unwrap();
        rec.params.check_within(&cfg).unwrap();
        let params: DrawnParams = rec.params.clone();
        let hq_img = ImageBuffer::open(&rec.hq_path).unwrap();
        let replay = render(&hq_img, &params).unwrap();
        let lq = ImageBuffer::open(&rec.lq_path).unwrap();
        assert_eq!(replay, lq, "{}", rec.crop_id);
    }
}
