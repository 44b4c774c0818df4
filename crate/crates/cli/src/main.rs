mod args;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use hqacf::annotations::DatasetOrigin;
use hqacf::degrade::build_pairs;
use hqacf::imaging::ImageBuffer;
use hqacf::iqa::niqe_fit;
use hqacf::pipeline::{files, run, staged, PipelineConfig, PipelineError, RunOptions};
use hqacf::selection::{holdout_split, ManifestEntry, SelectionError, SelectionManifest};

use args::{Cli, Command, Common, GateFlags, SelectFlags};

/// A problem with flags or configuration (exit code 2).
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|cause| {
        cause.is::<ConfigError>()
            || cause
                .downcast_ref::<PipelineError>()
                .is_some_and(PipelineError::is_config)
            || cause
                .downcast_ref::<SelectionError>()
                .is_some_and(SelectionError::is_config)
            || cause
                .downcast_ref::<hqacf::Error>()
                .is_some_and(|e| e.kind() == hqacf::error::ErrorKind::Config)
    });
    if config {
        2
    } else {
        1
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Load the config and apply the shared overrides.
fn load(common: &Common) -> Result<PipelineConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| config_error("no config file: pass --config or set HQACF_CONFIG"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = common.workers {
        cfg.worker_count = n;
    }
    Ok(cfg)
}

fn apply_gate(cfg: &mut PipelineConfig, g: &GateFlags) {
    if let Some(v) = g.blur_threshold {
        cfg.blur_variance_threshold = v;
    }
    if let Some(v) = g.min_side {
        cfg.min_side = v;
    }
    if let Some(v) = g.iou_threshold {
        cfg.iou_threshold = v;
    }
}

fn apply_select(cfg: &mut PipelineConfig, s: &SelectFlags) -> Result<()> {
    if let Some(f) = s.fraction {
        cfg.selection_fraction = f;
    }
    if let Some(csv) = &s.csv {
        require_file(csv)?;
        cfg.scores_csv = Some(csv.clone());
    }
    Ok(())
}

fn require_file(path: &Path) -> Result<()> {
    fs::metadata(path)
        .map(|_| ())
        .with_context(|| format!("cannot read {}", path.display()))
}

fn finish(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn read_manifest(cfg: &PipelineConfig) -> Result<SelectionManifest> {
    let path = cfg.output_dir.join(files::MANIFEST);
    let file =
        fs::File::open(&path).with_context(|| format!("{}: run select first", path.display()))?;
    Ok(SelectionManifest::read_jsonl(std::io::BufReader::new(
        file,
    ))?)
}

fn parse_dataset(name: &str) -> Result<DatasetOrigin> {
    Ok(match name.trim() {
        "coco" => DatasetOrigin::Coco,
        "oid" => DatasetOrigin::Oid,
        "object365" => DatasetOrigin::Object365,
        "crowdhuman" => DatasetOrigin::CrowdHuman,
        "detection_import" => DatasetOrigin::DetectionImport,
        other => {
            return Err(config_error(format!(
                "--datasets: unknown dataset '{other}' (coco, oid, object365, crowdhuman, detection_import)"
            )))
        }
    })
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn write_entries(path: &Path, entries: Vec<ManifestEntry>) -> Result<()> {
    let mut buf = Vec::new();
    SelectionManifest::new(entries).write_jsonl(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(common) => {
            let cfg = finish(load(&common)?)?;
            let stats = staged::ingest_stage(&cfg)?;
            log::info!(
                "{} images, {} person-labelled",
                stats.collected,
                stats.person_labeled
            );
        }
        Command::Gate { common, gate } => {
            let mut cfg = load(&common)?;
            apply_gate(&mut cfg, &gate);
            let stats = staged::gate_stage(&finish(cfg)?)?;
            log::info!("{} passed the blur gate", stats.passed_blur_gate);
        }
        Command::Crop { common, gate } => {
            let mut cfg = load(&common)?;
            apply_gate(&mut cfg, &gate);
            let stats = staged::crop_stage(&finish(cfg)?)?;
            log::info!("{} crops after suppression", stats.crops_after_nms);
        }
        Command::Score(common) => {
            let stats = staged::score_stage(&finish(load(&common)?)?)?;
            log::info!("{} crops scored", stats.scored);
        }
        Command::IngestScores { common, csv } => {
            require_file(&csv)?;
            let cfg = finish(load(&common)?)?;
            let report = staged::ingest_scores_stage(&cfg, &csv)?;
            log::info!(
                "merged {} rows, columns {}",
                report.rows,
                report.columns.join(",")
            );
        }
        Command::Select { common, select } => {
            let mut cfg = load(&common)?;
            apply_select(&mut cfg, &select)?;
            let (stats, manifest) = staged::select_stage(&finish(cfg)?)?;
            if manifest.is_none() {
                anyhow::bail!(
                    "external scores are missing; merge them with ingest-scores or pass --csv"
                );
            }
            log::info!("{} of {} crops selected", stats.selected, stats.scored);
        }
        Command::Degrade { common, seed, x4 } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seed {
                cfg.degradation.seed = s;
            }
            if x4 {
                cfg.degradation.final_stage.downscale_x4 = true;
            }
            let cfg = finish(cfg)?;
            let manifest = read_manifest(&cfg)?;
            let report = build_pairs(
                &manifest,
                &cfg.output_dir.join(files::CURATED_DIR),
                &cfg.degradation,
                &cfg.output_dir.join("pairs"),
            )?;
            log::info!(
                "{} pairs written, {} skipped",
                report.records.len(),
                report.skipped.len()
            );
        }
        Command::NiqeFit {
            common,
            images,
            patch_size,
            sharpness_fraction,
        } => {
            let cfg = finish(load(&common)?)?;
            let paths = image_files(&images)?;
            if paths.is_empty() {
                anyhow::bail!("no png/jpg images in {}", images.display());
            }
            let imgs = paths
                .iter()
                .map(|p| ImageBuffer::open(p).with_context(|| p.display().to_string()))
                .collect::<Result<Vec<_>>>()?;
            let model = niqe_fit(&imgs, patch_size, sharpness_fraction)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("niqe_model.txt");
            model.save(&path)?;
            log::info!(
                "fitted on {} images, written to {}",
                imgs.len(),
                path.display()
            );
        }
        Command::Report(common) => {
            let cfg = finish(load(&common)?)?;
            print!("{}", staged::report(&cfg)?);
        }
        Command::Run {
            common,
            gate,
            select,
            checkpoints,
            resume,
        } => run_command(common, gate, select, checkpoints, resume)?,
        Command::Resume {
            common,
            gate,
            select,
            checkpoints,
        } => run_command(common, gate, select, checkpoints, true)?,
        Command::HoldoutSplit {
            common,
            seed,
            datasets,
            holdout_fraction,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seed {
                cfg.holdout.seed = s;
            }
            if let Some(names) = datasets {
                cfg.holdout.datasets = names
                    .iter()
                    .map(|n| parse_dataset(n))
                    .collect::<Result<_>>()?;
            }
            if let Some(f) = holdout_fraction {
                cfg.holdout.fraction = Some(f);
            }
            let cfg = finish(cfg)?;
            let split = holdout_split(&read_manifest(&cfg)?, &cfg.holdout)?;
            let (n_train, n_holdout) = (split.train.len(), split.holdout.len());
            write_entries(&cfg.output_dir.join("train.jsonl"), split.train)?;
            write_entries(&cfg.output_dir.join("holdout.jsonl"), split.holdout)?;
            log::info!("{n_train} train, {n_holdout} holdout");
        }
    }
    Ok(())
}

fn run_command(
    common: Common,
    gate: GateFlags,
    select: SelectFlags,
    checkpoints: Option<PathBuf>,
    resume: bool,
) -> Result<()> {
    let mut cfg = load(&common)?;
    apply_gate(&mut cfg, &gate);
    apply_select(&mut cfg, &select)?;
    if let Some(dir) = checkpoints {
        cfg.checkpoint_dir = Some(dir);
    }
    let cfg = finish(cfg)?;
    let outcome = run(
        &cfg,
        &RunOptions {
            resume,
            halt_after_shards: None,
        },
    )?;
    match outcome.manifest {
        Some(_) => log::info!(
            "{} of {} crops selected; manifest in {}",
            outcome.stats.selected,
            outcome.stats.scored,
            cfg.output_dir.join(files::MANIFEST).display()
        ),
        None => log::warn!(
            "stopped before selection: score {} externally, then run select --csv",
            cfg.output_dir.join(files::CROP_LIST).display()
        ),
    }
    Ok(())
}
