//! The `refalign` command line interface.
//!
//! Subcommands mirror the pipeline stages: `synth` builds a benchmark
//! directory, `pair` associates frames, `align` runs adaptive warping over
//! every pair, `eval-pme` scores alignment against annotated points, and
//! `eval-mask` scores change masks. The RANSAC seed resolves as
//! CLI flag > `REFALIGN_SEED` environment variable > manifest value.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use image::GrayImage;

use crate::evaluation::{
    self, CorrespondenceSet, EvaluationError, LabelMask, MaskTask, MetricAccumulator, PmeTable,
};
use crate::pipeline::{align_pair, associate_frames, translation_stats, FramePair, Trajectory};
use crate::tooling::formats::{
    parse_correspondences, parse_intrinsics, parse_trajectory, serialize_correspondences,
    serialize_intrinsics, serialize_trajectory, RunManifest, SynthConfig, ToolingError,
};
use crate::tooling::records::{
    read_align_records, write_align_records, AlignRecord, PairStatus,
};
use crate::tooling::synth::generate_synthetic_pair;

/// Environment variable overriding the manifest seed.
pub const SEED_ENV_VAR: &str = "REFALIGN_SEED";

#[derive(Parser)]
#[command(
    name = "refalign",
    about = "Reference-query image alignment and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Associate query frames with reference frames by pose and report
    /// translation statistics.
    Pair {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run adaptive warping over all associated pairs.
    Align {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the manifest (and environment) RANSAC seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit nonzero if any pair fails to align.
        #[arg(long)]
        strict: bool,
    },
    /// Compute the point-matching-error table for an alignment run.
    EvalPme {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Compute IoU/F1 metrics between predicted and ground-truth masks.
    EvalMask {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Optional directory of region-of-interest masks (nonzero = keep).
        #[arg(long)]
        roi: Option<PathBuf>,
        /// Optional file to write the report into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark directory.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        pairs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Binary,
    Multiclass,
}

impl From<TaskArg> for MaskTask {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Binary => MaskTask::Binary,
            TaskArg::Multiclass => MaskTask::Multiclass,
        }
    }
}

/// Entry point used by the binary and by tests. Returns the process exit
/// code; errors go to standard error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("refalign: {err}");
            1
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Tooling(#[from] ToolingError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{0}")]
    Other(String),
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ToolingError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| ToolingError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| ToolingError::io(path, e))
}

fn load_gray(path: &Path) -> Result<GrayImage, CliError> {
    let img = image::open(path)
        .map_err(|e| CliError::Other(format!("cannot load {}: {e}", path.display())))?;
    Ok(img.to_luma8())
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Pair { manifest } => cmd_pair(&manifest),
        Command::Align {
            manifest,
            seed,
            strict,
        } => cmd_align(&manifest, seed, strict),
        Command::EvalPme {
            results,
            annotations,
        } => cmd_eval_pme(&results, &annotations),
        Command::EvalMask {
            pred,
            gt,
            task,
            roi,
            out,
        } => cmd_eval_mask(&pred, &gt, task.into(), roi.as_deref(), out.as_deref()),
        Command::Synth { config, out, pairs } => cmd_synth(&config, &out, pairs),
    }
}

fn format_pairs(pairs: &[FramePair], generated_at: u64) -> String {
    let mut out = String::new();
    writeln!(out, "# refalign pair records").unwrap();
    writeln!(out, "# generated-at {generated_at}").unwrap();
    for p in pairs {
        writeln!(
            out,
            "pair={} ref={} gap={} rot_gap={}",
            p.query_id, p.ref_id, p.translation_gap, p.rotation_gap
        )
        .unwrap();
    }
    out
}

fn cmd_pair(manifest_path: &Path) -> Result<i32, CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    let reference = parse_trajectory(&manifest.ref_trajectory)?;
    let query = parse_trajectory(&manifest.query_trajectory)?;
    let pairs = associate_frames(&query, &reference);

    let edges: Vec<f64> = (0..=10).map(|i| i as f64 * 0.005).collect();
    let hist = translation_stats(&pairs, &edges, manifest.config.translation_gate);

    let now = unix_now();
    write_file(&manifest.output.join("pairs.txt"), &format_pairs(&pairs, now))?;

    let mut hist_text = String::new();
    writeln!(hist_text, "# refalign translation histogram").unwrap();
    writeln!(hist_text, "# generated-at {now}").unwrap();
    for (i, &count) in hist.counts.iter().enumerate() {
        let end = if i + 1 < hist.edges.len() {
            hist.edges[i + 1].to_string()
        } else {
            "inf".to_string()
        };
        writeln!(
            hist_text,
            "bin_start={} bin_end={} count={} cumulative={}",
            hist.edges[i], end, count, hist.cumulative[i]
        )
        .unwrap();
    }
    writeln!(
        hist_text,
        "gate={} fraction_below_gate={}",
        hist.gate, hist.fraction_below_gate
    )
    .unwrap();
    write_file(&manifest.output.join("translation_hist.txt"), &hist_text)?;

    println!(
        "paired {} query frames; {:.1}% of gaps below the {} m gate",
        pairs.len(),
        100.0 * hist.fraction_below_gate,
        hist.gate
    );
    Ok(0)
}

fn resolve_seed(flag: Option<u64>, manifest_seed: u64) -> u64 {
    if let Some(seed) = flag {
        return seed;
    }
    if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
        if let Ok(seed) = raw.parse() {
            return seed;
        }
    }
    manifest_seed
}

fn cmd_align(manifest_path: &Path, seed: Option<u64>, strict: bool) -> Result<i32, CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    let mut config = manifest.config.clone();
    config.ransac.seed = resolve_seed(seed, config.ransac.seed);

    let reference = parse_trajectory(&manifest.ref_trajectory)?;
    let query = parse_trajectory(&manifest.query_trajectory)?;
    let k1 = parse_intrinsics(&manifest.ref_intrinsics)?;
    let k2 = parse_intrinsics(&manifest.query_intrinsics)?;
    let pairs = associate_frames(&query, &reference);

    let mut records = Vec::with_capacity(pairs.len());
    let mut failures = 0usize;
    for (index, pair) in pairs.iter().enumerate() {
        // Per-pair seed so pair order never couples results.
        let mut pair_config = config.clone();
        pair_config.ransac.seed = config.ransac.seed.wrapping_add(index as u64);

        let outcome = (|| -> Result<AlignRecord, CliError> {
            let query_img = load_gray(&manifest.query_images.join(format!("{}.png", pair.query_id)))?;
            let ref_img = load_gray(&manifest.ref_images.join(format!("{}.png", pair.ref_id)))?;
            let result = align_pair(
                &query_img,
                &ref_img,
                pair,
                &query.frames()[pair.query_index].pose,
                &reference.frames()[pair.ref_index].pose,
                &k1,
                &k2,
                &pair_config,
            )
            .map_err(|e| CliError::Other(e.to_string()))?;

            let warped_path = manifest.output.join("warped").join(format!("{}.png", pair.query_id));
            let mask_path = manifest.output.join("masks").join(format!("{}.png", pair.query_id));
            for (path, img) in [(&warped_path, &result.warped_query), (&mask_path, &result.valid_mask)] {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| ToolingError::io(parent, e))?;
                }
                img.save(path)
                    .map_err(|e| CliError::Other(format!("cannot save {}: {e}", path.display())))?;
            }

            Ok(AlignRecord {
                pair_id: pair.query_id.clone(),
                ref_id: pair.ref_id.clone(),
                scene: manifest.scene.clone(),
                status: PairStatus::Ok,
                strategy: Some(result.strategy),
                inliers: result.inliers,
                score: result.score,
                image_size: ref_img.dimensions(),
                composed_h: Some(result.composed_h),
                rotation_h: result.rotation_h,
            })
        })();

        records.push(outcome.unwrap_or_else(|err| {
            failures += 1;
            AlignRecord {
                pair_id: pair.query_id.clone(),
                ref_id: pair.ref_id.clone(),
                scene: manifest.scene.clone(),
                status: PairStatus::Failed {
                    reason: err.to_string(),
                },
                strategy: None,
                inliers: 0,
                score: 0,
                image_size: (0, 0),
                composed_h: None,
                rotation_h: None,
            }
        }));
    }

    write_file(
        &manifest.output.join("align_results.txt"),
        &write_align_records(&records, unix_now()),
    )?;
    println!(
        "aligned {}/{} pairs (seed {})",
        records.len() - failures,
        records.len(),
        config.ransac.seed
    );
    if strict && failures > 0 {
        eprintln!("refalign: {failures} pair(s) failed in strict mode");
        return Ok(1);
    }
    Ok(0)
}

fn format_pme_table(table: &PmeTable) -> String {
    let mut out = String::new();
    write!(out, "{:<16}", "method").unwrap();
    for scene in &table.scenes {
        write!(out, "{:>14}", scene.scene).unwrap();
    }
    writeln!(out, "{:>14}", "Avg").unwrap();

    write!(out, "{:<16}", "adaptive").unwrap();
    for scene in &table.scenes {
        write!(out, "{:>14.4}", scene.adaptive_mean).unwrap();
    }
    writeln!(out, "{:>14.4}", table.adaptive_average).unwrap();

    if let Some(rotation_average) = table.rotation_only_average {
        write!(out, "{:<16}", "rotation-only").unwrap();
        for scene in &table.scenes {
            match scene.rotation_only_mean {
                Some(v) => write!(out, "{:>14.4}", v).unwrap(),
                None => write!(out, "{:>14}", "-").unwrap(),
            }
        }
        writeln!(out, "{:>14.4}", rotation_average).unwrap();
    }
    out
}

fn cmd_eval_pme(results_dir: &Path, annotations_dir: &Path) -> Result<i32, CliError> {
    let records_path = results_dir.join("align_results.txt");
    let text = fs::read_to_string(&records_path)
        .map_err(|e| ToolingError::io(&records_path, e))?;
    let records = read_align_records(&records_path, &text)?;

    let ok_records: Vec<&AlignRecord> = records
        .iter()
        .filter(|r| matches!(r.status, PairStatus::Ok) && r.composed_h.is_some())
        .collect();
    if ok_records.is_empty() {
        return Err(CliError::Other("no successfully aligned pairs to evaluate".into()));
    }

    let missing: Vec<String> = ok_records
        .iter()
        .filter(|r| !annotations_dir.join(format!("{}.csv", r.pair_id)).exists())
        .map(|r| r.pair_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvaluationError::MissingAnnotations(missing).into());
    }

    let mut annotations: BTreeMap<String, CorrespondenceSet> = BTreeMap::new();
    let mut eval_records = Vec::new();
    let mut diag = 0.0f64;
    for record in &ok_records {
        let cs = parse_correspondences(&annotations_dir.join(format!("{}.csv", record.pair_id)))?;
        annotations.insert(record.pair_id.clone(), cs);
        let (w, h) = record.image_size;
        diag = diag.max(((w * w + h * h) as f64).sqrt());
        eval_records.push(evaluation::AlignmentRecord {
            scene: record.scene.clone(),
            pair_id: record.pair_id.clone(),
            composed: record.composed_h.unwrap(),
            rotation_only: record.rotation_h,
        });
    }

    let table = evaluation::evaluate_alignment_run(&eval_records, &annotations, diag)?;

    let mut per_pair = String::new();
    writeln!(per_pair, "# refalign pme records").unwrap();
    writeln!(per_pair, "# generated-at {}", unix_now()).unwrap();
    for record in &eval_records {
        let cs = &annotations[&record.pair_id];
        write!(
            per_pair,
            "pair={} scene={} pme={}",
            record.pair_id,
            record.scene,
            evaluation::compute_pme(&record.composed, cs, diag)
        )
        .unwrap();
        if let Some(rot) = &record.rotation_only {
            write!(per_pair, " rot_pme={}", evaluation::compute_pme(rot, cs, diag)).unwrap();
        }
        writeln!(per_pair).unwrap();
    }
    write_file(&results_dir.join("pme_records.txt"), &per_pair)?;

    let table_text = format_pme_table(&table);
    write_file(&results_dir.join("pme_table.txt"), &table_text)?;
    print!("{table_text}");
    Ok(0)
}

fn mask_from_gray(img: &GrayImage) -> LabelMask {
    LabelMask::new(img.width(), img.height(), img.as_raw().clone()).unwrap()
}

fn roi_from_gray(img: &GrayImage) -> LabelMask {
    LabelMask::from_fn(img.width(), img.height(), |x, y| {
        u8::from(img.get_pixel(x, y).0[0] != 0)
    })
}

fn cmd_eval_mask(
    pred_dir: &Path,
    gt_dir: &Path,
    task: MaskTask,
    roi_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let mut names: Vec<String> = fs::read_dir(gt_dir)
        .map_err(|e| ToolingError::io(gt_dir, e))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            name.ends_with(".png").then_some(name)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Other(format!(
            "no .png masks found in {}",
            gt_dir.display()
        )));
    }

    let mut acc = MetricAccumulator::new(task);
    for name in &names {
        let gt = mask_from_gray(&load_gray(&gt_dir.join(name))?);
        let pred = mask_from_gray(&load_gray(&pred_dir.join(name))?);
        let roi = match roi_dir {
            Some(dir) => Some(roi_from_gray(&load_gray(&dir.join(name))?)),
            None => None,
        };
        acc.add(&pred, &gt, roi.as_ref())?;
    }
    let report = acc.report();

    let mut text = String::new();
    writeln!(text, "pairs evaluated: {}", names.len()).unwrap();
    writeln!(text, "{:<10}{:>12}{:>12}{:>12}{:>10}{:>10}", "class", "tp", "fp", "fn", "IoU", "F1")
        .unwrap();
    for (label, m) in &report.per_class {
        let name = match *label {
            evaluation::LABEL_STATIC => "static",
            evaluation::LABEL_ANOMALY => "anomaly",
            evaluation::LABEL_DYNAMIC => "dynamic",
            _ => "?",
        };
        writeln!(
            text,
            "{:<10}{:>12}{:>12}{:>12}{:>10.4}{:>10.4}",
            name, m.tp, m.fp, m.fn_, m.iou, m.f1
        )
        .unwrap();
    }
    match (report.miou, report.macro_f1) {
        (Some(miou), Some(mf1)) => {
            writeln!(text, "mIoU: {miou:.4}").unwrap();
            writeln!(text, "macro-F1: {mf1:.4}").unwrap();
        }
        _ => writeln!(text, "mIoU/macro-F1: undefined (no scored class present)").unwrap(),
    }
    print!("{text}");
    if let Some(out) = out {
        write_file(out, &text)?;
    }
    Ok(0)
}

fn cmd_synth(config_path: &Path, out_dir: &Path, pairs: usize) -> Result<i32, CliError> {
    let config = SynthConfig::load(config_path)?;
    if pairs == 0 {
        return Err(CliError::Other("--pairs must be at least 1".into()));
    }

    let mut ref_frames = Vec::with_capacity(pairs);
    let mut query_frames = Vec::with_capacity(pairs);
    let mut truth = String::new();
    writeln!(truth, "# refalign synthetic ground truth").unwrap();
    let mut intrinsics = None;

    for index in 0..pairs {
        let pair = generate_synthetic_pair(&config, index)?;
        let id = format!("{index:06}");

        let save = |sub: &str, img: &GrayImage| -> Result<(), CliError> {
            let path = out_dir.join(sub).join(format!("{id}.png"));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| ToolingError::io(parent, e))?;
            }
            img.save(&path)
                .map_err(|e| CliError::Other(format!("cannot save {}: {e}", path.display())))
        };
        save("ref", &pair.reference)?;
        save("query", &pair.query)?;
        write_file(
            &out_dir.join("annotations").join(format!("{id}.csv")),
            &serialize_correspondences(&pair.correspondences),
        )?;
        writeln!(
            truth,
            "pair={id} motion={} h={}",
            pair.motion.name(),
            pair.true_h
                .to_row_major()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();

        ref_frames.push(crate::pipeline::Frame {
            timestamp: index as f64,
            pose: pair.ref_pose.clone(),
            image_id: id.clone(),
        });
        query_frames.push(crate::pipeline::Frame {
            timestamp: index as f64,
            pose: pair.query_pose_stored.clone(),
            image_id: id.clone(),
        });
        intrinsics = Some(pair.intrinsics);
    }

    let reference = Trajectory::new(ref_frames).map_err(|e| CliError::Other(e.to_string()))?;
    let query = Trajectory::new(query_frames).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&out_dir.join("ref_trajectory.txt"), &serialize_trajectory(&reference))?;
    write_file(&out_dir.join("query_trajectory.txt"), &serialize_trajectory(&query))?;
    write_file(
        &out_dir.join("intrinsics.txt"),
        &serialize_intrinsics(&intrinsics.unwrap()),
    )?;
    write_file(&out_dir.join("truth").join("homographies.txt"), &truth)?;

    let manifest = format!(
        "scene: synthetic-{}\n\
         ref_trajectory: ref_trajectory.txt\n\
         query_trajectory: query_trajectory.txt\n\
         ref_intrinsics: intrinsics.txt\n\
         query_intrinsics: intrinsics.txt\n\
         ref_images: ref\n\
         query_images: query\n\
         annotations: annotations\n\
         output: results\n\
         seed: {}\n",
        config.motion.name(),
        config.seed
    );
    write_file(&out_dir.join("manifest.txt"), &manifest)?;

    println!(
        "generated {pairs} synthetic pair(s) in {} (manifest.txt ready for `refalign align`)",
        out_dir.display()
    );
    Ok(0)
}
