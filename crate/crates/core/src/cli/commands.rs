use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::config::{model_spec, phantom_config, train_config, DataSettings, FileConfig, TrainFlags};
use super::{BenchmarkArgs, EvalArgs, StatsArgs, SynthArgs, TrainArgs};
use crate::data::{read_manifest, slice_samples, synthesize_dataset, volume_samples, Purpose, Sample, SplitManifest};
use crate::error::{Error, IoContext, Result};
use crate::metrics::{binarize, MetricsReport};
use crate::models::{Checkpoint, Model, ModelSpec, Variant};
use crate::report::{box_plot_svg, metrics_table, overlay_svg, scatter_svg, stats_table, ModelRow};
use crate::stats::{parse_stats_csv, stats_csv, volume_report, Alternative, PairedVolumes, StatsRow, VolumeReport};
use crate::train::{evaluate, predict_samples, TrainConfig, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT};

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, text).at(path)
}

fn purpose(split: &str) -> Purpose {
    match split {
        "train" => Purpose::Train,
        "test" => Purpose::Test,
        _ => Purpose::Val,
    }
}

/// Model-ready samples of one split: filtered slices for 2D models,
/// resampled volumes for 3D models.
pub fn load_split(data: &DataSettings, manifest: &SplitManifest, split: &str, spec: &ModelSpec) -> Result<Vec<Sample>> {
    let ids = manifest.split(split)?;
    if spec.variant.is_3d() {
        let ext = <[usize; 3]>::try_from(spec.input_extents.as_slice()).map_err(|_| Error::Invalid("3D extents".into()))?;
        volume_samples(&data.root, ids, ext)
    } else {
        let e = spec.input_extents[0];
        if spec.input_extents[1] != e {
            return Err(Error::Invalid(format!("2D models need square inputs, got {:?}", spec.input_extents)));
        }
        slice_samples(&data.root, ids, purpose(split), e, data.min_lesion_fraction)
    }
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let file = FileConfig::load(a.config.as_deref())?;
    let cfg = phantom_config(&file, a.extents.clone())?;
    if a.subjects < 5 {
        return Err(Error::Usage(format!("--subjects must be at least 5, got {}", a.subjects)));
    }
    let m = synthesize_dataset(&a.out, a.subjects, a.seed, &cfg)?;
    println!("wrote {} subjects to {} (train {}, val {}, test {})", a.subjects, a.out.display(), m.train.len(), m.val.len(), m.test.len());
    Ok(())
}

pub fn run_dir(out: &Path, variant: Variant, seed: u64) -> PathBuf {
    out.join(variant.name()).join(seed.to_string())
}

fn parse_variant(name: &str) -> Result<Variant> {
    name.parse()
}

/// Builds or resumes a trainer and fits it, writing the run directory.
pub fn train_variant(spec: ModelSpec, cfg: TrainConfig, data: &DataSettings, out: &Path, resume: bool, timing: bool) -> Result<(Trainer, PathBuf)> {
    let manifest = read_manifest(&data.root)?;
    let dir = run_dir(out, spec.variant, cfg.master_seed);
    let mut trainer = if resume {
        let last = Checkpoint::read(&dir.join(LAST_CHECKPOINT))?;
        let best_path = dir.join(BEST_CHECKPOINT);
        let best = if best_path.exists() { Some(Checkpoint::read(&best_path)?) } else { None };
        let mut t = Trainer::from_checkpoint(&last, best.as_ref())?;
        if t.model.spec != spec {
            return Err(Error::Usage(format!("{} holds a different model configuration", dir.display())));
        }
        t.progress.config.epochs = cfg.epochs;
        t
    } else {
        Trainer::new(Model::build(spec.clone(), cfg.master_seed)?, cfg)?
    };
    let train = load_split(data, &manifest, "train", &spec)?;
    let val = load_split(data, &manifest, "val", &spec)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid(format!("{}: {} training and {} validation samples", spec.variant, train.len(), val.len())));
    }
    let mut settings = toml::Table::new();
    settings.insert("model".into(), toml::Value::try_from(&trainer.model.spec).map_err(|e| Error::Invalid(e.to_string()))?);
    settings.insert("train".into(), toml::Value::try_from(trainer.config()).map_err(|e| Error::Invalid(e.to_string()))?);
    write(&dir.join("settings.toml"), &toml::to_string(&settings).map_err(|e| Error::Invalid(e.to_string()))?)?;
    trainer.write_timing = timing;
    trainer.fit(&train, &val, Some(&dir))?;
    Ok((trainer, dir))
}

pub fn train(a: &TrainArgs) -> Result<PathBuf> {
    let variant = parse_variant(&a.model)?;
    let file = FileConfig::load(a.config.as_deref())?;
    let data = DataSettings::resolve(a.data.data.clone(), a.data.slice_extent, a.data.volume_extents.clone(), &file)?;
    let spec = model_spec(variant, a.width_scale, &file, &data)?;
    let flags = TrainFlags { seed: a.seed, epochs: a.epochs, batch_size: a.batch_size, lr: a.lr };
    let cfg = train_config(variant, &flags, &file)?;
    let (trainer, dir) = train_variant(spec, cfg, &data, &a.out, a.resume, true)?;
    let p = &trainer.progress;
    println!(
        "{}: {} epochs, best validation Dice {:.4} at epoch {}; run directory {}",
        variant,
        p.next_epoch,
        p.best_dice.unwrap_or(0.0),
        p.best_epoch.unwrap_or(0),
        dir.display()
    );
    Ok(dir)
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const VOLUMES_FILE: &str = "volumes.csv";

pub fn eval(a: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&a.model_ckpt)?;
    let model = ckpt.to_model()?;
    let file = FileConfig::load(a.config.as_deref())?;
    let mut data = DataSettings::resolve(a.data.clone(), None, None, &file)?;
    let spec = model.spec.clone();
    if spec.variant.is_3d() {
        data.volume_extents = <[usize; 3]>::try_from(spec.input_extents.as_slice()).map_err(|_| Error::Invalid("3D extents".into()))?;
    } else {
        data.slice_extent = spec.input_extents[0];
    }
    if a.split == "train" && !a.allow_train_split {
        return Err(Error::Usage("evaluating on the training split needs --allow-train-split".into()));
    }
    let manifest = read_manifest(&data.root)?;
    let samples = load_split(&data, &manifest, &a.split, &spec)?;
    let result = evaluate(&model, &samples, a.threshold, a.batch_size)?;
    let out = a.out.clone().unwrap_or_else(|| a.model_ckpt.parent().unwrap_or(Path::new(".")).join(format!("eval-{}", a.split)));
    fs::create_dir_all(&out).at(&out)?;
    result.report.write_csv(&out.join(METRICS_FILE))?;
    let summary = format!("{} on {} split\n{}", spec.variant, a.split, result.report.summary());
    write(&out.join(SUMMARY_FILE), &summary)?;
    if spec.variant.is_3d() {
        let mut volumes = PairedVolumes::default();
        for p in result.volumes {
            volumes.push(spec.variant.name(), p);
        }
        volumes.write_csv(&out.join(VOLUMES_FILE))?;
    }
    print!("{summary}");
    Ok(())
}

pub const STATS_FILE: &str = "stats.csv";
pub const STATS_TABLE_FILE: &str = "stats.md";
pub const BOX_PLOT_FILE: &str = "volume_boxplots.svg";

/// Stats CSV, table and plots for every model in `volumes`.
pub fn write_stats(volumes: &PairedVolumes, alternative: Alternative, out: &Path) -> Result<Vec<VolumeReport>> {
    let mut reports = Vec::new();
    for (model, pairs) in &volumes.models {
        let r = volume_report(model, pairs, alternative)?;
        if let Some(note) = &r.pearson_note {
            eprintln!("notice: {model}: Pearson correlation skipped ({note})");
        }
        write(&out.join(format!("scatter_{model}.svg")), &scatter_svg(&r))?;
        reports.push(r);
    }
    let rows: Vec<StatsRow> = reports.iter().map(StatsRow::from).collect();
    let csv = stats_csv(&rows);
    debug_assert_eq!(parse_stats_csv(&csv).map(|r| r.len()), Ok(rows.len()));
    write(&out.join(STATS_FILE), &csv)?;
    write(&out.join(STATS_TABLE_FILE), &stats_table(&rows))?;
    write(&out.join(BOX_PLOT_FILE), &box_plot_svg(&reports))?;
    Ok(reports)
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let alternative = match a.one_sided.as_deref() {
        None => Alternative::TwoSided,
        Some("greater") => Alternative::Greater,
        Some("less") => Alternative::Less,
        Some(other) => return Err(Error::Usage(format!("--one-sided takes 'greater' or 'less', got '{other}'"))),
    };
    let volumes = PairedVolumes::read_csv(&a.volumes)?;
    if volumes.models.is_empty() {
        return Err(Error::Invalid(format!("{} has no paired volumes", a.volumes.display())));
    }
    let reports = write_stats(&volumes, alternative, &a.out)?;
    print!("{}", stats_table(&reports.iter().map(StatsRow::from).collect::<Vec<_>>()));
    Ok(())
}

/// Middle axial plane of a sample, for overlays: `(rows, cols, plane indices)`.
fn display_plane(s: &Sample) -> (usize, usize, Vec<usize>) {
    match s.extents[..] {
        [r, c] => (r, c, (0..r * c).collect()),
        [nx, ny, nz] => {
            let z = nz / 2;
            (nx, ny, (0..nx * ny).map(|i| i * nz + z).collect())
        }
        _ => (0, 0, Vec::new()),
    }
}

struct Outcome {
    variant: Variant,
    result: Result<(MetricsReport, Vec<crate::stats::VolumePair>, String)>,
}

fn benchmark_one(variant: Variant, a: &BenchmarkArgs, file: &FileConfig, data: &DataSettings, manifest: &SplitManifest) -> Outcome {
    let start = Instant::now();
    let result = (|| {
        let spec = model_spec(variant, Some(a.scale), file, data)?;
        let flags = TrainFlags { seed: a.seed, epochs: a.epochs, ..TrainFlags::default() };
        let cfg = train_config(variant, &flags, file)?;
        let batch = cfg.batch_size;
        let threshold = cfg.threshold;
        let (trainer, _) = train_variant(spec.clone(), cfg, data, &a.out.join("runs"), false, false)?;
        let model = trainer.best.as_ref().unwrap_or(&trainer.model);
        let test = load_split(data, manifest, "test", &spec)?;
        let probs = predict_samples(model, &test, batch)?;
        let eval = crate::train::score_predictions(&test, &probs, threshold)?;
        let overlay = match test.first() {
            Some(s) => {
                let (rows, cols, idx) = display_plane(s);
                let pred = binarize(&probs[0], threshold);
                let image: Vec<f32> = idx.iter().map(|&i| s.image[i]).collect();
                let truth: Vec<u8> = idx.iter().map(|&i| (s.mask[i] > 0.5) as u8).collect();
                let pred: Vec<u8> = idx.iter().map(|&i| pred[i]).collect();
                overlay_svg(&format!("{}: {}", variant.title(), s.id), rows, cols, &image, &truth, &pred)
            }
            None => String::new(),
        };
        Ok((eval.report, eval.volumes, overlay))
    })();
    eprintln!("{variant}: {:.1}s", start.elapsed().as_secs_f64());
    Outcome { variant, result }
}

pub const REPORT_FILE: &str = "report.md";

pub fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let file = FileConfig::load(a.config.as_deref())?;
    let data = DataSettings::resolve(a.data.data.clone(), a.data.slice_extent, a.data.volume_extents.clone(), &file)?;
    let manifest = read_manifest(&data.root)?;
    let variants: Vec<Variant> = match &a.models {
        Some(names) => names.iter().map(|n| parse_variant(n)).collect::<Result<_>>()?,
        None => Variant::ALL.to_vec(),
    };
    fs::create_dir_all(&a.out).at(&a.out)?;

    let next = AtomicUsize::new(0);
    let outcomes = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..a.jobs.clamp(1, variants.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&v) = variants.get(i) else { break };
                let o = benchmark_one(v, a, &file, &data, &manifest);
                outcomes.lock().expect("outcome lock").push((i, o));
            });
        }
    });
    let mut outcomes = outcomes.into_inner().expect("outcome lock");
    outcomes.sort_by_key(|(i, _)| *i);

    let mut rows_2d = Vec::new();
    let mut rows_3d = Vec::new();
    let mut failures = Vec::new();
    let mut volumes = PairedVolumes::default();
    let mut first_error = None;
    for (_, o) in outcomes {
        let name = o.variant.name();
        match o.result {
            Ok((report, vols, overlay)) => {
                report.write_csv(&a.out.join(format!("metrics_{name}.csv")))?;
                if !overlay.is_empty() {
                    write(&a.out.join(format!("overlay_{name}.svg")), &overlay)?;
                }
                let row = ModelRow { model: o.variant.title().to_string(), scores: report.mean().unwrap_or(NO_SCORES), samples: report.len() };
                if o.variant.is_3d() {
                    for p in vols {
                        volumes.push(name, p);
                    }
                    rows_3d.push(row);
                } else {
                    rows_2d.push(row);
                }
            }
            Err(e) => {
                eprintln!("error: {name}: {e}");
                failures.push(format!("{name}: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }

    let mut report = String::from("# Benchmark\n\n");
    report.push_str(&format!("Width scale 1/{}, seed {}.\n\n", a.scale, a.seed.unwrap_or(0)));
    if !rows_2d.is_empty() {
        let t = metrics_table("Performance metrics, 2D models", &rows_2d);
        write(&a.out.join("metrics_2d.md"), &t)?;
        report.push_str(&t);
        report.push('\n');
    }
    if !rows_3d.is_empty() {
        let t = metrics_table("Performance metrics, 3D models", &rows_3d);
        write(&a.out.join("metrics_3d.md"), &t)?;
        report.push_str(&t);
        report.push('\n');
    }
    if !volumes.models.is_empty() {
        volumes.write_csv(&a.out.join(VOLUMES_FILE))?;
        let reports = write_stats(&volumes, Alternative::TwoSided, &a.out)?;
        report.push_str(&stats_table(&reports.iter().map(StatsRow::from).collect::<Vec<_>>()));
    }
    if !failures.is_empty() {
        report.push_str("\nFailed runs:\n\n");
        for f in &failures {
            report.push_str(&format!("- {f}\n"));
        }
    }
    write(&a.out.join(REPORT_FILE), &report)?;
    print!("{report}");
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

const NO_SCORES: crate::metrics::Scores = crate::metrics::Scores { dice: 0.0, iou: 0.0, precision: 0.0, recall: 0.0 };
