//! Experiment commands: generation, training, the γ-profile ablation,
//! fusion and evaluation of prediction files, and the inference benchmark.
//!
//! Every command takes an [`ExperimentConfig`], writes its files under
//! `config.out_dir` and returns what it wrote so callers can print or test it.
//! Everything except benchmark timings is a pure function of the config.

mod config;

pub use config::{
    AblationConfig, BenchConfig, ExperimentConfig, LossChoice, LossConfig, ModalityChoice, ModelConfig, ScheduleConfig,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_feature_table, preprocess_sequence, write_feature_table, write_manifest, Dataset,
    DatasetManifest, FrameSequence, Modality, Split, SyntheticWorld,
};
use crate::error::{Error, Result};
use crate::eval::{
    classwise_f1_delta, evaluate, fuse_tables, late_fuse, read_prediction_table, write_prediction_table, ClassF1Delta,
    EvalReport, PredictionTable,
};
use crate::model::{load_checkpoint, predict, save_checkpoint, train, LossKind, PathwayModel, TrainTrace};
use crate::rng::{derive_seed, substream, Stream};
use crate::schedule::{GammaMode, GammaSchedule};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Writes one header line plus one line per row.
fn write_csv<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Data(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    write_file(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

/// Generated or loaded dataset named by the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    match &cfg.feature_table {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!("feature table {} does not exist", path.display())));
            }
            load_feature_table(path)
        }
        None => generate_synthetic(&cfg.generator),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateOutcome {
    pub features: PathBuf,
    pub manifest: DatasetManifest,
    pub split_sizes: [usize; 3],
    /// Class-size histogram, one bar per class.
    pub histogram: String,
}

/// Writes `features.csv` and `manifest.json`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateOutcome> {
    cfg.generator.validate()?;
    let fingerprint = cfg.fingerprint();
    let manifest = DatasetManifest::new(&cfg.generator)?;
    let dataset = generate_synthetic::<f64>(&cfg.generator)?;
    prepare_out_dir(&cfg.out_dir)?;
    let features = cfg.out_dir.join("features.csv");
    write_feature_table(&features, &dataset, Some(&fingerprint))?;
    write_manifest(&cfg.out_dir.join("manifest.json"), &cfg.generator)?;
    Ok(GenerateOutcome {
        features,
        split_sizes: Split::ALL.map(|s| dataset.split_len(s)),
        histogram: histogram(&manifest.class_sizes),
        manifest,
    })
}

fn histogram(sizes: &[usize]) -> String {
    let max = sizes.iter().copied().max().unwrap_or(1).max(1);
    let mut s = String::new();
    for (c, &n) in sizes.iter().enumerate() {
        let bar = (n * 50).div_ceil(max);
        let _ = writeln!(s, "{c:>4} {n:>7} {}", "#".repeat(bar));
    }
    s
}

/// One trained pathway and its test-split evaluation.
#[derive(Clone, Debug)]
pub struct PathwayRun {
    pub modality: Modality,
    pub model: PathwayModel<f64>,
    pub trace: TrainTrace,
    pub predictions: PredictionTable<f64>,
    pub report: EvalReport,
}

/// Seed handed to one modality's pathway; the two pathways never share one.
pub fn pathway_seed(seed: u64, modality: Modality) -> u64 {
    derive_seed(seed, Stream::Pathway, modality.index())
}

/// Trains one pathway from scratch and evaluates it on the test split.
pub fn run_pathway(
    cfg: &ExperimentConfig,
    dataset: &Dataset<f64>,
    modality: Modality,
    loss: LossKind,
    schedule: &GammaSchedule<f64>,
    seed: u64,
    name: &str,
) -> Result<PathwayRun> {
    let (train_splits, val_splits): (&[Split], &[Split]) = if cfg.merge_train_val {
        (&[Split::Train, Split::Val], &[])
    } else {
        (&[Split::Train], &[Split::Val])
    };
    let train_set = dataset.examples(train_splits, modality);
    let val_set = dataset.examples(val_splits, modality);
    let test_set = dataset.examples(&[Split::Test], modality);
    if test_set.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let run_seed = pathway_seed(seed, modality);
    let mut dims = vec![dataset.feature_dim()];
    dims.extend(&cfg.model.hidden);
    let model = PathwayModel::init(&dims, dataset.num_classes(), run_seed)?.with_frozen_encoder(cfg.model.freeze_encoder);
    let (model, trace) = train(model, &train_set, &val_set, schedule, &cfg.train_config(loss, run_seed))?;
    let predictions = predict(&model, &test_set)?;
    let report = evaluate(&predictions, name, &cfg.fingerprint())?;
    Ok(PathwayRun {
        modality,
        model,
        trace,
        predictions,
        report,
    })
}

#[derive(Serialize)]
struct TraceFile<'a> {
    fingerprint: &'a str,
    modality: Modality,
    loss: LossKind,
    schedule: ScheduleConfig,
    trace: &'a TrainTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub name: String,
    pub top1: f64,
    pub top5: f64,
    pub weighted_f1: f64,
}

impl ReportLine {
    fn of(r: &EvalReport) -> Self {
        Self {
            name: r.name.clone(),
            top1: r.top1,
            top5: r.top5,
            weighted_f1: r.weighted.f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub fingerprint: String,
    pub loss: LossKind,
    pub schedule: ScheduleConfig,
    pub merge_train_val: bool,
    pub note: String,
    pub reports: Vec<ReportLine>,
}

impl TrainSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "{}", self.note);
        let _ = writeln!(s, "{:<8} {:>8} {:>8} {:>12}", "pathway", "top-1", "top-5", "weighted-f1");
        for r in &self.reports {
            let _ = writeln!(s, "{:<8} {:>8.2} {:>8.2} {:>12.4}", r.name, r.top1, r.top5, r.weighted_f1);
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub runs: Vec<PathwayRun>,
    pub fused: Option<EvalReport>,
    pub summary: TrainSummary,
}

impl TrainOutcome {
    pub fn reports(&self) -> Vec<&EvalReport> {
        self.runs.iter().map(|r| &r.report).chain(&self.fused).collect()
    }
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_json(&dir.join(format!("report_{}.json", report.name)), report)?;
    write_file(&dir.join(format!("report_{}.txt", report.name)), &report.to_text())?;
    write_csv(&dir.join(format!("report_{}.csv", report.name)), &report.per_class)
}

/// Trains each requested pathway, evaluates it, and fuses when asked.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint();
    let schedule = cfg.schedule.build()?;
    let loss = cfg.loss.loss_kind();
    let dataset = load_dataset(cfg)?;
    prepare_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("config.json"), cfg)?;

    let mut runs = Vec::new();
    for modality in cfg.modalities.modalities() {
        let run = run_pathway(cfg, &dataset, modality, loss, &schedule, cfg.seed, modality.as_str())?;
        let dir = &cfg.out_dir;
        save_checkpoint(&run.model, &fingerprint, &dir.join(format!("checkpoint_{modality}.json")))?;
        write_json(
            &dir.join(format!("trace_{modality}.json")),
            &TraceFile {
                fingerprint: &fingerprint,
                modality,
                loss,
                schedule: cfg.schedule,
                trace: &run.trace,
            },
        )?;
        write_prediction_table(
            &dir.join(format!("predictions_{modality}.csv")),
            &run.predictions,
            Some(&fingerprint),
        )?;
        write_report(dir, &run.report)?;
        runs.push(run);
    }

    let fused = if cfg.fusion {
        let table = fuse_tables(&runs[0].predictions, &runs[1].predictions)?;
        write_prediction_table(&cfg.out_dir.join("predictions_fused.csv"), &table, Some(&fingerprint))?;
        let report = evaluate(&table, "fused", &fingerprint)?;
        write_report(&cfg.out_dir, &report)?;
        Some(report)
    } else {
        None
    };

    let note = if cfg.merge_train_val {
        "trained from scratch on train+val; evaluated on test".to_string()
    } else {
        "trained on train; validated on val; evaluated on test".to_string()
    };
    let mut outcome = TrainOutcome {
        runs,
        fused,
        summary: TrainSummary {
            fingerprint,
            loss,
            schedule: cfg.schedule,
            merge_train_val: cfg.merge_train_val,
            note,
            reports: Vec::new(),
        },
    };
    outcome.summary.reports = outcome.reports().into_iter().map(ReportLine::of).collect();
    write_json(&cfg.out_dir.join("summary.json"), &outcome.summary)?;
    write_file(&cfg.out_dir.join("summary.txt"), &outcome.summary.to_text())?;
    Ok(outcome)
}

/// One γ profile of the ablation grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationProfile {
    pub name: &'static str,
    pub loss: LossKind,
    pub mode: Option<GammaMode>,
}

/// Cell order of every ablation report.
pub const ABLATION_PROFILES: [AblationProfile; 5] = [
    AblationProfile {
        name: "ce",
        loss: LossKind::CrossEntropy,
        mode: None,
    },
    AblationProfile {
        name: "linear_growth",
        loss: LossKind::Focal,
        mode: Some(GammaMode::LinearGrowth),
    },
    AblationProfile {
        name: "linear_decay",
        loss: LossKind::Focal,
        mode: Some(GammaMode::LinearDecay),
    },
    AblationProfile {
        name: "exp_growth",
        loss: LossKind::Focal,
        mode: Some(GammaMode::ExpGrowth),
    },
    AblationProfile {
        name: "exp_decay",
        loss: LossKind::Focal,
        mode: Some(GammaMode::ExpDecay),
    },
];

impl AblationProfile {
    /// Decay profiles run from the larger configured γ to the smaller one,
    /// growth profiles the other way round.
    pub fn schedule(&self, cfg: &ScheduleConfig) -> Result<GammaSchedule<f64>> {
        let hi = cfg.gamma_init.max(cfg.gamma_fin);
        let lo = cfg.gamma_init.min(cfg.gamma_fin);
        match self.mode {
            None => Ok(GammaSchedule::constant(0.0, cfg.total_epochs)?),
            Some(mode) if mode.is_growth() => GammaSchedule::new(mode, lo, hi, cfg.total_epochs),
            Some(mode) => GammaSchedule::new(mode, hi, lo, cfg.total_epochs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub profile: String,
    pub gamma_init: f64,
    pub gamma_fin: f64,
    pub top1: Vec<f64>,
    pub top1_mean: f64,
    pub top5_mean: f64,
    pub weighted_f1_mean: f64,
    /// Mean Top-1 minus the cross-entropy cell's mean Top-1, in points.
    pub delta_vs_ce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedF1Delta {
    pub seed: u64,
    pub recovered: Vec<usize>,
    pub classes: Vec<ClassF1Delta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub fingerprint: String,
    pub modality: Modality,
    pub seeds: Vec<u64>,
    pub cells: Vec<AblationCell>,
    /// Per seed, F1 of exp_decay minus F1 of cross-entropy, head to tail.
    pub classwise_f1_delta: Vec<SeedF1Delta>,
}

impl AblationReport {
    pub fn cell(&self, profile: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.profile == profile)
    }

    pub fn recovered_classes(&self) -> Vec<(u64, usize)> {
        self.classwise_f1_delta
            .iter()
            .flat_map(|d| d.recovered.iter().map(move |&c| (d.seed, c)))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fingerprint {}  modality {}  seeds {:?}", self.fingerprint, self.modality, self.seeds);
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>6} {:>8} {:>8} {:>8}  per-seed top-1",
            "profile", "γ0", "γZ", "top-1", "Δ vs ce", "w-f1"
        );
        for c in &self.cells {
            let seeds: Vec<String> = c.top1.iter().map(|t| format!("{t:.2}")).collect();
            let _ = writeln!(
                s,
                "{:<14} {:>6.2} {:>6.2} {:>8.2} {:>+8.2} {:>8.4}  {}",
                c.profile,
                c.gamma_init,
                c.gamma_fin,
                c.top1_mean,
                c.delta_vs_ce,
                c.weighted_f1_mean,
                seeds.join(" ")
            );
        }
        let recovered = self.recovered_classes();
        let _ = writeln!(s);
        if recovered.is_empty() {
            let _ = writeln!(s, "no class recovered by exp_decay over ce");
        } else {
            let list: Vec<String> = recovered.iter().map(|(seed, c)| format!("class {c} (seed {seed})")).collect();
            let _ = writeln!(s, "recovered by exp_decay over ce: {}", list.join(", "));
        }
        s
    }
}

/// Flat row of `ablation.csv`; per-seed Top-1 stays in the JSON report.
#[derive(Serialize)]
struct CellRow<'a> {
    profile: &'a str,
    gamma_init: f64,
    gamma_fin: f64,
    seeds: usize,
    top1_mean: f64,
    top5_mean: f64,
    weighted_f1_mean: f64,
    delta_vs_ce: f64,
}

impl<'a> CellRow<'a> {
    fn of(c: &'a AblationCell) -> Self {
        Self {
            profile: &c.profile,
            gamma_init: c.gamma_init,
            gamma_fin: c.gamma_fin,
            seeds: c.top1.len(),
            top1_mean: c.top1_mean,
            top5_mean: c.top5_mean,
            weighted_f1_mean: c.weighted_f1_mean,
            delta_vs_ce: c.delta_vs_ce,
        }
    }
}

#[derive(Serialize)]
struct DeltaRow {
    seed: u64,
    class: usize,
    support: u64,
    f1_ce: f64,
    f1_exp_decay: f64,
    delta: f64,
    recovered: bool,
}

impl DeltaRow {
    fn of(seed: u64, d: &ClassF1Delta) -> Self {
        Self {
            seed,
            class: d.class,
            support: d.support,
            f1_ce: d.f1_a,
            f1_exp_decay: d.f1_b,
            delta: d.delta,
            recovered: d.recovered,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PartialAblation {
    fingerprint: String,
    completed: Vec<ReportLine>,
    failed: Vec<String>,
}

/// Runs the five γ profiles for every ablation seed on one dataset.
///
/// Cells run on the rayon pool unless `serial`. If any cell fails, the
/// finished cells are written to `ablation_partial.json` and the first
/// error is returned.
pub fn cmd_ablate(cfg: &ExperimentConfig, serial: bool) -> Result<AblationReport> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint();
    let dataset = load_dataset(cfg)?;
    let modality = cfg.ablation.modality;
    let schedules = ABLATION_PROFILES
        .iter()
        .map(|p| p.schedule(&cfg.schedule))
        .collect::<Result<Vec<_>>>()?;
    prepare_out_dir(&cfg.out_dir)?;

    let jobs: Vec<(usize, u64)> = cfg
        .ablation
        .seeds
        .iter()
        .flat_map(|&seed| (0..ABLATION_PROFILES.len()).map(move |p| (p, seed)))
        .collect();
    let run = |&(p, seed): &(usize, u64)| {
        let profile = &ABLATION_PROFILES[p];
        let name = format!("{}_seed{seed}", profile.name);
        run_pathway(cfg, &dataset, modality, profile.loss, &schedules[p], seed, &name).map(|r| r.report)
    };
    let results: Vec<Result<EvalReport>> = if serial {
        jobs.iter().map(run).collect()
    } else {
        jobs.par_iter().map(run).collect()
    };

    if results.iter().any(|r| r.is_err()) {
        let partial = PartialAblation {
            fingerprint,
            completed: results.iter().flatten().map(ReportLine::of).collect(),
            failed: jobs
                .iter()
                .zip(&results)
                .filter_map(|(&(p, seed), r)| {
                    r.as_ref()
                        .err()
                        .map(|e| format!("{} seed {seed}: {e}", ABLATION_PROFILES[p].name))
                })
                .collect(),
        };
        write_json(&cfg.out_dir.join("ablation_partial.json"), &partial)?;
        return Err(results.into_iter().find_map(|r| r.err()).expect("a failed cell"));
    }
    let reports: Vec<EvalReport> = results.into_iter().map(|r| r.expect("checked")).collect();
    let cells_dir = cfg.out_dir.join("ablation");
    for r in &reports {
        write_json(&cells_dir.join(format!("{}.json", r.name)), r)?;
    }

    let n_seeds = cfg.ablation.seeds.len();
    let by_cell = |p: usize| jobs.iter().zip(&reports).filter(move |((q, _), _)| *q == p).map(|(_, r)| r);
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / n_seeds as f64;
    let ce_mean = mean(&mut by_cell(0).map(|r| r.top1));
    let cells = ABLATION_PROFILES
        .iter()
        .enumerate()
        .map(|(p, profile)| {
            let top1: Vec<f64> = by_cell(p).map(|r| r.top1).collect();
            let top1_mean = mean(&mut top1.iter().copied());
            AblationCell {
                profile: profile.name.to_string(),
                gamma_init: schedules[p].gamma_init(),
                gamma_fin: schedules[p].gamma_fin(),
                top1,
                top1_mean,
                top5_mean: mean(&mut by_cell(p).map(|r| r.top5)),
                weighted_f1_mean: mean(&mut by_cell(p).map(|r| r.weighted.f1)),
                delta_vs_ce: top1_mean - ce_mean,
            }
        })
        .collect();

    let exp_decay = ABLATION_PROFILES.len() - 1;
    let classwise_f1_delta = cfg
        .ablation
        .seeds
        .iter()
        .zip(by_cell(0).zip(by_cell(exp_decay)))
        .map(|(&seed, (ce, ed))| {
            let classes = classwise_f1_delta(ce, ed)?;
            Ok(SeedF1Delta {
                seed,
                recovered: classes.iter().filter(|d| d.recovered).map(|d| d.class).collect(),
                classes,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let report = AblationReport {
        fingerprint,
        modality,
        seeds: cfg.ablation.seeds.clone(),
        cells,
        classwise_f1_delta,
    };
    write_json(&cfg.out_dir.join("ablation.json"), &report)?;
    write_file(&cfg.out_dir.join("ablation.txt"), &report.to_text())?;
    write_csv(&cfg.out_dir.join("ablation.csv"), report.cells.iter().map(CellRow::of))?;
    write_csv(
        &cfg.out_dir.join("ablation_f1_delta.csv"),
        report
            .classwise_f1_delta
            .iter()
            .flat_map(|d| d.classes.iter().map(move |c| DeltaRow::of(d.seed, c))),
    )?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct FuseOutcome {
    pub report: EvalReport,
    /// Non-fatal problems, such as inputs produced under different configs.
    pub warnings: Vec<String>,
}

/// Fuses two prediction files from disk and evaluates the result.
pub fn cmd_fuse(path_a: &Path, path_b: &Path, out_dir: &Path) -> Result<FuseOutcome> {
    let a = read_prediction_table::<f64>(path_a)?;
    let b = read_prediction_table::<f64>(path_b)?;
    let mut warnings = Vec::new();
    let fingerprint = match (&a.fingerprint, &b.fingerprint) {
        (Some(fa), Some(fb)) if fa == fb => fa.clone(),
        (fa, fb) => {
            let show = |f: &Option<String>| f.clone().unwrap_or_else(|| "none".into());
            warnings.push(format!(
                "fingerprint mismatch: {} has {}, {} has {}",
                path_a.display(),
                show(fa),
                path_b.display(),
                show(fb)
            ));
            let (mut x, mut y) = (show(fa), show(fb));
            if x > y {
                std::mem::swap(&mut x, &mut y);
            }
            format!("{x}+{y}")
        }
    };
    let fused = fuse_tables(&a.table, &b.table)?;
    prepare_out_dir(out_dir)?;
    write_prediction_table(&out_dir.join("predictions_fused.csv"), &fused, Some(&fingerprint))?;
    let report = evaluate(&fused, "fused", &fingerprint)?;
    write_report(out_dir, &report)?;
    Ok(FuseOutcome { report, warnings })
}

/// Evaluates one prediction file. The report is named after the file stem.
pub fn cmd_evaluate(path: &Path, out_dir: &Path) -> Result<EvalReport> {
    let file = read_prediction_table::<f64>(path)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("table")
        .to_string();
    let report = evaluate(&file.table, &name, file.fingerprint.as_deref().unwrap_or("none"))?;
    prepare_out_dir(out_dir)?;
    write_report(out_dir, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch_size: usize,
    pub samples: usize,
    pub wall_seconds: f64,
    pub samples_per_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub fingerprint: String,
    pub batches_per_row: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fingerprint {}  batches per row {}", self.fingerprint, self.batches_per_row);
        let _ = writeln!(s, "{:>6} {:>8} {:>10} {:>12}", "batch", "samples", "wall (s)", "samples/s");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>8} {:>10.4} {:>12.1}",
                r.batch_size, r.samples, r.wall_seconds, r.samples_per_second
            );
        }
        s
    }
}

fn load_pathway(dir: &Path, modality: Modality, input_dim: usize) -> Result<PathwayModel<f64>> {
    let path = dir.join(format!("checkpoint_{modality}.json"));
    if !path.exists() {
        return Err(Error::Config(format!("missing checkpoint {}", path.display())));
    }
    let (model, _) = load_checkpoint::<f64>(&path)?;
    if model.input_dim() != input_dim {
        return Err(Error::Shape(format!(
            "{} expects {} features but the generator produces {input_dim}",
            path.display(),
            model.input_dim()
        )));
    }
    Ok(model)
}

/// Times fused two-pathway inference from raw frame sequences: clip
/// sampling, resize, crop, pooling, both forward passes and fusion.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if cfg.feature_table.is_some() {
        return Err(Error::Config("bench renders raw sequences and needs the generator, not a feature table".into()));
    }
    let dir = cfg.bench.checkpoint_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let input_dim = cfg.generator.feature_dim();
    let rgb = load_pathway(&dir, Modality::Rgb, input_dim)?;
    let depth = load_pathway(&dir, Modality::Depth, input_dim)?;

    let world = SyntheticWorld::<f64>::new(&cfg.generator)?;
    let largest = *cfg.bench.batch_sizes.last().expect("validated non-empty");
    let pool: Vec<(FrameSequence<f64>, FrameSequence<f64>)> = (0..largest.min(cfg.generator.num_samples))
        .map(|i| world.render_pair(i))
        .collect::<Result<_>>()?;

    let pre = &cfg.generator.preprocess;
    let infer = |index: usize, pair: &(FrameSequence<f64>, FrameSequence<f64>)| -> Result<usize> {
        let clip_rng = substream(cfg.seed, Stream::Clip, index as u64);
        let crop_rng = substream(cfg.seed, Stream::Crop, index as u64);
        let a = preprocess_sequence(&pair.0, pre, &mut clip_rng.clone(), &mut crop_rng.clone())?;
        let b = preprocess_sequence(&pair.1, pre, &mut clip_rng.clone(), &mut crop_rng.clone())?;
        let fused = late_fuse(&rgb.forward(&a)?.probs, &depth.forward(&b)?.probs)?;
        Ok(fused.argmax())
    };

    let mut rows = Vec::new();
    for &batch_size in &cfg.bench.batch_sizes {
        let samples = batch_size * cfg.bench.batches;
        let start = Instant::now();
        let mut checksum = 0usize;
        for b in 0..cfg.bench.batches {
            for i in 0..batch_size {
                let index = b * batch_size + i;
                checksum = checksum.wrapping_add(infer(index, &pool[index % pool.len()])?);
            }
        }
        std::hint::black_box(checksum);
        let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
        rows.push(BenchRow {
            batch_size,
            samples,
            wall_seconds,
            samples_per_second: samples as f64 / wall_seconds,
        });
    }
    let report = BenchReport {
        fingerprint: cfg.fingerprint(),
        batches_per_row: cfg.bench.batches,
        rows,
    };
    prepare_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("bench.json"), &report)?;
    write_file(&cfg.out_dir.join("bench.txt"), &report.to_text())?;
    write_csv(&cfg.out_dir.join("bench.csv"), &report.rows)?;
    Ok(report)
}

/// Machine-readable failure record printed by the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}
