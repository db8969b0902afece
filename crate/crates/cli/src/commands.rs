//! The four batch commands. Each one reads its inputs, writes its reports
//! under the output directory and returns the in-memory summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use mono3d_core::evaluation::{
    average_precision_with, iou_3d, localization_report, match_frame, ApMode, CenterPair, IouMetric,
    LocalizationReport, MatchCriteria, MatchResult,
};
use mono3d_core::trainer::{generate_scene, train, TrainOptions, TrainReport};
use mono3d_core::{
    assign_difficulty, Box3D, Difficulty, LossConfig, ObjectAnnotation, Point3, DEFAULT_ALPHA, DEFAULT_BETA,
    DEFAULT_GAMMA, DEFAULT_LAMBDA,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::kitti::{parse_calib_file, parse_label_file, parse_label_lines, parse_split_file, ParseError};
use crate::oracle::{monte_carlo_iou, pair_rng};
use crate::report::{csv_real, fixed, to_json};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("--{0} is required for this command")]
    MissingOption(&'static str),
    #[error("{0}")]
    Config(String),
    #[error("{0} validation error(s), listed in validate.json")]
    Invalid(usize),
    #[error("{}: {source}", path.display())]
    Numeric { path: PathBuf, source: mono3d_core::Error },
    #[error("{arm} arm, seed {seed}: {source}")]
    Diverged {
        arm: &'static str,
        seed: u64,
        source: mono3d_core::Error,
    },
}

impl CliError {
    /// 1 for bad input or configuration, 2 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged { .. } => 2,
            CliError::Numeric {
                source: mono3d_core::Error::Diverged { .. },
                ..
            } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Eval,
    TrainToy,
    IouOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApModeArg {
    #[value(name = "11")]
    Eleven,
    #[value(name = "40")]
    Forty,
}

impl From<ApModeArg> for ApMode {
    fn from(a: ApModeArg) -> Self {
        match a {
            ApModeArg::Eleven => ApMode::Eleven,
            ApModeArg::Forty => ApMode::Forty,
        }
    }
}

/// Everything a command run depends on.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "mono3d",
    version,
    about = "KITTI-style evaluation and locality-regularizer experiments"
)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Directory of `<frame>.txt` ground-truth label files.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Directory of `<frame>.txt` prediction files; missing frames count as empty.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Directory of `<frame>.txt` calibration files.
    #[arg(long)]
    pub calib_dir: Option<PathBuf>,
    /// Frame list, one id per line; defaults to every label file in --gt-dir.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5, 0.7])]
    pub thresholds: Vec<f64>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = TrainOptions::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainOptions::default().lr)]
    pub lr: f64,
    /// Run only the unregularized arm of train-toy.
    #[arg(long)]
    pub no_reg: bool,
    #[arg(long, value_enum, default_value = "11")]
    pub ap_mode: ApModeArg,
    /// Class evaluated by eval.
    #[arg(long, default_value = "Car")]
    pub class: String,
    /// train-toy: number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// train-toy: objects per synthetic scene.
    #[arg(long, default_value_t = 50)]
    pub objects: usize,
    /// train-toy: feature dimension.
    #[arg(long, default_value_t = 8)]
    pub feature_dim: usize,
    /// train-toy: feature noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// iou-oracle: number of box pairs.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// iou-oracle: Monte-Carlo samples per pair.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
}

impl RunConfig {
    /// Defaults for `command`, as if invoked with no flags.
    pub fn new(command: Command) -> Self {
        let name = command.to_possible_value().expect("no skipped variants");
        RunConfig::parse_from(["mono3d", name.get_name()])
    }

    pub fn loss_config(&self) -> Result<LossConfig, CliError> {
        let cfg = LossConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    fn required<'a>(&self, value: &'a Option<PathBuf>, name: &'static str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or(CliError::MissingOption(name))
    }

    fn checked_thresholds(&self) -> Result<Vec<f64>, CliError> {
        if self.thresholds.is_empty() {
            return Err(CliError::Config("at least one IoU threshold is needed".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(CliError::Config(format!("IoU threshold {t} is outside (0, 1]")));
        }
        Ok(self.thresholds.clone())
    }

    fn prepare_out(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        Ok(&self.out)
    }
}

/// Runs the configured command; the error carries the exit status.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Validate => {
            let summary = cmd_validate(cfg)?;
            match summary.errors.len() {
                0 => Ok(()),
                n => Err(CliError::Invalid(n)),
            }
        }
        Command::Eval => cmd_eval(cfg).map(|_| ()),
        Command::TrainToy => cmd_train_toy(cfg).map(|_| ()),
        Command::IouOracle => cmd_iou_oracle(cfg).map(|_| ()),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))
}

fn frame_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.txt"))
}

/// Frames from the split file, or every `*.txt` in the ground-truth directory in name order.
fn frame_ids(cfg: &RunConfig, gt_dir: &Path) -> Result<Vec<String>, CliError> {
    if !gt_dir.is_dir() {
        return Err(CliError::Io {
            path: gt_dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "not a directory"),
        });
    }
    if let Some(split) = &cfg.split {
        let text = fs::read_to_string(split).map_err(io_err(split))?;
        return parse_split_file(&text).map_err(|source| CliError::Parse {
            path: split.clone(),
            source,
        });
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(gt_dir).map_err(io_err(gt_dir))? {
        let path = entry.map_err(io_err(gt_dir))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocatedError {
    pub file: String,
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DifficultyCounts {
    pub easy: usize,
    pub moderate: usize,
    pub hard: usize,
    pub ignored: usize,
}

impl DifficultyCounts {
    fn add(&mut self, d: Difficulty) {
        match d {
            Difficulty::Easy => self.easy += 1,
            Difficulty::Moderate => self.moderate += 1,
            Difficulty::Hard => self.hard += 1,
            Difficulty::Ignored => self.ignored += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub frames: usize,
    pub annotations: usize,
    pub per_class: BTreeMap<String, usize>,
    /// Easiest tier of each non-`DontCare` row, per class.
    pub per_difficulty: BTreeMap<String, DifficultyCounts>,
    pub errors: Vec<LocatedError>,
}

/// Parses and checks every label (and calibration, when given) file of the split.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationSummary, CliError> {
    let gt_dir = cfg.required(&cfg.gt_dir, "gt-dir")?;
    let ids = frame_ids(cfg, gt_dir)?;
    let mut summary = ValidationSummary {
        frames: ids.len(),
        annotations: 0,
        per_class: BTreeMap::new(),
        per_difficulty: BTreeMap::new(),
        errors: Vec::new(),
    };
    for id in &ids {
        let path = frame_path(gt_dir, id);
        let file = path.display().to_string();
        match fs::read_to_string(&path) {
            Err(e) => summary.errors.push(LocatedError {
                file,
                line: None,
                message: e.to_string(),
            }),
            Ok(text) => {
                for item in parse_label_lines(&text) {
                    match item {
                        Err(e) => summary.errors.push(LocatedError {
                            file: file.clone(),
                            line: e.line(),
                            message: e.to_string(),
                        }),
                        Ok((line, a)) => {
                            if let Err(e) = a.validate() {
                                summary.errors.push(LocatedError {
                                    file: file.clone(),
                                    line: Some(line),
                                    message: e.to_string(),
                                });
                                continue;
                            }
                            summary.annotations += 1;
                            *summary.per_class.entry(a.class_name.clone()).or_default() += 1;
                            if !a.is_dont_care() {
                                summary
                                    .per_difficulty
                                    .entry(a.class_name.clone())
                                    .or_default()
                                    .add(assign_difficulty(&a));
                            }
                        }
                    }
                }
            }
        }
        if let Some(calib_dir) = &cfg.calib_dir {
            let path = frame_path(calib_dir, id);
            let file = path.display().to_string();
            let result = fs::read_to_string(&path)
                .map_err(|e| (None, e.to_string()))
                .and_then(|text| parse_calib_file(&text).map_err(|e| (e.line(), e.to_string())));
            if let Err((line, message)) = result {
                summary.errors.push(LocatedError { file, line, message });
            }
        }
    }
    let out = cfg.prepare_out()?;
    write_file(out, "validate.json", &to_json(&summary))?;
    Ok(summary)
}

// -------------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApEntry {
    pub difficulty: String,
    pub threshold: f64,
    pub ground_truths: usize,
    /// `None` when the difficulty has no ground truths.
    pub ap_3d: Option<f64>,
    pub ap_bev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationSource {
    pub metric: String,
    pub threshold: f64,
    pub difficulty: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub class_name: String,
    pub ap_mode: u32,
    pub frames: usize,
    pub missing_predictions: Vec<String>,
    pub ap: Vec<ApEntry>,
    /// Which matches the localization report is computed over.
    pub localization_source: LocalizationSource,
    /// `None` when nothing matched.
    pub localization: Option<LocalizationReport>,
}

struct Frame {
    id: String,
    gts: Vec<ObjectAnnotation>,
    preds: Vec<ObjectAnnotation>,
}

fn read_labels(path: &Path) -> Result<Vec<ObjectAnnotation>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_label_file(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn load_frames(cfg: &RunConfig) -> Result<(Vec<Frame>, Vec<String>), CliError> {
    let gt_dir = cfg.required(&cfg.gt_dir, "gt-dir")?;
    let pred_dir = cfg.required(&cfg.pred_dir, "pred-dir")?;
    let ids = frame_ids(cfg, gt_dir)?;
    let mut frames = Vec::with_capacity(ids.len());
    let mut missing = Vec::new();
    for id in ids {
        let gts = read_labels(&frame_path(gt_dir, &id))?;
        let pred_path = frame_path(pred_dir, &id);
        let preds = if pred_path.exists() {
            read_labels(&pred_path)?
        } else {
            missing.push(id.clone());
            Vec::new()
        };
        if let Some(calib_dir) = &cfg.calib_dir {
            let path = frame_path(calib_dir, &id);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            parse_calib_file(&text).map_err(|source| CliError::Parse { path, source })?;
        }
        frames.push(Frame { id, gts, preds });
    }
    Ok((frames, missing))
}

fn match_all(frames: &[Frame], criteria: &MatchCriteria, pred_dir: &Path) -> Result<Vec<MatchResult>, CliError> {
    frames
        .par_iter()
        .map(|f| {
            match_frame(&f.id, &f.preds, &f.gts, criteria).map_err(|source| CliError::Numeric {
                path: frame_path(pred_dir, &f.id),
                source,
            })
        })
        .collect()
}

fn center(a: &ObjectAnnotation) -> Point3 {
    a.box3d().geometric_center()
}

/// AP tables for 3D and BEV IoU at every difficulty and threshold, the
/// localization report, and CSV plot data.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let thresholds = cfg.checked_thresholds()?;
    let mode: ApMode = cfg.ap_mode.into();
    let (frames, missing) = load_frames(cfg)?;
    let pred_dir = cfg.required(&cfg.pred_dir, "pred-dir")?;

    let mut ap = Vec::new();
    let mut pr_csv = String::from("metric,difficulty,threshold,rank,recall,precision\n");
    for difficulty in Difficulty::EVALUATED {
        for &threshold in &thresholds {
            let mut entry = ApEntry {
                difficulty: difficulty.as_str().into(),
                threshold,
                ground_truths: 0,
                ap_3d: None,
                ap_bev: None,
            };
            for metric in [IouMetric::Box3D, IouMetric::Bev] {
                let criteria = MatchCriteria {
                    iou_threshold: threshold,
                    metric,
                    difficulty,
                    class_name: cfg.class.clone(),
                };
                let matches = match_all(&frames, &criteria, pred_dir)?;
                let n_gt: usize = matches.iter().map(MatchResult::gt_count).sum();
                entry.ground_truths = n_gt;
                if n_gt == 0 {
                    continue;
                }
                let curve = average_precision_with(&matches, n_gt, mode).map_err(|source| CliError::Numeric {
                    path: pred_dir.to_path_buf(),
                    source,
                })?;
                for (rank, (recall, precision)) in curve.points.iter().enumerate() {
                    writeln!(
                        pr_csv,
                        "{},{},{},{},{},{}",
                        metric.as_str(),
                        difficulty.as_str(),
                        fixed(threshold),
                        rank + 1,
                        fixed(*recall),
                        fixed(*precision)
                    )
                    .expect("writing to a String cannot fail");
                }
                match metric {
                    IouMetric::Box3D => entry.ap_3d = Some(curve.ap),
                    IouMetric::Bev => entry.ap_bev = Some(curve.ap),
                }
            }
            ap.push(entry);
        }
    }

    let loc_threshold = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let loc_criteria = MatchCriteria {
        iou_threshold: loc_threshold,
        metric: IouMetric::Bev,
        difficulty: Difficulty::Hard,
        class_name: cfg.class.clone(),
    };
    let pairs: Vec<CenterPair> = match_all(&frames, &loc_criteria, pred_dir)?
        .iter()
        .zip(&frames)
        .flat_map(|(m, f)| {
            m.pairs.iter().map(|p| CenterPair {
                gt: center(&f.gts[p.gt]),
                pred: center(&f.preds[p.pred]),
            })
        })
        .collect();
    let localization = if pairs.is_empty() {
        None
    } else {
        Some(localization_report(&pairs).map_err(|source| CliError::Numeric {
            path: pred_dir.to_path_buf(),
            source,
        })?)
    };

    let report = EvalReport {
        class_name: cfg.class.clone(),
        ap_mode: match mode {
            ApMode::Eleven => 11,
            ApMode::Forty => 40,
        },
        frames: frames.len(),
        missing_predictions: missing,
        ap,
        localization_source: LocalizationSource {
            metric: IouMetric::Bev.as_str().into(),
            threshold: loc_threshold,
            difficulty: Difficulty::Hard.as_str().into(),
        },
        localization,
    };

    let mut bins_csv = String::from("lower,upper,count,ra_u,ra_v,ra_z\n");
    if let Some(loc) = &report.localization {
        for b in &loc.depth_bins {
            let acc = b.accuracy;
            writeln!(
                bins_csv,
                "{},{},{},{},{},{}",
                fixed(b.lower),
                fixed(b.upper),
                b.count,
                csv_real(acc.map(|a| a.u)),
                csv_real(acc.map(|a| a.v)),
                csv_real(acc.map(|a| a.z))
            )
            .expect("writing to a String cannot fail");
        }
    }
    let missing_log: String = report.missing_predictions.iter().map(|id| format!("{id}\n")).collect();

    let out = cfg.prepare_out()?;
    write_file(out, "eval.json", &to_json(&report))?;
    write_file(out, "pr_curves.csv", &pr_csv)?;
    write_file(out, "depth_bins.csv", &bins_csv)?;
    write_file(out, "missing_predictions.txt", &missing_log)?;
    Ok(report)
}

// --------------------------------------------------------------- train-toy

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmOutcome {
    pub report: Option<TrainReport>,
    pub error: Option<String>,
}

impl ArmOutcome {
    fn from_result(r: mono3d_core::Result<TrainReport>) -> (Self, Option<mono3d_core::Error>) {
        match r {
            Ok(report) => (
                ArmOutcome {
                    report: Some(report),
                    error: None,
                },
                None,
            ),
            Err(e) => (
                ArmOutcome {
                    report: None,
                    error: Some(e.to_string()),
                },
                Some(e),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyRun {
    pub seed: u64,
    pub regularized: Option<ArmOutcome>,
    pub unregularized: ArmOutcome,
}

/// Means over the runs an arm completed. Runs that never reached the
/// tolerance count as `epochs + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub completed: usize,
    pub diverged: usize,
    pub reached_tolerance: usize,
    pub mean_violations: Option<f64>,
    pub mean_epochs_to_tolerance: Option<f64>,
    pub mean_final_l1: Option<f64>,
}

impl ArmSummary {
    fn of<'a>(arms: impl Iterator<Item = &'a ArmOutcome>, epochs: usize) -> Self {
        let mut s = ArmSummary {
            completed: 0,
            diverged: 0,
            reached_tolerance: 0,
            mean_violations: None,
            mean_epochs_to_tolerance: None,
            mean_final_l1: None,
        };
        let (mut viol, mut ep, mut l1) = (0.0, 0.0, 0.0);
        for arm in arms {
            match &arm.report {
                None => s.diverged += 1,
                Some(r) => {
                    s.completed += 1;
                    s.reached_tolerance += r.epochs_to_tolerance.is_some() as usize;
                    viol += r.neighbor_order_violations as f64;
                    ep += r.epochs_to_tolerance.unwrap_or(epochs + 1) as f64;
                    l1 += r.final_l1;
                }
            }
        }
        if s.completed > 0 {
            let n = s.completed as f64;
            s.mean_violations = Some(viol / n);
            s.mean_epochs_to_tolerance = Some(ep / n);
            s.mean_final_l1 = Some(l1 / n);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySummary {
    pub regularized: Option<ArmSummary>,
    pub unregularized: ArmSummary,
    /// Regularized over unregularized mean epochs to tolerance.
    pub epochs_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyExperiment {
    pub seeds: Vec<u64>,
    pub n_objects: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub summary: ToySummary,
    pub runs: Vec<ToyRun>,
}

impl ToyExperiment {
    /// First divergence, by seed, regularized arm before unregularized.
    pub fn first_divergence(&self) -> Option<(&'static str, u64, &str)> {
        self.runs.iter().find_map(|r| {
            if let Some(e) = r.regularized.as_ref().and_then(|a| a.error.as_deref()) {
                return Some(("regularized", r.seed, e));
            }
            r.unregularized.error.as_deref().map(|e| ("unregularized", r.seed, e))
        })
    }
}

/// Runs both arms over the seed set without writing anything.
pub fn toy_experiment(cfg: &RunConfig) -> Result<(ToyExperiment, Option<CliError>), CliError> {
    let loss = cfg.loss_config()?;
    if cfg.runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|k| cfg.seed + k).collect();
    let base = TrainOptions {
        lr: cfg.lr,
        epochs: cfg.epochs,
        ..TrainOptions::default()
    };
    let outcomes: Vec<Result<(ToyRun, Option<CliError>), CliError>> = seeds
        .par_iter()
        .map(|&seed| {
            let scene = generate_scene(cfg.objects, cfg.feature_dim, cfg.noise, seed)
                .map_err(|e| CliError::Config(format!("scene for seed {seed}: {e}")))?;
            let arm = |use_regularizer| {
                let opts = TrainOptions {
                    use_regularizer,
                    seed,
                    ..base
                };
                train(&scene, &loss, &opts).map(|(_, r)| r)
            };
            let mut failure = None;
            let regularized = if cfg.no_reg {
                None
            } else {
                let (outcome, err) = ArmOutcome::from_result(arm(true));
                failure = failure.or(err.map(|source| CliError::Diverged {
                    arm: "regularized",
                    seed,
                    source,
                }));
                Some(outcome)
            };
            let (unregularized, err) = ArmOutcome::from_result(arm(false));
            failure = failure.or(err.map(|source| CliError::Diverged {
                arm: "unregularized",
                seed,
                source,
            }));
            Ok((
                ToyRun {
                    seed,
                    regularized,
                    unregularized,
                },
                failure,
            ))
        })
        .collect();

    let mut runs = Vec::with_capacity(seeds.len());
    let mut first_failure = None;
    for o in outcomes {
        let (run, failure) = o?;
        if first_failure.is_none() {
            first_failure = failure;
        }
        runs.push(run);
    }
    let unregularized = ArmSummary::of(runs.iter().map(|r| &r.unregularized), cfg.epochs);
    let regularized =
        (!cfg.no_reg).then(|| ArmSummary::of(runs.iter().filter_map(|r| r.regularized.as_ref()), cfg.epochs));
    let epochs_ratio = regularized
        .as_ref()
        .and_then(|r| r.mean_epochs_to_tolerance)
        .zip(unregularized.mean_epochs_to_tolerance)
        .map(|(r, u)| r / u);
    let experiment = ToyExperiment {
        seeds,
        n_objects: cfg.objects,
        feature_dim: cfg.feature_dim,
        noise_sigma: cfg.noise,
        summary: ToySummary {
            regularized,
            unregularized,
            epochs_ratio,
        },
        runs,
    };
    Ok((experiment, first_failure))
}

/// Paired regularized/unregularized training over consecutive seeds. The
/// report is written even when an arm diverges; the divergence is then
/// returned as the error.
pub fn cmd_train_toy(cfg: &RunConfig) -> Result<ToyExperiment, CliError> {
    let (experiment, failure) = toy_experiment(cfg)?;
    let out = cfg.prepare_out()?;
    write_file(out, "train_toy.json", &to_json(&experiment))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(experiment),
    }
}

// -------------------------------------------------------------- iou-oracle

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEntry {
    pub pair: usize,
    pub identical: bool,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub pairs: usize,
    pub samples: usize,
    pub max_abs_deviation: f64,
    pub mean_abs_deviation: f64,
    pub entries: Vec<OracleEntry>,
}

/// Every tenth pair is a box with itself.
pub const ORACLE_IDENTICAL_EVERY: usize = 10;

/// Random overlapping box pair number `pair`.
pub fn oracle_pair(seed: u64, pair: usize) -> (Box3D, Box3D) {
    use rand_core::RngCore;
    let mut rng = pair_rng(seed, 2 * pair as u64);
    let mut u = |lo: f64, hi: f64| lo + (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * (hi - lo);
    let pi = std::f64::consts::PI;
    let a = Box3D::new(
        Point3::new(u(-10.0, 10.0), u(0.5, 2.5), u(5.0, 60.0)),
        [u(1.0, 2.5), u(1.2, 2.2), u(3.0, 6.0)],
        u(-pi, pi),
    )
    .expect("positive dims");
    if pair.is_multiple_of(ORACLE_IDENTICAL_EVERY) {
        return (a, a);
    }
    let b = Box3D::new(
        Point3::new(
            a.center.x + u(-0.6, 0.6) * a.length(),
            a.center.y + u(-0.3, 0.3) * a.height(),
            a.center.z + u(-0.6, 0.6) * a.length(),
        ),
        [
            a.height() * u(0.7, 1.3),
            a.width() * u(0.7, 1.3),
            a.length() * u(0.7, 1.3),
        ],
        u(-pi, pi),
    )
    .expect("positive dims");
    (a, b)
}

/// Analytic IoU against the sampling estimate over seeded random pairs.
pub fn cmd_iou_oracle(cfg: &RunConfig) -> Result<OracleReport, CliError> {
    if cfg.pairs == 0 || cfg.samples == 0 {
        return Err(CliError::Config("--pairs and --samples must be positive".into()));
    }
    let entries: Vec<OracleEntry> = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| {
            let (a, b) = oracle_pair(cfg.seed, k);
            let analytic = iou_3d(&a, &b).expect("oracle boxes have volume");
            let monte_carlo = monte_carlo_iou(&a, &b, cfg.samples, &mut pair_rng(cfg.seed, 2 * k as u64 + 1));
            OracleEntry {
                pair: k,
                identical: k % ORACLE_IDENTICAL_EVERY == 0,
                analytic,
                monte_carlo,
                deviation: (analytic - monte_carlo).abs(),
            }
        })
        .collect();
    let max = entries.iter().map(|e| e.deviation).fold(0.0, f64::max);
    let mean = entries.iter().map(|e| e.deviation).sum::<f64>() / entries.len() as f64;
    let report = OracleReport {
        seed: cfg.seed,
        pairs: cfg.pairs,
        samples: cfg.samples,
        max_abs_deviation: max,
        mean_abs_deviation: mean,
        entries,
    };
    let out = cfg.prepare_out()?;
    write_file(out, "iou_oracle.json", &to_json(&report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_library() {
        let cfg = RunConfig::new(Command::Eval);
        assert_eq!(cfg.thresholds, [0.3, 0.5, 0.7]);
        assert_eq!(cfg.loss_config().unwrap(), LossConfig::default());
        assert_eq!(cfg.ap_mode, ApModeArg::Eleven);
        assert_eq!(cfg.lr, TrainOptions::default().lr);
    }

    #[test]
    fn flags_parse() {
        let cfg = RunConfig::parse_from([
            "mono3d",
            "train-toy",
            "--thresholds",
            "0.25,0.5",
            "--ap-mode",
            "40",
            "--no-reg",
            "--beta",
            "0",
            "--lr",
            "1e-4",
        ]);
        assert_eq!(cfg.command, Command::TrainToy);
        assert_eq!(cfg.thresholds, [0.25, 0.5]);
        assert_eq!(cfg.ap_mode, ApModeArg::Forty);
        assert!(cfg.no_reg);
        assert_eq!((cfg.beta, cfg.lr), (0.0, 1e-4));
        assert!(RunConfig::try_parse_from(["mono3d", "eval", "--ap-mode", "12"]).is_err());
    }

    #[test]
    fn bad_thresholds_and_missing_paths() {
        let mut cfg = RunConfig::new(Command::Eval);
        assert!(matches!(cmd_eval(&cfg), Err(CliError::MissingOption("gt-dir"))));
        cfg.thresholds = vec![0.5, 1.5];
        assert!(matches!(cfg.checked_thresholds(), Err(CliError::Config(_))));
    }

    #[test]
    fn exit_codes() {
        let diverged = mono3d_core::Error::Diverged { epoch: 3 };
        assert_eq!(
            CliError::Diverged {
                arm: "regularized",
                seed: 1,
                source: diverged.clone()
            }
            .exit_code(),
            2
        );
        assert_eq!(
            CliError::Numeric {
                path: PathBuf::new(),
                source: diverged
            }
            .exit_code(),
            2
        );
        assert_eq!(CliError::Invalid(3).exit_code(), 1);
        assert_eq!(CliError::MissingOption("gt-dir").exit_code(), 1);
    }

    #[test]
    fn oracle_pairs_are_seeded() {
        assert_eq!(oracle_pair(5, 3), oracle_pair(5, 3));
        assert_ne!(oracle_pair(5, 3), oracle_pair(6, 3));
        let (a, b) = oracle_pair(5, 20);
        assert_eq!(a, b);
    }
}
