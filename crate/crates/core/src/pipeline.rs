//! The commands behind the command-line front end.
//!
//! `cmd_fit` runs the whole workflow: data preparation, optional warmstart
//! from a knowledge base, the CASH search on 80% of the training data,
//! greedy ensemble selection on the remaining 20%, then reporting and
//! bundle persistence.

use std::fs::{File, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{FeatureSchema, ModelBundle, TrainingSummary};
use crate::cash::{run_cash, trace_digest, trace_to_jsonl, BudgetSpec, CashOptions, ConfigSpace, DEFAULT_TOP_M};
use crate::data::{
    load_trajectory_csv, read_dataset_csv, read_feature_csv, resolve_labels, sniff_file_kind,
    stratified_holdout, synth_generate, synth_recording, trajectory_to_csv, window_feature_names, window_featurize,
    write_dataset_csv, DatasetFileKind, LabelRule, LabeledDataset, Matrix, Skill, SynthProfile, WindowSpec,
};
use crate::ensemble::{
    contribution_csv, contribution_table, contribution_text, greedy_select, truncation_sweep, EnsembleModel,
    DEFAULT_ENSEMBLE_ROUNDS,
};
use crate::error::{Error, Result};
use crate::learners::Classifier;
use crate::metalearn::{compute_meta_features, knowledge_base_entry, warmstart_select, KnowledgeBase, DEFAULT_K_DATASETS};
use crate::report::{benchmark_csv, classification_report, confusion, BenchmarkResult, ClassificationReport, LossMetric};
use crate::rng::derive_seed;

pub const HOLDOUT_FRACTION: f64 = 0.2;
pub const DEFAULT_BENCHMARK_REPETITIONS: usize = 5;

pub const BUNDLE_FILE: &str = "bundle.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const CONTRIBUTIONS_CSV: &str = "contributions.csv";
pub const CONTRIBUTIONS_TXT: &str = "contributions.txt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CONFUSION_CSV: &str = "confusion_matrix.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const BENCHMARK_CSV: &str = "benchmark.csv";
pub const HOST_JSON: &str = "host.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DataSource {
    /// Generated train/test pair, seeded by the run seed.
    Synth { profile: SynthProfile },
    /// Feature CSV or labeled trajectory CSV files.
    Files {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_evaluations: usize,
    pub max_wall_time_s: Option<f64>,
    pub per_eval_time_limit_s: Option<f64>,
    pub k_folds: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_evaluations: 50,
            max_wall_time_s: None,
            per_eval_time_limit_s: None,
            k_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmstartConfig {
    pub enabled: bool,
    pub kb_path: Option<PathBuf>,
    pub k_datasets: usize,
}

impl Default for WarmstartConfig {
    fn default() -> Self {
        WarmstartConfig {
            enabled: false,
            kb_path: None,
            k_datasets: DEFAULT_K_DATASETS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub window: WindowSpec,
    pub budget: BudgetConfig,
    pub metric: LossMetric,
    pub warmstart: WarmstartConfig,
    pub ensemble_rounds: usize,
    pub top_m: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Synth {
                profile: SynthProfile::default(),
            },
            window: WindowSpec::default(),
            budget: BudgetConfig::default(),
            metric: LossMetric::default(),
            warmstart: WarmstartConfig::default(),
            ensemble_rounds: DEFAULT_ENSEMBLE_ROUNDS,
            top_m: DEFAULT_TOP_M,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn budget_spec(&self) -> BudgetSpec {
        BudgetSpec {
            max_evaluations: self.budget.max_evaluations,
            max_wall_time_s: self.budget.max_wall_time_s,
            per_eval_time_limit_s: self.budget.per_eval_time_limit_s,
            k_folds: self.budget.k_folds,
            seed: derive_seed(self.seed, "cash", 0),
        }
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.budget_spec().validate()?;
        if self.top_m == 0 {
            return Err(Error::Config("top_m must be at least 1".into()));
        }
        match &self.data {
            DataSource::Synth { profile } => {
                profile.train_counts()?;
            }
            DataSource::Files { train, test } => {
                require_file(train, "training file")?;
                if let Some(t) = test {
                    require_file(t, "test file")?;
                }
            }
        }
        if self.warmstart.enabled {
            let kb = self
                .warmstart
                .kb_path
                .as_ref()
                .ok_or_else(|| Error::Config("warmstart is enabled without a knowledge base path".into()))?;
            require_file(kb, "knowledge base")?;
            if self.warmstart.k_datasets == 0 {
                return Err(Error::Config("k_datasets must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Exclusive ownership of an output directory for the lifetime of a run.
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(OutputLock { path, _file: file }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn synth_schema() -> FeatureSchema {
    let len = WindowSpec::default().window_len;
    FeatureSchema {
        names: window_feature_names(),
        window: Some(WindowSpec {
            window_len: len,
            stride: len,
            label_rule: LabelRule::Majority,
        }),
    }
}

/// Reads labeled data, windowing trajectory files with `window`.
pub fn load_labeled(path: &Path, window: &WindowSpec, vocabulary: Option<&[String]>) -> Result<(LabeledDataset, FeatureSchema)> {
    match sniff_file_kind(path)? {
        DatasetFileKind::Features => {
            let ds = read_dataset_csv(path, vocabulary)?;
            let names = ds.feature_names().to_vec();
            Ok((ds, FeatureSchema { names, window: None }))
        }
        DatasetFileKind::Trajectory => {
            let rec = load_trajectory_csv(path)?;
            if rec.labels().is_none() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: "missing label column".into(),
                });
            }
            let ds = window_featurize(&rec, window)?;
            let ds = match vocabulary {
                Some(v) => relabel(&ds, v)?,
                None => ds,
            };
            Ok((
                ds,
                FeatureSchema {
                    names: window_feature_names(),
                    window: Some(*window),
                },
            ))
        }
    }
}

/// Maps labels onto `vocabulary` by class name.
fn relabel(ds: &LabeledDataset, vocabulary: &[String]) -> Result<LabeledDataset> {
    let raw: Vec<String> = ds.labels().iter().map(|&l| ds.class_names()[l].clone()).collect();
    let (labels, vocab) = resolve_labels(&raw, Some(vocabulary))?;
    LabeledDataset::new(ds.features().clone(), labels, vocab, ds.feature_names().to_vec())
}

struct Prepared {
    train: LabeledDataset,
    test: Option<LabeledDataset>,
    schema: FeatureSchema,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    match &cfg.data {
        DataSource::Synth { profile } => {
            let (train, test) = synth_generate(profile, cfg.seed)?;
            Ok(Prepared {
                train,
                test: Some(test),
                schema: synth_schema(),
            })
        }
        DataSource::Files { train, test } => {
            let (train, schema) = load_labeled(train, &cfg.window, None)?;
            let test = match test {
                Some(path) => {
                    let (t, s) = load_labeled(path, &cfg.window, Some(train.class_names()))?;
                    if t.n_features() != train.n_features() || s.window != schema.window {
                        return Err(Error::shape(
                            format!("{} test features", train.n_features()),
                            t.n_features(),
                        ));
                    }
                    Some(t)
                }
                None => None,
            };
            Ok(Prepared { train, test, schema })
        }
    }
}

/// Report and confusion matrix of `model` on `ds`.
pub fn evaluate_on(model: &dyn Classifier, ds: &LabeledDataset) -> Result<(ClassificationReport, String)> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("evaluation set has no rows".into()));
    }
    let pred = model.predict_label(ds.features())?;
    let cm = confusion(ds.labels(), &pred, ds.n_classes())?;
    let report = classification_report(&cm)?.with_class_names(ds.class_names());
    Ok((report, cm.to_csv(ds.class_names())))
}

fn write_report(dir: &Path, report: &ClassificationReport, confusion_csv: &str) -> Result<Vec<PathBuf>> {
    let json = serde_json::to_string_pretty(report)?;
    Ok(vec![
        write(dir, REPORT_JSON, &json)?,
        write(dir, REPORT_TXT, &report.to_text())?,
        write(dir, CONFUSION_CSV, confusion_csv)?,
    ])
}

pub struct FitOutcome {
    pub bundle: ModelBundle,
    pub ensemble: EnsembleModel,
    pub artifacts: Vec<PathBuf>,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate().map_err(|e| e.in_stage("validate"))?;
    let space = ConfigSpace::default();
    let kb = match (&cfg.warmstart.enabled, &cfg.warmstart.kb_path) {
        (true, Some(path)) => Some(KnowledgeBase::load(path, &space).map_err(|e| e.in_stage("warmstart"))?),
        _ => None,
    };
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let data = prepare(cfg).map_err(|e| e.in_stage("data"))?;

    let (rest, holdout) = stratified_holdout(&data.train, HOLDOUT_FRACTION, derive_seed(cfg.seed, "holdout", 0))
        .map_err(|e| e.in_stage("data"))?;
    let search_ds = data.train.subset(&rest);
    let select_ds = data.train.subset(&holdout);

    let warmstart = match &kb {
        Some(kb) => {
            let mf = compute_meta_features(&search_ds).map_err(|e| e.in_stage("warmstart"))?;
            warmstart_select(kb, &mf, cfg.warmstart.k_datasets).map_err(|e| e.in_stage("warmstart"))?
        }
        None => Vec::new(),
    };

    let options = CashOptions {
        metric: cfg.metric,
        top_m: cfg.top_m,
        ..CashOptions::default()
    };
    let cash = run_cash(&search_ds, &space, &cfg.budget_spec(), &warmstart, &options).map_err(|e| e.in_stage("cash"))?;

    let ensemble = (|| {
        let scored = cash
            .candidates
            .par_iter()
            .map(|c| Ok((c.model.clone(), c.model.predict_proba(select_ds.features())?)))
            .collect::<Result<Vec<_>>>()?;
        greedy_select(&scored, select_ds.labels(), cfg.ensemble_rounds, cfg.metric)
    })()
    .map_err(|e| e.in_stage("ensemble"))?;
    let contributions = contribution_table(&ensemble, &cash.trace, &select_ds).map_err(|e| e.in_stage("ensemble"))?;

    let eval_ds = data.test.as_ref().unwrap_or(&select_ds);
    let (report, confusion_csv) = evaluate_on(&ensemble, eval_ds).map_err(|e| e.in_stage("report"))?;

    let summary = TrainingSummary {
        evaluations: cash.trace.len(),
        incumbent: cash.incumbent.clone(),
        incumbent_loss: cash.incumbent_loss,
        trace_digest: trace_digest(&cash.trace),
        contributions: contributions.clone(),
        report: report.clone(),
    };
    let bundle = ModelBundle::new(
        &ensemble,
        space.hash(),
        data.train.class_names().to_vec(),
        data.schema,
        summary,
        eval_ds.features(),
    )
    .map_err(|e| e.in_stage("bundle"))?;

    let dir = &cfg.out_dir;
    let mut artifacts = vec![
        write(dir, BUNDLE_FILE, &bundle.to_json())?,
        write(dir, TRACE_FILE, &trace_to_jsonl(&cash.trace))?,
        write(dir, CONTRIBUTIONS_CSV, &contribution_csv(&contributions))?,
        write(dir, CONTRIBUTIONS_TXT, &contribution_text(&contributions))?,
    ];
    artifacts.extend(write_report(dir, &report, &confusion_csv)?);
    Ok(FitOutcome {
        bundle,
        ensemble,
        artifacts,
    })
}

/// Rows to predict plus labels when the file carries them.
pub fn load_inputs(bundle: &ModelBundle, path: &Path) -> Result<(Matrix, Option<Vec<usize>>)> {
    let expected = || {
        let cols: Vec<String> = (0..bundle.schema.names.len()).map(|j| format!("f{j}")).collect();
        let mut s = cols.join(",");
        if bundle.schema.window.is_some() {
            s.push_str(" (or a frame,x,y,z trajectory)");
        }
        s
    };
    match sniff_file_kind(path)? {
        DatasetFileKind::Features => {
            let table = read_feature_csv(path)?;
            if table.features.cols() != bundle.schema.names.len() {
                return Err(Error::shape(
                    format!("columns {}", expected()),
                    format!("{} feature columns", table.features.cols()),
                ));
            }
            let labels = match &table.labels {
                Some(raw) => Some(resolve_labels(raw, Some(&bundle.class_names))?.0),
                None => None,
            };
            Ok((table.features, labels))
        }
        DatasetFileKind::Trajectory => {
            let Some(window) = bundle.schema.window else {
                return Err(Error::shape(format!("columns {}", expected()), "a trajectory file"));
            };
            let rec = load_trajectory_csv(path)?;
            if rec.len() < window.window_len {
                return Err(Error::InsufficientData(format!(
                    "trajectory too short: {} frames, window needs {}",
                    rec.len(),
                    window.window_len
                )));
            }
            let ds = window_featurize(&rec, &window)?;
            let labels = match rec.labels() {
                Some(_) => Some(relabel(&ds, &bundle.class_names)?.labels().to_vec()),
                None => None,
            };
            Ok((ds.features().clone(), labels))
        }
    }
}

pub struct Predictions {
    pub labels: Vec<usize>,
    pub probabilities: Matrix,
}

impl Predictions {
    /// `predicted` followed by one probability column per class.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["predicted".to_string()];
        header.extend(class_names.iter().map(|c| format!("p({c})")));
        w.write_record(&header).expect("in-memory write");
        for (i, row) in self.probabilities.iter_rows().enumerate() {
            let mut rec = vec![class_names[self.labels[i]].clone()];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

pub fn cmd_predict(bundle_path: &Path, input: &Path) -> Result<(ModelBundle, Predictions)> {
    let (bundle, ens) = ModelBundle::load(bundle_path)?;
    let (x, _) = load_inputs(&bundle, input)?;
    let probabilities = ens.predict_proba(&x)?;
    let labels = crate::learners::argmax_rows(&probabilities);
    Ok((bundle, Predictions { labels, probabilities }))
}

pub fn cmd_evaluate(bundle_path: &Path, input: &Path, out_dir: &Path) -> Result<ClassificationReport> {
    let (bundle, ens) = ModelBundle::load(bundle_path)?;
    let (x, labels) = load_inputs(&bundle, input)?;
    let labels = labels.ok_or_else(|| Error::Parse {
        path: input.display().to_string(),
        line: 1,
        message: "missing label column".into(),
    })?;
    if labels.is_empty() {
        return Err(Error::InsufficientData(format!("{} holds no rows", input.display())));
    }
    let ds = LabeledDataset::new(x, labels, bundle.class_names.clone(), bundle.schema.names.clone())?;
    let (report, confusion_csv) = evaluate_on(&ens, &ds)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_report(out_dir, &report, &confusion_csv)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct HostInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub logical_cpus: usize,
}

impl HostInfo {
    pub fn current() -> Self {
        HostInfo {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

pub fn cmd_benchmark(
    bundle_path: &Path,
    input: &Path,
    repetitions: usize,
    out_dir: &Path,
) -> Result<Vec<(usize, BenchmarkResult)>> {
    let (bundle, ens) = ModelBundle::load(bundle_path)?;
    let (x, labels) = load_inputs(&bundle, input)?;
    let rows = truncation_sweep(&ens, &x, labels.as_deref(), repetitions)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(out_dir, BENCHMARK_CSV, &benchmark_csv(&rows))?;
    write(out_dir, HOST_JSON, &serde_json::to_string_pretty(&HostInfo::current())?)?;
    Ok(rows)
}

/// Writes `train.csv`, `test.csv` and one labeled `recording.csv`.
pub fn cmd_synth(profile: &SynthProfile, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (train, test) = synth_generate(profile, seed)?;
    let recording = synth_recording(Skill::Experienced, 0.05, WindowSpec::default().window_len, seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = [out_dir.join("train.csv"), out_dir.join("test.csv")];
    write_dataset_csv(&train, &paths[0])?;
    write_dataset_csv(&test, &paths[1])?;
    let rec = write(out_dir, "recording.csv", &trajectory_to_csv(&recording))?;
    Ok(vec![paths[0].clone(), paths[1].clone(), rec])
}

/// Parses one dataset-list line: a path relative to the list file, or
/// `synth:paper_like:<scale>` / `synth:balanced:<total>`.
fn list_entry(line: &str, base: &Path, index: usize, cfg: &RunConfig) -> Result<LabeledDataset> {
    if let Some(spec) = line.strip_prefix("synth:") {
        let bad = || Error::Config(format!("unrecognised synthetic dataset {line:?}"));
        let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
        let profile = match kind {
            "paper_like" => SynthProfile::PaperLike {
                scale: arg.parse().map_err(|_| bad())?,
            },
            "balanced" => SynthProfile::Balanced {
                total: arg.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        let (train, _) = synth_generate(&profile, derive_seed(cfg.seed, "meta-dataset", index as u64))?;
        Ok(train)
    } else {
        Ok(load_labeled(&base.join(line), &cfg.window, None)?.0)
    }
}

pub struct MetaBuildOutcome {
    pub kb: KnowledgeBase,
    /// Datasets skipped under `allow_partial`, with their errors.
    pub skipped: Vec<(String, Error)>,
}

pub fn cmd_meta_build(list: &Path, cfg: &RunConfig, kb_path: &Path, allow_partial: bool) -> Result<MetaBuildOutcome> {
    cfg.window.validate()?;
    cfg.budget_spec().validate()?;
    let text = std::fs::read_to_string(list).map_err(|e| Error::io(list, e))?;
    let base = list.parent().unwrap_or(Path::new("."));
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.is_empty() {
        return Err(Error::EmptyRun(format!("{} lists no datasets", list.display())));
    }
    let space = ConfigSpace::default();
    let options = CashOptions {
        metric: cfg.metric,
        ..CashOptions::default()
    };
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let entry = list_entry(line, base, i, cfg)
            .map_err(|e| Error::Dataset {
                dataset_id: line.to_string(),
                source: Box::new(e),
            })
            .and_then(|ds| knowledge_base_entry(line, &ds, &space, &cfg.budget_spec(), &options));
        match entry {
            Ok(e) => entries.push(e),
            Err(e) if allow_partial => skipped.push((line.to_string(), e)),
            Err(e) => return Err(e),
        }
    }
    let kb = KnowledgeBase::from_entries(entries, space.hash())?;
    if let Some(dir) = kb_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    kb.save(kb_path)?;
    Ok(MetaBuildOutcome { kb, skipped })
}
