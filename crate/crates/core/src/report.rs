//! Evaluation metrics, classification reports and throughput benchmarks.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{ClassDistribution, Matrix};
use crate::error::{Error, Result};
use crate::imbalance::{present_class_weights, weighted_cross_entropy, ClassWeights};
use crate::learners::{argmax_rows, Classifier};

/// Loss minimized by the optimizer and by ensemble selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMetric {
    /// `1 - balanced accuracy`.
    #[default]
    BalancedAccuracy,
    /// `1 - macro F1`.
    MacroF1,
    /// Class-weighted cross-entropy.
    LogLoss,
}

impl LossMetric {
    pub const ALL: [LossMetric; 3] = [LossMetric::BalancedAccuracy, LossMetric::MacroF1, LossMetric::LogLoss];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossMetric::BalancedAccuracy => "balanced_accuracy",
            LossMetric::MacroF1 => "macro_f1",
            LossMetric::LogLoss => "log_loss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Loss of probability predictions `proba` against `y_true`.
    ///
    /// For the log loss, classes are weighted by their frequency in `y_true`
    /// so every class present contributes equally.
    pub fn loss(&self, y_true: &[usize], proba: &Matrix) -> Result<f64> {
        if y_true.len() != proba.rows() {
            return Err(Error::shape(format!("{} predictions", y_true.len()), proba.rows()));
        }
        if y_true.is_empty() {
            return Err(Error::InsufficientData("cannot score an empty set".into()));
        }
        let c = proba.cols();
        match self {
            LossMetric::BalancedAccuracy | LossMetric::MacroF1 => {
                let cm = confusion(y_true, &argmax_rows(proba), c)?;
                Ok(1.0
                    - if *self == LossMetric::BalancedAccuracy {
                        cm.balanced_accuracy()
                    } else {
                        cm.macro_f1()
                    })
            }
            LossMetric::LogLoss => {
                let mut counts = vec![0usize; c];
                for &y in y_true {
                    counts[y] += 1;
                }
                let w = present_class_weights(&ClassDistribution::from_counts(counts));
                let mut total = 0.0;
                for (i, &y) in y_true.iter().enumerate() {
                    total += weighted_cross_entropy(&w, y, proba.row(i))?;
                }
                Ok(total / y_true.len() as f64)
            }
        }
    }

    /// Maps a loss onto a `[0, 1]` score where higher is better.
    pub fn score_from_loss(&self, loss: f64) -> f64 {
        match self {
            LossMetric::LogLoss => (-loss).exp(),
            _ => (1.0 - loss).clamp(0.0, 1.0),
        }
    }
}

impl std::fmt::Display for LossMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!("{} predictions", y_true.len()), y_pred.len()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidDataset(format!("label {} outside {n_classes} classes", t.max(p))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::shape(format!("{c}x{c} counts"), "ragged rows"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Mean recall over the classes that occur in the truth.
    pub fn balanced_accuracy(&self) -> f64 {
        let recalls: Vec<f64> = (0..self.n_classes())
            .filter(|&k| self.support(k) > 0)
            .map(|k| self.counts[k][k] as f64 / self.support(k) as f64)
            .collect();
        if recalls.is_empty() {
            0.0
        } else {
            recalls.iter().sum::<f64>() / recalls.len() as f64
        }
    }

    /// Mean F1 over the classes that occur in the truth or the predictions.
    pub fn macro_f1(&self) -> f64 {
        let f1s: Vec<f64> = (0..self.n_classes())
            .filter(|&k| self.support(k) > 0 || self.predicted(k) > 0)
            .map(|k| {
                let tp = self.counts[k][k] as f64;
                let denom = (self.support(k) + self.predicted(k)) as f64;
                2.0 * tp / denom
            })
            .collect();
        if f1s.is_empty() {
            0.0
        } else {
            f1s.iter().sum::<f64>() / f1s.len() as f64
        }
    }

    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for name in class_names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            out.push_str(&csv_field(&class_names[k]));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision, recall, F1 and support with summary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub total_support: u64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 || cm.n_classes() == 0 {
        return Err(Error::InsufficientData("confusion matrix is empty".into()));
    }
    let classes: Vec<ClassMetrics> = (0..cm.n_classes())
        .map(|k| {
            let tp = cm.get(k, k);
            let (precision, p_flag) = ratio(tp, cm.predicted(k));
            let (recall, r_flag) = ratio(tp, cm.support(k));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                name: k.to_string(),
                precision,
                recall,
                f1,
                support: cm.support(k),
                zero_division: p_flag || r_flag,
            }
        })
        .collect();
    let c = classes.len() as f64;
    let macro_avg = AverageMetrics {
        precision: classes.iter().map(|m| m.precision).sum::<f64>() / c,
        recall: classes.iter().map(|m| m.recall).sum::<f64>() / c,
        f1: classes.iter().map(|m| m.f1).sum::<f64>() / c,
    };
    let t = total as f64;
    let weighted_avg = AverageMetrics {
        precision: classes.iter().map(|m| m.precision * m.support as f64).sum::<f64>() / t,
        recall: classes.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / t,
        f1: classes.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / t,
    };
    Ok(ClassificationReport {
        classes,
        accuracy: cm.trace() as f64 / t,
        macro_avg,
        weighted_avg,
        total_support: total,
    })
}

impl ClassificationReport {
    pub fn with_class_names(mut self, names: &[String]) -> Self {
        for (m, n) in self.classes.iter_mut().zip(names) {
            m.name = n.clone();
        }
        self
    }

    /// Fixed-width text with the columns Class, Precision, Recall, F1-score
    /// and Support.
    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|m| m.name.chars().count())
            .chain(["Weighted avg".len()])
            .max()
            .unwrap_or(0)
            + 2;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}{:>10}{:>10}{:>10}{:>10}",
            "Class", "Precision", "Recall", "F1-score", "Support"
        );
        for m in &self.classes {
            let _ = writeln!(
                out,
                "{:<width$}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                m.name, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}{:>10}{:>10}{:>10.2}{:>10}",
            "Accuracy", "", "", self.accuracy, self.total_support
        );
        for (label, avg) in [("Macro avg", &self.macro_avg), ("Weighted avg", &self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:<width$}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                label, avg.precision, avg.recall, avg.f1, self.total_support
            );
        }
        out
    }
}

/// Per-sample loss used when scoring held-out predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestLoss {
    ZeroOne,
    CrossEntropy,
}

pub enum Predictions<'a> {
    Labels(&'a [usize]),
    Probabilities(&'a Matrix),
}

/// Mean per-sample loss `(1/m) Σ L(ŷ, y)`.
pub fn test_loss(
    y_true: &[usize],
    predictions: Predictions<'_>,
    loss: TestLoss,
    weights: Option<&ClassWeights>,
) -> Result<f64> {
    let m = y_true.len();
    match (loss, predictions) {
        (TestLoss::ZeroOne, Predictions::Labels(pred)) => {
            if pred.len() != m {
                return Err(Error::shape(format!("{m} predictions"), pred.len()));
            }
            if m == 0 {
                return Ok(0.0);
            }
            Ok(y_true.iter().zip(pred).filter(|(a, b)| a != b).count() as f64 / m as f64)
        }
        (TestLoss::CrossEntropy, Predictions::Probabilities(p)) => {
            if p.rows() != m {
                return Err(Error::shape(format!("{m} predictions"), p.rows()));
            }
            if m == 0 {
                return Ok(0.0);
            }
            let unit = ClassWeights::uniform(p.cols());
            let w = weights.unwrap_or(&unit);
            let mut total = 0.0;
            for (i, &y) in y_true.iter().enumerate() {
                total += weighted_cross_entropy(w, y, p.row(i))?;
            }
            Ok(total / m as f64)
        }
        (TestLoss::ZeroOne, Predictions::Probabilities(_)) => Err(Error::Contract(
            "0/1 loss needs hard labels, received probabilities".into(),
        )),
        (TestLoss::CrossEntropy, Predictions::Labels(_)) => Err(Error::Contract(
            "cross-entropy needs probabilities, received hard labels".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub model_size_bytes: usize,
    pub predictions_per_second: f64,
    pub accuracy: Option<f64>,
    pub batch_size: usize,
    pub repetitions: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn accuracy_of(pred: &[usize], y: Option<&[usize]>) -> Option<f64> {
    y.filter(|y| !y.is_empty()).map(|y| {
        pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    })
}

/// Median prediction throughput over `repetitions` timed passes over `x`.
pub fn throughput_benchmark(
    model: &dyn Classifier,
    x: &Matrix,
    y: Option<&[usize]>,
    repetitions: usize,
) -> Result<BenchmarkResult> {
    if repetitions < 3 {
        return Err(Error::Config(format!("at least 3 repetitions required, got {repetitions}")));
    }
    if x.rows() == 0 {
        return Err(Error::InsufficientData("benchmark input has no rows".into()));
    }
    let mut rates = Vec::with_capacity(repetitions);
    let mut labels = Vec::new();
    for _ in 0..repetitions {
        let started = Instant::now();
        let p = model.predict_proba(x)?;
        let secs = started.elapsed().as_secs_f64().max(1e-9);
        rates.push(x.rows() as f64 / secs);
        labels = argmax_rows(&p);
    }
    Ok(BenchmarkResult {
        model_size_bytes: model.size_bytes(),
        predictions_per_second: median(&rates),
        accuracy: accuracy_of(&labels, y),
        batch_size: x.rows(),
        repetitions,
    })
}

pub const BENCHMARK_CSV_HEADER: &str = "members,size_bytes,preds_per_sec,accuracy";

pub fn benchmark_csv(rows: &[(usize, BenchmarkResult)]) -> String {
    let mut out = String::from(BENCHMARK_CSV_HEADER);
    out.push('\n');
    for (k, r) in rows {
        let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{k},{},{},{acc}", r.model_size_bytes, r.predictions_per_second);
    }
    out
}
