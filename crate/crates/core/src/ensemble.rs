//! Greedy ensemble selection over refitted CASH candidates.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cash::EvaluationRecord;
use crate::data::{LabeledDataset, Matrix};
use crate::error::{Error, Result};
use crate::learners::{balancing_of, Classifier, TrainedModel};
use crate::report::{median, BenchmarkResult, LossMetric};

pub const DEFAULT_ENSEMBLE_ROUNDS: usize = 50;

/// Weighted average of member probabilities.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    /// Heaviest first.
    pub members: Vec<TrainedModel>,
    /// Times each member was selected.
    pub counts: Vec<usize>,
    pub weights: Vec<f64>,
    pub metric: LossMetric,
    /// Selection-set loss of the full ensemble.
    pub validation_loss: f64,
}

impl EnsembleModel {
    /// Builds from members and positive selection counts.
    pub fn from_counts(members: Vec<TrainedModel>, counts: Vec<usize>, metric: LossMetric, validation_loss: f64) -> Result<Self> {
        if members.is_empty() || members.len() != counts.len() || counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("ensemble needs members with positive selection counts".into()));
        }
        let (c, d) = (members[0].class_count, members[0].n_features);
        if let Some(m) = members.iter().find(|m| m.class_count != c || m.n_features != d) {
            return Err(Error::shape(
                format!("{c} classes over {d} features"),
                format!("{} classes over {} features", m.class_count, m.n_features),
            ));
        }
        let total: usize = counts.iter().sum();
        let weights = counts.iter().map(|&k| k as f64 / total as f64).collect();
        Ok(EnsembleModel {
            members,
            counts,
            weights,
            metric,
            validation_loss,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.members[0].class_count
    }

    pub fn n_features(&self) -> usize {
        self.members[0].n_features
    }

    /// The `k` heaviest members with their counts renormalized.
    pub fn truncated(&self, k: usize) -> Result<EnsembleModel> {
        let k = k.clamp(1, self.len());
        EnsembleModel::from_counts(self.members[..k].to_vec(), self.counts[..k].to_vec(), self.metric, f64::NAN)
    }
}

impl Classifier for EnsembleModel {
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        ensemble_predict_proba(self, x)
    }

    fn size_bytes(&self) -> usize {
        self.members.iter().map(TrainedModel::size_bytes).sum()
    }
}

/// Accumulates `weight * p` into `acc`.
pub fn accumulate(acc: &mut Matrix, p: &Matrix, weight: f64) {
    for (a, v) in acc.as_mut_slice().iter_mut().zip(p.as_slice()) {
        *a += weight * v;
    }
}

pub fn ensemble_predict_proba(ens: &EnsembleModel, x: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.rows(), ens.n_classes());
    for (m, &w) in ens.members.iter().zip(&ens.weights) {
        let p = m.predict_proba(x)?;
        if p.cols() != out.cols() {
            return Err(Error::shape(format!("{} classes", out.cols()), format!("{} classes", p.cols())));
        }
        accumulate(&mut out, &p, w);
    }
    Ok(out)
}

fn averaged(sum: &Matrix, extra: Option<&Matrix>, n: usize) -> Matrix {
    let scale = 1.0 / n as f64;
    let data = match extra {
        Some(e) => sum.as_slice().iter().zip(e.as_slice()).map(|(s, v)| (s + v) * scale).collect(),
        None => sum.as_slice().iter().map(|s| s * scale).collect(),
    };
    Matrix::from_vec(sum.rows(), sum.cols(), data).expect("same shape")
}

/// Greedy forward selection with replacement.
///
/// Selection starts from the best single candidate; each of `rounds` steps
/// adds the candidate whose inclusion gives the lowest loss of the running
/// average. Ties go to the candidate with the lower standalone loss, then
/// to the lower index. The longest prefix of the selection sequence reaching
/// the minimum loss is kept, so the result is never worse than the best
/// single candidate on `y_valid`.
pub fn greedy_select(
    candidates: &[(TrainedModel, Matrix)],
    y_valid: &[usize],
    rounds: usize,
    metric: LossMetric,
) -> Result<EnsembleModel> {
    if candidates.is_empty() {
        return Err(Error::EmptyRun("no ensemble candidates".into()));
    }
    let (m, c) = (candidates[0].1.rows(), candidates[0].1.cols());
    if let Some((_, p)) = candidates.iter().find(|(_, p)| p.rows() != m || p.cols() != c || p.rows() != y_valid.len()) {
        return Err(Error::shape(
            format!("{} x {c} held-out probabilities", y_valid.len()),
            format!("{} x {}", p.rows(), p.cols()),
        ));
    }
    let single = candidates
        .iter()
        .map(|(_, p)| metric.loss(y_valid, p))
        .collect::<Result<Vec<f64>>>()?;
    let mut sum = Matrix::zeros(m, c);
    let mut sequence: Vec<usize> = Vec::with_capacity(rounds + 1);
    let mut losses: Vec<f64> = Vec::with_capacity(rounds + 1);
    for step in 0..=rounds {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, p)) in candidates.iter().enumerate() {
            let loss = if step == 0 {
                single[i]
            } else {
                metric.loss(y_valid, &averaged(&sum, Some(p), step + 1))?
            };
            let better = match best {
                None => true,
                Some((j, b)) => loss < b || (loss == b && single[i] < single[j]),
            };
            if better {
                best = Some((i, loss));
            }
        }
        let (i, loss) = best.expect("candidates nonempty");
        accumulate(&mut sum, &candidates[i].1, 1.0);
        sequence.push(i);
        losses.push(loss);
    }
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let keep = losses.iter().rposition(|&l| l == min).expect("nonempty") + 1;

    let mut counts = vec![0usize; candidates.len()];
    for &i in &sequence[..keep] {
        counts[i] += 1;
    }
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| counts[i] > 0).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    EnsembleModel::from_counts(
        order.iter().map(|&i| candidates[i].0.clone()).collect(),
        order.iter().map(|&i| counts[i]).collect(),
        metric,
        min,
    )
}

/// Benchmark of the `k` heaviest members for every `k`.
///
/// Each repetition times every member's prediction pass together with its
/// weighted accumulation; the time for `k` members is the sum of the first
/// `k` timings. Accuracy is measured on the renormalized truncation, and on
/// the unmodified ensemble for the last row.
pub fn truncation_sweep(
    ens: &EnsembleModel,
    x: &Matrix,
    y: Option<&[usize]>,
    repetitions: usize,
) -> Result<Vec<(usize, BenchmarkResult)>> {
    if repetitions < 3 {
        return Err(Error::Config(format!("at least 3 repetitions required, got {repetitions}")));
    }
    if x.rows() == 0 {
        return Err(Error::InsufficientData("benchmark input has no rows".into()));
    }
    let k_max = ens.len();
    let mut rates = vec![Vec::with_capacity(repetitions); k_max];
    for _ in 0..repetitions {
        let mut acc = Matrix::zeros(x.rows(), ens.n_classes());
        let mut elapsed = 0.0;
        for (k, (m, &w)) in ens.members.iter().zip(&ens.weights).enumerate() {
            let started = Instant::now();
            let p = m.predict_proba(x)?;
            accumulate(&mut acc, &p, w);
            elapsed += started.elapsed().as_secs_f64().max(1e-9);
            rates[k].push(x.rows() as f64 / elapsed);
        }
        std::hint::black_box(&acc);
    }
    let mut size = 0;
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        size += ens.members[k - 1].size_bytes();
        let accuracy = match y.filter(|y| !y.is_empty()) {
            Some(y) => {
                let pred = if k == k_max { ens.predict_label(x)? } else { ens.truncated(k)?.predict_label(x)? };
                Some(pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
            }
            None => None,
        };
        out.push((
            k,
            BenchmarkResult {
                model_size_bytes: size,
                predictions_per_second: median(&rates[k - 1]),
                accuracy,
                batch_size: x.rows(),
                repetitions,
            },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub no: usize,
    pub classifier: String,
    pub model_id: usize,
    pub ensemble_weight: f64,
    /// Mean cross-validation loss from the search.
    pub cost: f64,
    pub balancing_strategy: String,
    pub validation_score: f64,
}

/// One row per member, heaviest first, each traced back to its search
/// record by configuration.
pub fn contribution_table(
    ens: &EnsembleModel,
    trace: &[EvaluationRecord],
    valid: &LabeledDataset,
) -> Result<Vec<ContributionRow>> {
    let mut rows = Vec::with_capacity(ens.len());
    for (k, (m, &w)) in ens.members.iter().zip(&ens.weights).enumerate() {
        let id = trace
            .iter()
            .position(|r| r.is_complete() && r.config == m.config)
            .ok_or(Error::Provenance(k))?;
        let loss = ens.metric.loss(valid.labels(), &m.predict_proba(valid.features())?)?;
        rows.push(ContributionRow {
            no: k + 1,
            classifier: m.algorithm.classifier_name().to_string(),
            model_id: id,
            ensemble_weight: w,
            cost: trace[id].mean_loss,
            balancing_strategy: balancing_of(&m.config).title().to_string(),
            validation_score: ens.metric.score_from_loss(loss),
        });
    }
    Ok(rows)
}

pub const CONTRIBUTION_COLUMNS: [&str; 6] =
    ["No.", "Classifier", "Ensemble Weight", "Cost", "Balancing Strategy", "Validation Score"];

fn classifier_cell(r: &ContributionRow) -> String {
    format!("{} #{}", r.classifier, r.model_id)
}

pub fn contribution_csv(rows: &[ContributionRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONTRIBUTION_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.no.to_string(),
            classifier_cell(r),
            format!("{:.4}", r.ensemble_weight),
            format!("{:.4}", r.cost),
            r.balancing_strategy.clone(),
            format!("{:.4}", r.validation_score),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn contribution_text(rows: &[ContributionRow]) -> String {
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.no.to_string(),
                classifier_cell(r),
                format!("{:.2}", r.ensemble_weight),
                format!("{:.4}", r.cost),
                r.balancing_strategy.clone(),
                format!("{:.4}", r.validation_score),
            ]
        })
        .collect();
    let mut widths: [usize; 6] = CONTRIBUTION_COLUMNS.map(str::len);
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let mut s = String::new();
        for (j, cell) in row.iter().enumerate() {
            if j == 1 || j == 4 {
                let _ = write!(s, "{:<w$}  ", cell, w = widths[j]);
            } else {
                let _ = write!(s, "{:>w$}  ", cell, w = widths[j]);
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, &CONTRIBUTION_COLUMNS);
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
