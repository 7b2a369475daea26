//! Datasets, trajectory ingestion, windowed featurization, synthetic data and
//! stratified splitting.

mod csv_io;
mod split;
mod synth;
mod trajectory;
mod window;

pub use csv_io::{
    dataset_to_csv, parse_feature_csv, read_dataset_csv, read_feature_csv, resolve_labels,
    sniff_file_kind, write_dataset_csv, DatasetFileKind, FeatureTable,
};
pub use split::{stratified_holdout, stratified_kfold, Fold, SplitMode, SplitSpec};
pub use synth::{
    synth_generate, synth_recording, synth_samples, Partition, Skill, SynthProfile, SynthSample,
    DEFAULT_PAPER_SCALE, REFERENCE_SUPPORTS,
};
pub use trajectory::{
    compute_characteristics, load_trajectory_csv, parse_trajectory_csv, trajectory_to_csv, Frame,
    TrajectoryCharacteristics, TrajectoryRecording,
};
pub use window::{window_featurize, window_feature_names, LabelRule, WindowSpec, WINDOW_FEATURES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eleven suturing actions, in report order.
pub const ACTION_CLASSES: [&str; 11] = [
    "Create Bight",
    "Distal bite",
    "Double throw",
    "Grasp needle",
    "Needle exits",
    "Proximal bite",
    "Seek needle",
    "Seek proximal insertion",
    "Set needle",
    "Single throw",
    "Tension",
];

/// The order in which the actions are performed during one suture.
pub const ACTION_SEQUENCE: [usize; 11] = [6, 3, 8, 7, 5, 1, 4, 10, 0, 9, 2];

pub fn action_vocabulary() -> Vec<String> {
    ACTION_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Looks a label up in the action vocabulary, ignoring case and surrounding
/// whitespace.
pub fn action_id(label: &str) -> Option<usize> {
    let label = label.trim();
    ACTION_CLASSES
        .iter()
        .position(|c| c.eq_ignore_ascii_case(label))
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    format!("{cols} columns"),
                    format!("{} in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row width");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Appends a column to the right of the matrix.
    pub fn with_column(&self, column: &[f64]) -> Matrix {
        assert_eq!(column.len(), self.rows);
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for (i, v) in column.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(*v);
        }
        Matrix {
            rows: self.rows,
            cols: self.cols + 1,
            data,
        }
    }
}

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                format!("{} labels", features.rows()),
                labels.len(),
            ));
        }
        if features.cols() == 0 {
            return Err(Error::InvalidDataset("at least one feature is required".into()));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::shape(
                format!("{} feature names", features.cols()),
                feature_names.len(),
            ));
        }
        if class_names.is_empty() {
            return Err(Error::InvalidDataset("empty class vocabulary".into()));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {}, column {}",
                pos / features.cols(),
                pos % features.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} outside vocabulary of {} classes",
                class_names.len()
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_names,
            feature_names,
        })
    }

    /// Uses `f0..f{d-1}` as feature names.
    pub fn with_default_names(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let names = (0..features.cols()).map(|j| format!("f{j}")).collect();
        Self::new(features, labels, class_names, names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Row-wise concatenation; both sides must share vocabulary and schema.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.class_names != other.class_names || self.feature_names != other.feature_names {
            return Err(Error::InvalidDataset(
                "cannot concatenate datasets with different schemas".into(),
            ));
        }
        let mut features = self.features.clone();
        for r in other.features.iter_rows() {
            features.push_row(r);
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(LabeledDataset {
            features,
            labels,
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        })
    }

    /// Indices of the rows of each class, in row order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Per-class sample counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ClassDistribution {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let total = counts.iter().sum();
        ClassDistribution { counts, total }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Class id with the largest count; ties go to the smaller id.
    pub fn majority_class(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (c, &n) in self.counts.iter().enumerate() {
            if best.map_or(true, |b| n > self.counts[b]) {
                best = Some(c);
            }
        }
        best
    }
}

pub fn class_distribution(ds: &LabeledDataset) -> ClassDistribution {
    let mut counts = vec![0; ds.n_classes()];
    for &l in ds.labels() {
        counts[l] += 1;
    }
    ClassDistribution::from_counts(counts)
}
