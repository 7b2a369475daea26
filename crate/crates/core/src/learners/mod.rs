//! Base classifiers searched by the optimizer.
//!
//! Every learner is fitted through [`fit`] and wrapped in a [`TrainedModel`],
//! whose canonical serialized form doubles as its size measure.

pub mod binning;
pub mod forest;
mod hgb;
pub mod knn;
pub mod tree;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Matrix};
use crate::error::{Error, Result};
use crate::imbalance::{BalancingKind, ClassWeights};
use crate::space::{AlgorithmId, Configuration, HyperparameterSpace, ParamSpec};

pub use forest::{ForestModel, ForestParams};
pub use hgb::{HgbModel, HgbParams};
pub use knn::{KnnModel, Metric, Weighting};
pub use tree::{ClassificationTree, Criterion, TreeParams};

/// Name of the balancing hyperparameter present in every space.
pub const BALANCING_PARAM: &str = "balancing";

/// Search space of one algorithm, including the shared balancing choice.
pub fn default_space(alg: AlgorithmId) -> HyperparameterSpace {
    let mut params = match alg {
        AlgorithmId::DecisionTree => vec![
            ParamSpec::int("max_depth", 1, 32, false, 32),
            ParamSpec::int("min_samples_leaf", 1, 32, false, 1),
            ParamSpec::categorical("criterion", &["gini", "entropy"], "gini"),
        ],
        AlgorithmId::RandomForest => vec![
            ParamSpec::int("n_trees", 16, 512, true, 100),
            ParamSpec::int("max_depth", 2, 32, false, 32),
            ParamSpec::real("max_features_fraction", 0.1, 1.0, false, 0.25),
            ParamSpec::int("min_samples_leaf", 1, 16, false, 1),
        ],
        AlgorithmId::Knn => vec![
            ParamSpec::int("k", 1, 50, false, 5),
            ParamSpec::categorical("weighting", &["uniform", "inverse-distance"], "uniform"),
            ParamSpec::categorical("metric", &["euclidean", "manhattan"], "euclidean"),
        ],
        AlgorithmId::HistGradientBoosting => vec![
            ParamSpec::int("n_rounds", 32, 512, true, 100),
            ParamSpec::real("learning_rate", 0.01, 0.5, true, 0.1),
            ParamSpec::int("max_bins", 16, 255, false, 255),
            ParamSpec::int("max_leaf_nodes", 4, 64, false, 31),
            ParamSpec::real("l2", 1e-6, 1.0, true, 1e-6),
        ],
    };
    params.push(ParamSpec::categorical(
        BALANCING_PARAM,
        &["none", "weighting", "smote", "undersample"],
        "none",
    ));
    HyperparameterSpace::new(params).expect("built-in spaces are well formed")
}

/// Balancing strategy requested by a configuration; `none` when unset.
pub fn balancing_of(config: &Configuration) -> BalancingKind {
    config
        .cat(BALANCING_PARAM)
        .ok()
        .and_then(BalancingKind::parse)
        .unwrap_or(BalancingKind::None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    DecisionTree(ClassificationTree),
    RandomForest(ForestModel),
    Knn(KnnModel),
    HistGradientBoosting(HgbModel),
}

/// A fitted, immutable classifier.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub algorithm: AlgorithmId,
    pub config: Configuration,
    pub class_count: usize,
    pub n_features: usize,
    pub state: ModelState,
    pub seed: u64,
    pub wall_time_s: f64,
    size_bytes: usize,
}

#[derive(Serialize)]
struct CanonicalRef<'a> {
    algorithm: AlgorithmId,
    class_count: u64,
    n_features: u64,
    state: &'a ModelState,
}

#[derive(Deserialize)]
struct CanonicalOwned {
    algorithm: AlgorithmId,
    class_count: u64,
    n_features: u64,
    state: ModelState,
}

impl TrainedModel {
    /// Bytes of the fitted state as stored in model bundles.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        bincode::serialize(&CanonicalRef {
            algorithm: self.algorithm,
            class_count: self.class_count as u64,
            n_features: self.n_features as u64,
            state: &self.state,
        })
        .expect("in-memory serialization cannot fail")
    }

    pub fn from_canonical_bytes(bytes: &[u8], config: Configuration, seed: u64) -> Result<Self> {
        let c: CanonicalOwned = bincode::deserialize(bytes)?;
        if c.algorithm != config.algorithm {
            return Err(Error::Bundle(format!(
                "state holds {} but configuration names {}",
                c.algorithm, config.algorithm
            )));
        }
        Ok(TrainedModel {
            algorithm: c.algorithm,
            config,
            class_count: c.class_count as usize,
            n_features: c.n_features as usize,
            state: c.state,
            seed,
            wall_time_s: 0.0,
            size_bytes: bytes.len(),
        })
    }

    pub fn size_bytes(&self) -> usize {
        self.size_bytes
    }

    fn predict_row(&self, x: &[f64], out: &mut [f64]) {
        match &self.state {
            ModelState::DecisionTree(t) => out.copy_from_slice(t.predict_row(x)),
            ModelState::RandomForest(f) => f.predict_row(x, out),
            ModelState::Knn(k) => k.predict_row(x, out),
            ModelState::HistGradientBoosting(h) => h.predict_row(x, out),
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features {
            return Err(Error::shape(
                format!("{} feature columns", self.n_features),
                format!("{} columns", x.cols()),
            ));
        }
        let mut out = Matrix::zeros(x.rows(), self.class_count);
        for i in 0..x.rows() {
            self.predict_row(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    pub fn predict_label(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

/// Anything that maps feature rows to class probabilities.
pub trait Classifier {
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix>;

    /// Serialized size in bytes.
    fn size_bytes(&self) -> usize;

    fn predict_label(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

impl Classifier for TrainedModel {
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        TrainedModel::predict_proba(self, x)
    }

    fn size_bytes(&self) -> usize {
        self.size_bytes
    }
}

/// Row-wise argmax; ties resolve to the smaller class id.
pub fn argmax_rows(p: &Matrix) -> Vec<usize> {
    p.iter_rows().map(argmax).collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn model_size(model: &TrainedModel) -> usize {
    model.size_bytes()
}

fn parse_choice<T>(config: &Configuration, name: &str, parse: fn(&str) -> Option<T>) -> Result<T> {
    let raw = config.cat(name)?;
    parse(raw).ok_or_else(|| Error::SpaceViolation(vec![format!("{name}: unknown choice {raw:?}")]))
}

fn positive(config: &Configuration, name: &str) -> Result<usize> {
    Ok(config.int(name)?.max(1) as usize)
}

/// Fits `alg` under `config`. With `weights`, each training row counts with
/// its class weight.
pub fn fit(
    alg: AlgorithmId,
    config: &Configuration,
    ds: &LabeledDataset,
    weights: Option<&ClassWeights>,
    seed: u64,
) -> Result<TrainedModel> {
    if config.algorithm != alg {
        return Err(Error::SpaceViolation(vec![format!(
            "algorithm: configuration is for {}, fitting {alg}",
            config.algorithm
        )]));
    }
    let problems = default_space(alg).violations(&config.params);
    if !problems.is_empty() {
        return Err(Error::SpaceViolation(problems));
    }
    if ds.is_empty() {
        return Err(Error::InsufficientData("cannot fit on an empty dataset".into()));
    }
    let c = ds.n_classes();
    let mut seen = vec![false; c];
    for &y in ds.labels() {
        seen[y] = true;
    }
    if c < 2 || seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateTraining);
    }
    if let Some(w) = weights {
        if w.len() != c {
            return Err(Error::shape(format!("{c} class weights"), w.len()));
        }
    }

    let started = Instant::now();
    let x = ds.features();
    let y = ds.labels();
    let row_weight: Vec<f64> = y.iter().map(|&l| weights.map_or(1.0, |w| w.get(l))).collect();
    let state = match alg {
        AlgorithmId::DecisionTree => {
            let params = TreeParams {
                max_depth: positive(config, "max_depth")?,
                min_samples_leaf: positive(config, "min_samples_leaf")?,
                criterion: parse_choice(config, "criterion", Criterion::parse)?,
                max_features: None,
            };
            let rows: Vec<usize> = (0..x.rows()).collect();
            let bins = binning::FeatureBins::fit(x, &rows, usize::MAX);
            let binned = bins.transform(x);
            let count = vec![1u32; x.rows()];
            let data = tree::TreeData {
                bins: &bins,
                binned: &binned,
                labels: y,
                weight: &row_weight,
                count: &count,
                n_classes: c,
            };
            ModelState::DecisionTree(tree::grow_tree(&data, &params, None))
        }
        AlgorithmId::RandomForest => {
            let params = ForestParams {
                n_trees: positive(config, "n_trees")?,
                max_depth: positive(config, "max_depth")?,
                max_features_fraction: config.real("max_features_fraction")?,
                min_samples_leaf: positive(config, "min_samples_leaf")?,
            };
            ModelState::RandomForest(ForestModel::fit(x, y, &row_weight, c, &params, seed))
        }
        AlgorithmId::Knn => ModelState::Knn(KnnModel::fit(
            x,
            y,
            c,
            positive(config, "k")?,
            parse_choice(config, "weighting", Weighting::parse)?,
            parse_choice(config, "metric", Metric::parse)?,
            weights.map(|w| w.as_slice().to_vec()),
        )),
        AlgorithmId::HistGradientBoosting => {
            let params = HgbParams {
                n_rounds: positive(config, "n_rounds")?,
                learning_rate: config.real("learning_rate")?,
                max_bins: positive(config, "max_bins")?,
                max_leaf_nodes: positive(config, "max_leaf_nodes")?,
                l2: config.real("l2")?,
                min_samples_leaf: (x.rows() / 8).clamp(1, 20),
            };
            ModelState::HistGradientBoosting(HgbModel::fit(x, y, &row_weight, c, &params))
        }
    };
    let mut model = TrainedModel {
        algorithm: alg,
        config: config.clone(),
        class_count: c,
        n_features: x.cols(),
        state,
        seed,
        wall_time_s: 0.0,
        size_bytes: 0,
    };
    model.size_bytes = model.canonical_bytes().len();
    model.wall_time_s = started.elapsed().as_secs_f64();
    Ok(model)
}

/// The default configuration of `alg`.
pub fn default_config(alg: AlgorithmId) -> Configuration {
    Configuration::new(alg, default_space(alg).defaults())
}
