#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use sutureml::cash::{CvObjective, Objective};
use sutureml::data::{stratified_kfold, LabeledDataset, Matrix, SplitSpec};
use sutureml::learners::default_config;
use sutureml::report::LossMetric;
use sutureml::rng::{derive_seed, seeded_indexed};
use sutureml::space::{AlgorithmId, Configuration, ParamValue};

pub fn names(c: usize) -> Vec<String> {
    (0..c).map(|k| format!("c{k}")).collect()
}

/// Class 1 iff both of the first two features are positive, with a gap of
/// 0.2 around each boundary and one noise feature. Roughly a quarter of the
/// rows are positive, and a depth-2 tree separates the classes exactly.
pub fn separable(seed: u64, n: usize) -> LabeledDataset {
    let mut rng = seeded_indexed(seed, "separable", 0);
    let mut data = Vec::with_capacity(n * 3);
    let mut y = Vec::with_capacity(n);
    while y.len() < n {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        if a.abs() < 0.1 || b.abs() < 0.1 {
            continue;
        }
        data.extend_from_slice(&[a, b, rng.gen_range(-1.0..1.0)]);
        y.push((a > 0.0 && b > 0.0) as usize);
    }
    LabeledDataset::with_default_names(Matrix::from_vec(n, 3, data).unwrap(), y, names(2)).unwrap()
}

/// Analytic stand-in for cross-validation: a decision tree of depth near 14
/// with small leaves is best, other algorithms sit on higher plateaus, and
/// each fold adds seeded Gaussian noise.
pub struct ResponseSurface {
    pub seed: u64,
    pub folds: usize,
    pub noise: f64,
}

impl ResponseSurface {
    pub fn clean_loss(cfg: &Configuration) -> f64 {
        let balancing_bonus = match cfg.cat("balancing").unwrap() {
            "smote" => 0.0,
            "weighting" => 0.01,
            _ => 0.03,
        };
        let base = match cfg.algorithm {
            AlgorithmId::DecisionTree => {
                let depth = cfg.int("max_depth").unwrap() as f64;
                let leaf = cfg.int("min_samples_leaf").unwrap() as f64;
                let crit = if cfg.cat("criterion").unwrap() == "entropy" { 0.0 } else { 0.02 };
                0.04 + 0.5 * ((depth - 14.0) / 31.0).powi(2) + 0.004 * (leaf - 1.0) + crit
            }
            AlgorithmId::Knn => 0.22 + 0.2 * (cfg.int("k").unwrap() as f64 - 7.0).abs() / 50.0,
            AlgorithmId::RandomForest => 0.18 + 0.1 * (1.0 - cfg.real("max_features_fraction").unwrap()),
            AlgorithmId::HistGradientBoosting => 0.2 + 0.1 * (cfg.real("learning_rate").unwrap() - 0.1).abs(),
        };
        base + balancing_bonus
    }
}

impl Objective for ResponseSurface {
    fn n_folds(&self) -> usize {
        self.folds
    }

    fn fold_loss(&self, cfg: &Configuration, fold: usize) -> sutureml::Result<f64> {
        let mut rng = seeded_indexed(derive_seed(self.seed, &cfg.to_string(), 0), "fold-noise", fold as u64);
        let noise = Normal::new(0.0, self.noise).unwrap().sample(&mut rng);
        Ok((Self::clean_loss(cfg) + noise).clamp(0.0, 1.0))
    }
}

/// [`separable`] with the second informative feature overwritten by noise,
/// so no classifier gets below a sizeable loss.
pub fn half_informative(seed: u64, n: usize) -> LabeledDataset {
    let ds = separable(seed, n);
    let mut x = ds.features().clone();
    for i in 0..x.rows() {
        x.row_mut(i)[0] = x.row(i)[2];
    }
    LabeledDataset::with_default_names(x, ds.labels().to_vec(), names(2)).unwrap()
}

pub fn leak_probe_configs() -> Vec<Configuration> {
    vec![
        default_config(AlgorithmId::RandomForest).with("n_trees", ParamValue::Int(20)),
        default_config(AlgorithmId::DecisionTree).with("balancing", ParamValue::Cat("smote".into())),
        default_config(AlgorithmId::Knn).with("balancing", ParamValue::Cat("undersample".into())),
    ]
}

/// Appends a column that is zero everywhere except in the validation folds
/// of the leaked objective, where it holds the label index.
pub fn leaky(ds: &LabeledDataset, seed: u64) -> (CvObjective, CvObjective) {
    let widened = LabeledDataset::with_default_names(
        ds.features().with_column(&vec![0.0; ds.n_samples()]),
        ds.labels().to_vec(),
        ds.class_names().to_vec(),
    )
    .unwrap();
    let folds = stratified_kfold(&widened, &SplitSpec::kfold(4, seed)).unwrap();
    let clean = CvObjective::new(&widened, &folds, LossMetric::BalancedAccuracy, seed);
    let mut leaked = CvObjective::new(&widened, &folds, LossMetric::BalancedAccuracy, seed);
    let last = widened.n_features() - 1;
    for v in &mut leaked.valid {
        let mut x = v.features().clone();
        for i in 0..x.rows() {
            x.row_mut(i)[last] = v.labels()[i] as f64;
        }
        *v = LabeledDataset::new(x, v.labels().to_vec(), v.class_names().to_vec(), v.feature_names().to_vec()).unwrap();
    }
    (clean, leaked)
}
