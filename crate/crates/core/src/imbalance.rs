//! Class weighting, weighted cross-entropy and resampling.

use std::fmt;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{class_distribution, ClassDistribution, LabeledDataset, Matrix};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROBABILITY_EPSILON: f64 = 1e-12;

/// Per-class loss multipliers `w_i = N / (C * N_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn uniform(n_classes: usize) -> Self {
        ClassWeights(vec![1.0; n_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn class_weights(dist: &ClassDistribution) -> Result<ClassWeights> {
    if let Some(c) = dist.counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(format!("class {c}")));
    }
    let n = dist.total as f64;
    let c = dist.n_classes() as f64;
    Ok(ClassWeights(
        dist.counts.iter().map(|&ni| n / (c * ni as f64)).collect(),
    ))
}

/// Single-sample weighted cross-entropy `-w_y * ln(p_y)` for a one-hot target.
pub fn weighted_cross_entropy(weights: &ClassWeights, true_label: usize, predicted: &[f64]) -> Result<f64> {
    if predicted.len() != weights.len() {
        return Err(Error::shape(format!("{} probabilities", weights.len()), predicted.len()));
    }
    if true_label >= predicted.len() {
        return Err(Error::Contract(format!("label {true_label} out of range")));
    }
    if predicted.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::Contract("negative or NaN probability".into()));
    }
    let sum: f64 = predicted.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("probabilities sum to {sum}")));
    }
    Ok(-weights.get(true_label) * predicted[true_label].max(PROBABILITY_EPSILON).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancingKind {
    None,
    Weighting,
    Smote,
    Undersample,
}

impl BalancingKind {
    pub const ALL: [BalancingKind; 4] = [
        BalancingKind::None,
        BalancingKind::Weighting,
        BalancingKind::Smote,
        BalancingKind::Undersample,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BalancingKind::None => "none",
            BalancingKind::Weighting => "weighting",
            BalancingKind::Smote => "smote",
            BalancingKind::Undersample => "undersample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Display label used in contribution tables.
    pub fn title(&self) -> &'static str {
        match self {
            BalancingKind::None => "None",
            BalancingKind::Weighting => "Weighting",
            BalancingKind::Smote => "SMOTE",
            BalancingKind::Undersample => "Undersampling",
        }
    }
}

impl fmt::Display for BalancingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancingStrategy {
    pub kind: BalancingKind,
    pub smote_k: usize,
    /// Minority/majority ratio to reach when undersampling.
    pub target_ratio: f64,
}

impl BalancingStrategy {
    pub fn new(kind: BalancingKind) -> Self {
        BalancingStrategy {
            kind,
            smote_k: 5,
            target_ratio: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smote_k == 0 {
            return Err(Error::Config("smote_k must be at least 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Config(format!("target_ratio {} outside (0, 1]", self.target_ratio)));
        }
        Ok(())
    }
}

/// Training data after applying a balancing strategy.
#[derive(Debug, Clone)]
pub struct Balanced {
    pub data: LabeledDataset,
    pub weights: Option<ClassWeights>,
}

/// Applies `strategy` to a training split. Validation data must never pass
/// through here.
pub fn apply_balancing(ds: &LabeledDataset, strategy: &BalancingStrategy, seed: u64) -> Result<Balanced> {
    strategy.validate()?;
    Ok(match strategy.kind {
        BalancingKind::None => Balanced {
            data: ds.clone(),
            weights: None,
        },
        BalancingKind::Weighting => Balanced {
            data: ds.clone(),
            weights: Some(present_class_weights(&class_distribution(ds))),
        },
        BalancingKind::Smote => Balanced {
            data: smote_oversample(ds, &SmoteOptions::new(strategy.smote_k), seed)?,
            weights: None,
        },
        BalancingKind::Undersample => Balanced {
            data: random_undersample(ds, strategy.target_ratio, seed)?,
            weights: None,
        },
    })
}

/// Class weights over the classes that actually occur; absent classes get
/// weight 1 so vocabularies larger than the sample stay usable.
pub fn present_class_weights(dist: &ClassDistribution) -> ClassWeights {
    let present: Vec<usize> = dist.counts.iter().copied().filter(|&n| n > 0).collect();
    let reduced = ClassDistribution::from_counts(present);
    let w = class_weights(&reduced).unwrap_or_else(|_| ClassWeights::uniform(reduced.n_classes()));
    let mut it = w.0.into_iter();
    ClassWeights(
        dist.counts
            .iter()
            .map(|&n| if n > 0 { it.next().unwrap_or(1.0) } else { 1.0 })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteOptions {
    pub k: usize,
    /// Replicate single-sample classes with small Gaussian jitter instead of
    /// failing.
    pub jitter_singletons: bool,
}

impl SmoteOptions {
    pub fn new(k: usize) -> Self {
        SmoteOptions {
            k,
            jitter_singletons: false,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Raises every class to the majority count by interpolating between
/// same-class nearest neighbours. Original rows come first, in order.
pub fn smote_oversample(ds: &LabeledDataset, opts: &SmoteOptions, seed: u64) -> Result<LabeledDataset> {
    if opts.k == 0 {
        return Err(Error::Config("SMOTE needs k >= 1".into()));
    }
    let dist = class_distribution(ds);
    let target = dist.counts.iter().copied().max().unwrap_or(0);
    let members = ds.class_indices();
    let x = ds.features();
    let d = ds.n_features();

    let mut features = x.clone();
    let mut labels = ds.labels().to_vec();
    let mut rng = seeded(seed, "smote");
    let feature_sd: Vec<f64> = (0..d)
        .map(|j| {
            let n = ds.n_samples() as f64;
            let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            (x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();

    let mut synthetic = vec![0.0; d];
    for (class, idx) in members.iter().enumerate() {
        let count = idx.len();
        if count == 0 || count >= target {
            continue;
        }
        let need = target - count;
        if count == 1 {
            if !opts.jitter_singletons {
                return Err(Error::DegenerateClass(ds.class_names()[class].clone()));
            }
            let base = x.row(idx[0]);
            for _ in 0..need {
                for j in 0..d {
                    let sd = 1e-3 * feature_sd[j];
                    let noise = if sd > 0.0 {
                        Normal::new(0.0, sd).expect("finite sd").sample(&mut rng)
                    } else {
                        0.0
                    };
                    synthetic[j] = base[j] + noise;
                }
                features.push_row(&synthetic);
                labels.push(class);
            }
            continue;
        }
        let k = opts.k.min(count - 1);
        // k nearest same-class neighbours of every member, ties by position
        let neighbours: Vec<Vec<usize>> = idx
            .iter()
            .map(|&i| {
                let mut cand: Vec<(f64, usize)> = idx
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (squared_distance(x.row(i), x.row(j)), j))
                    .collect();
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(k);
                cand.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        for _ in 0..need {
            let b = rng.gen_range(0..count);
            let nn = neighbours[b][rng.gen_range(0..k)];
            let lambda: f64 = rng.gen_range(0.0..=1.0);
            let (xb, xn) = (x.row(idx[b]), x.row(nn));
            for j in 0..d {
                synthetic[j] = xb[j] + lambda * (xn[j] - xb[j]);
            }
            features.push_row(&synthetic);
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, ds.class_names().to_vec(), ds.feature_names().to_vec())
}

/// Randomly drops rows of large classes so that no class exceeds
/// `ceil(minority / target_ratio)`. Kept rows stay in their original order.
pub fn random_undersample(ds: &LabeledDataset, target_ratio: f64, seed: u64) -> Result<LabeledDataset> {
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(Error::Config(format!("target_ratio {target_ratio} outside (0, 1]")));
    }
    let dist = class_distribution(ds);
    let minority = match dist.counts.iter().copied().filter(|&n| n > 0).min() {
        Some(m) => m,
        None => return Ok(ds.clone()),
    };
    let cap = (minority as f64 / target_ratio).ceil() as usize;
    let mut rng = seeded(seed, "undersample");
    let mut keep = Vec::with_capacity(ds.n_samples());
    for idx in ds.class_indices() {
        if idx.len() <= cap {
            keep.extend_from_slice(&idx);
        } else {
            let chosen = sample(&mut rng, idx.len(), cap);
            keep.extend(chosen.into_iter().map(|p| idx[p]));
        }
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}

/// Distance from `p` to the segment `a`-`b`.
pub fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter().zip(a).zip(&ab).map(|((pi, ai), d)| (pi - ai) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    p.iter()
        .zip(a)
        .zip(&ab)
        .map(|((pi, ai), d)| (pi - (ai + t * d)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Helper for tests and diagnostics: rows of `features` listed by class.
pub fn rows_of_class(features: &Matrix, labels: &[usize], class: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class)
        .map(|(i, _)| features.row(i).to_vec())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::REFERENCE_SUPPORTS;
    use proptest::prelude::*;

    fn two_class(n0: usize, n1: usize, seed: u64) -> LabeledDataset {
        let mut rng = seeded(seed, "fixture");
        let n = n0 + n1;
        let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let labels = (0..n).map(|i| usize::from(i >= n0)).collect();
        LabeledDataset::with_default_names(
            Matrix::from_vec(n, 2, data).unwrap(),
            labels,
            vec!["maj".into(), "min".into()],
        )
        .unwrap()
    }

    #[test]
    fn balanced_counts_give_unit_weights() {
        let w = class_weights(&ClassDistribution::from_counts(vec![10, 10])).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn weights_on_reference_supports() {
        let w = class_weights(&ClassDistribution::from_counts(REFERENCE_SUPPORTS.to_vec())).unwrap();
        // 23432 / (11 * 9604) and 23432 / (11 * 251)
        assert!((w.get(2) - 0.2218).abs() < 1e-3);
        assert!((w.get(3) - 8.487).abs() < 1e-3);
    }

    #[test]
    fn three_to_one_weights() {
        let w = class_weights(&ClassDistribution::from_counts(vec![30, 10])).unwrap();
        assert!((w.get(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((w.get(1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_class_is_an_error() {
        let err = class_weights(&ClassDistribution::from_counts(vec![3, 0])).unwrap_err();
        assert_eq!(err.code(), "E_EMPTY_CLASS");
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let unit = ClassWeights::uniform(2);
        assert_eq!(weighted_cross_entropy(&unit, 0, &[1.0, 0.0]).unwrap(), 0.0);
        let e = (-1.0f64).exp();
        let l = weighted_cross_entropy(&unit, 0, &[e, 1.0 - e]).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let two = ClassWeights(vec![2.0, 1.0]);
        let l = weighted_cross_entropy(&two, 0, &[0.5, 0.5]).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_contract() {
        let unit = ClassWeights::uniform(2);
        assert_eq!(weighted_cross_entropy(&unit, 0, &[0.5, 0.6]).unwrap_err().code(), "E_CONTRACT");
        let l = weighted_cross_entropy(&unit, 1, &[1.0, 0.0]).unwrap();
        assert!((l + PROBABILITY_EPSILON.ln()).abs() < 1e-9);
    }

    #[test]
    fn smote_segment_endpoints() {
        let ds = LabeledDataset::with_default_names(
            Matrix::from_rows(&[vec![5.0, 5.0], vec![6.0, 5.0], vec![7.0, 5.0], vec![0.0, 0.0], vec![1.0, 1.0]])
                .unwrap(),
            vec![0, 0, 0, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let out = smote_oversample(&ds, &SmoteOptions::new(1), 4).unwrap();
        assert_eq!(class_distribution(&out).counts, vec![3, 3]);
        let p = out.features().row(5);
        assert!(segment_distance(p, &[0.0, 0.0], &[1.0, 1.0]) < 1e-12);
        assert!((p[0] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn smote_balanced_is_noop() {
        let ds = two_class(6, 6, 2);
        assert_eq!(smote_oversample(&ds, &SmoteOptions::new(5), 1).unwrap(), ds);
    }

    #[test]
    fn smote_singleton() {
        let ds = two_class(5, 1, 3);
        assert_eq!(
            smote_oversample(&ds, &SmoteOptions::new(5), 1).unwrap_err().code(),
            "E_DEGENERATE_CLASS"
        );
        let opts = SmoteOptions {
            k: 5,
            jitter_singletons: true,
        };
        let out = smote_oversample(&ds, &opts, 1).unwrap();
        assert_eq!(class_distribution(&out).counts, vec![5, 5]);
        let base = ds.features().row(5);
        for r in rows_of_class(out.features(), out.labels(), 1) {
            assert!(segment_distance(&r, base, base) < 0.1);
        }
    }

    #[test]
    fn smote_hundred_to_ten() {
        let ds = two_class(100, 10, 5);
        let out = smote_oversample(&ds, &SmoteOptions::new(5), 8).unwrap();
        assert_eq!(class_distribution(&out).counts, vec![100, 100]);
        assert_eq!(out.subset(&(0..110).collect::<Vec<_>>()), ds);
        let originals = rows_of_class(ds.features(), ds.labels(), 1);
        for r in out.features().iter_rows().skip(110) {
            let best = originals
                .iter()
                .flat_map(|a| originals.iter().map(move |b| segment_distance(r, a, b)))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
    }

    #[test]
    fn undersample_to_minority() {
        let ds = two_class(100, 10, 6);
        let out = random_undersample(&ds, 1.0, 3).unwrap();
        assert_eq!(class_distribution(&out).counts, vec![10, 10]);
        assert_eq!(out, random_undersample(&ds, 1.0, 3).unwrap());
        let half = random_undersample(&ds, 0.5, 3).unwrap();
        assert_eq!(class_distribution(&half).counts, vec![20, 10]);
        let bal = two_class(7, 7, 1);
        assert_eq!(random_undersample(&bal, 1.0, 0).unwrap(), bal);
    }

    #[test]
    fn weighting_strategy_ignores_absent_classes() {
        let ds = LabeledDataset::with_default_names(
            Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
            vec![0, 0, 0, 2],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let b = apply_balancing(&ds, &BalancingStrategy::new(BalancingKind::Weighting), 0).unwrap();
        let w = b.weights.unwrap();
        assert!((w.get(0) - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(w.get(1), 1.0);
        assert!((w.get(2) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn frequency_weighted_mean_is_one(counts in prop::collection::vec(1usize..500, 2..12)) {
            let dist = ClassDistribution::from_counts(counts.clone());
            let w = class_weights(&dist).unwrap();
            let s: f64 = counts.iter().zip(w.as_slice()).map(|(&n, &wi)| n as f64 / dist.total as f64 * wi).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(w.as_slice().iter().all(|&x| x > 0.0));
        }

        #[test]
        fn unit_weights_match_plain_cross_entropy(raw in prop::collection::vec(0.001f64..1.0, 2..8), pick in 0usize..8) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let y = pick % p.len();
            let l = weighted_cross_entropy(&ClassWeights::uniform(p.len()), y, &p).unwrap();
            prop_assert!((l + p[y].ln()).abs() <= 1e-12);
        }

        #[test]
        fn resampling_keeps_schema(n0 in 3usize..40, n1 in 2usize..10, seed in any::<u64>()) {
            let ds = two_class(n0, n1, seed);
            for kind in BalancingKind::ALL {
                let out = apply_balancing(&ds, &BalancingStrategy::new(kind), seed).unwrap();
                prop_assert_eq!(out.data.n_features(), 2);
                prop_assert_eq!(out.data.class_names(), ds.class_names());
            }
        }
    }
}
