use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{class_distribution, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    StratifiedKfold,
    /// All experienced-surgeon data plus half of the novice data for
    /// training; the other novice half for testing. Needs skill metadata,
    /// so it is only produced by the synthetic generator.
    ExpNovProtocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub k_folds: usize,
    pub seed: u64,
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn kfold(k_folds: usize, seed: u64) -> Self {
        SplitSpec {
            k_folds,
            seed,
            mode: SplitMode::StratifiedKfold,
        }
    }
}

/// One cross-validation fold; both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Stratified K-fold assignment.
///
/// Each class is shuffled independently and dealt round-robin over the
/// folds, starting where the previous class stopped so that fold sizes stay
/// within one sample of each other as well. Classes without samples are
/// ignored.
pub fn stratified_kfold(ds: &LabeledDataset, spec: &SplitSpec) -> Result<Vec<Fold>> {
    if spec.mode != SplitMode::StratifiedKfold {
        return Err(Error::Config(
            "the Exp/Nov protocol split needs skill metadata; use synth_generate".into(),
        ));
    }
    let k = spec.k_folds;
    if k < 2 {
        return Err(Error::Config(format!("k_folds must be at least 2, got {k}")));
    }
    let dist = class_distribution(ds);
    for (c, &n) in dist.counts.iter().enumerate() {
        if n > 0 && n < k {
            return Err(Error::Stratification {
                class: ds.class_names()[c].clone(),
                count: n,
                k_folds: k,
            });
        }
    }
    let mut rng = seeded(spec.seed, "stratified_kfold");
    let mut assignment = vec![0usize; ds.n_samples()];
    let mut next = 0usize;
    for mut members in ds.class_indices() {
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) =
                (0..ds.n_samples()).partition(|&i| assignment[i] == f);
            Fold { train, valid }
        })
        .collect())
}

/// Splits off a stratified slice of roughly `fraction` of every class.
/// Returns `(rest, holdout)`, both sorted. Each class keeps at least one
/// sample in `rest`.
pub fn stratified_holdout(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let mut rng = seeded(seed, "stratified_holdout");
    let mut holdout = Vec::new();
    for mut members in ds.class_indices() {
        let n = members.len();
        let take = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        members.shuffle(&mut rng);
        holdout.extend_from_slice(&members[..take]);
    }
    holdout.sort_unstable();
    let mut is_holdout = vec![false; ds.n_samples()];
    for &i in &holdout {
        is_holdout[i] = true;
    }
    let rest = (0..ds.n_samples()).filter(|&i| !is_holdout[i]).collect();
    Ok((rest, holdout))
}
