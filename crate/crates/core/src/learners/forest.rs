use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::FeatureBins;
use super::tree::{grow_tree, ClassificationTree, Criterion, TreeData, TreeParams};
use crate::data::Matrix;
use crate::rng::seeded_indexed;

pub const FOREST_MAX_BINS: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features_fraction: f64,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub(crate) n_classes: usize,
    pub(crate) trees: Vec<ClassificationTree>,
}

impl ForestModel {
    /// Bagged trees, each on its own bootstrap sample, examining a random
    /// feature subset at every node.
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        row_weight: &[f64],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        let n = x.rows();
        let rows: Vec<usize> = (0..n).collect();
        let bins = FeatureBins::fit(x, &rows, FOREST_MAX_BINS);
        let binned = bins.transform(x);
        let d = x.cols();
        let max_features = ((params.max_features_fraction * d as f64).round() as usize).clamp(1, d);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            criterion: Criterion::Gini,
            max_features: Some(max_features),
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeded_indexed(seed, "forest-tree", t as u64);
                let mut count = vec![0u32; n];
                for _ in 0..n {
                    count[rng.gen_range(0..n)] += 1;
                }
                let weight: Vec<f64> = count.iter().zip(row_weight).map(|(&c, &w)| c as f64 * w).collect();
                let data = TreeData {
                    bins: &bins,
                    binned: &binned,
                    labels,
                    weight: &weight,
                    count: &count,
                    n_classes,
                };
                grow_tree(&data, &tree_params, Some(&mut rng))
            })
            .collect();
        ForestModel { n_classes, trees }
    }

    pub fn from_trees(n_classes: usize, trees: Vec<ClassificationTree>) -> Self {
        ForestModel { n_classes, trees }
    }

    pub fn predict_row(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict_row(x)) {
                *o += p;
            }
        }
        let m = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= m);
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
