//! Weighted classification trees grown greedily on binned features.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::binning::{BinnedColumns, FeatureBins};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gini" => Some(Criterion::Gini),
            "entropy" => Some(Criterion::Entropy),
            _ => None,
        }
    }

    /// Node impurity scaled by the node weight, so child scores add up.
    #[inline]
    pub fn weighted_impurity(&self, class_weight: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => total - class_weight.iter().map(|w| w * w).sum::<f64>() / total,
            Criterion::Entropy => class_weight
                .iter()
                .filter(|&&w| w > 0.0)
                .map(|&w| -w * (w / total).ln())
                .sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        proba: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    nodes: Vec<TreeNode>,
}

impl ClassificationTree {
    pub fn predict_row(&self, x: &[f64]) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                TreeNode::Leaf { proba } => return proba,
            }
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Training view over binned data. `weight[i]` is the full per-row weight
/// (class weight times bootstrap multiplicity) and `count[i]` the
/// multiplicity; rows with zero count are ignored.
pub(crate) struct TreeData<'a> {
    pub bins: &'a FeatureBins,
    pub binned: &'a BinnedColumns,
    pub labels: &'a [usize],
    pub weight: &'a [f64],
    pub count: &'a [u32],
    pub n_classes: usize,
}

struct Best {
    score: f64,
    feature: usize,
    bin: usize,
}

struct Builder<'a, 'r> {
    data: &'a TreeData<'a>,
    params: &'a TreeParams,
    rng: Option<&'r mut Rng>,
    nodes: Vec<TreeNode>,
    hist_w: Vec<f64>,
    hist_n: Vec<u32>,
}

impl Builder<'_, '_> {
    fn leaf(&mut self, class_w: &[f64], total: f64) -> u32 {
        let proba = if total > 0.0 {
            class_w.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / class_w.len() as f64; class_w.len()]
        };
        self.nodes.push(TreeNode::Leaf { proba });
        (self.nodes.len() - 1) as u32
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.binned.n_features();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn find_split(&mut self, rows: &[u32], total_n: u32) -> Option<Best> {
        let c = self.data.n_classes;
        let min_leaf = self.params.min_samples_leaf.max(1) as u32;
        let mut best: Option<Best> = None;
        let mut left_w = vec![0.0; c];
        let mut right_w = vec![0.0; c];
        let mut class_total = vec![0.0; c];
        for &r in rows {
            class_total[self.data.labels[r as usize]] += self.data.weight[r as usize];
        }
        for f in self.candidate_features() {
            let col = self.data.binned.column(f);
            let (mut lo, mut hi) = (u16::MAX, 0u16);
            for &r in rows {
                let b = col[r as usize];
                lo = lo.min(b);
                hi = hi.max(b);
            }
            if lo >= hi {
                continue;
            }
            let span = (hi - lo) as usize + 1;
            if self.hist_n.len() < span {
                self.hist_n.resize(span, 0);
                self.hist_w.resize(span * c, 0.0);
            }
            self.hist_n[..span].iter_mut().for_each(|v| *v = 0);
            self.hist_w[..span * c].iter_mut().for_each(|v| *v = 0.0);
            for &r in rows {
                let r = r as usize;
                let b = (col[r] - lo) as usize;
                self.hist_n[b] += self.data.count[r];
                self.hist_w[b * c + self.data.labels[r]] += self.data.weight[r];
            }
            left_w.iter_mut().for_each(|v| *v = 0.0);
            let mut left_n = 0u32;
            // the last bin can never be a split point: right side would be empty
            for b in 0..span - 1 {
                if self.hist_n[b] == 0 {
                    continue;
                }
                left_n += self.hist_n[b];
                for k in 0..c {
                    left_w[k] += self.hist_w[b * c + k];
                }
                let right_n = total_n - left_n;
                if left_n < min_leaf {
                    continue;
                }
                if right_n < min_leaf {
                    break;
                }
                let wl: f64 = left_w.iter().sum();
                for k in 0..c {
                    right_w[k] = class_total[k] - left_w[k];
                }
                let wr: f64 = right_w.iter().map(|v| v.max(0.0)).sum();
                let score = self.params.criterion.weighted_impurity(&left_w, wl)
                    + self.params.criterion.weighted_impurity(&right_w, wr);
                if best.as_ref().map_or(true, |cur| score < cur.score) {
                    best = Some(Best {
                        score,
                        feature: f,
                        bin: lo as usize + b,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> u32 {
        let c = self.data.n_classes;
        let mut class_w = vec![0.0; c];
        let mut total_n = 0u32;
        for &r in &rows {
            class_w[self.data.labels[r as usize]] += self.data.weight[r as usize];
            total_n += self.data.count[r as usize];
        }
        let total: f64 = class_w.iter().sum();
        let pure = class_w.iter().filter(|&&w| w > 0.0).count() <= 1;
        let min_leaf = self.params.min_samples_leaf.max(1) as u32;
        if pure || depth >= self.params.max_depth || total_n < 2 * min_leaf {
            return self.leaf(&class_w, total);
        }
        let parent = self.params.criterion.weighted_impurity(&class_w, total);
        let best = match self.find_split(&rows, total_n) {
            Some(b) if parent - b.score > 1e-12 * total.max(1.0) => b,
            _ => return self.leaf(&class_w, total),
        };
        let col = self.data.binned.column(best.feature);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.into_iter().partition(|&r| (col[r as usize] as usize) <= best.bin);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { proba: Vec::new() });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: best.feature as u32,
            threshold: self.data.bins.threshold(best.feature, best.bin),
            left,
            right,
        };
        at as u32
    }
}

pub(crate) fn grow_tree(data: &TreeData<'_>, params: &TreeParams, rng: Option<&mut Rng>) -> ClassificationTree {
    let rows: Vec<u32> = (0..data.labels.len() as u32)
        .filter(|&r| data.count[r as usize] > 0)
        .collect();
    let mut builder = Builder {
        data,
        params,
        rng,
        nodes: Vec::new(),
        hist_w: Vec::new(),
        hist_n: Vec::new(),
    };
    builder.grow(rows, 0);
    ClassificationTree { nodes: builder.nodes }
}
