//! Histogram gradient boosting with one additive tree per class and round.

use serde::{Deserialize, Serialize};

use super::binning::FeatureBins;
use crate::data::Matrix;

const MIN_HESSIAN: f64 = 1e-3;
const PROBA_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HgbParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub max_leaf_nodes: usize,
    pub l2: f64,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    nodes: Vec<RegNode>,
}

impl RegTree {
    fn constant(value: f64) -> Self {
        RegTree {
            nodes: vec![RegNode::Leaf { value }],
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
                RegNode::Leaf { value } => return *value,
            }
        }
    }

    #[cfg(test)]
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RegNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgbModel {
    pub(crate) n_classes: usize,
    pub(crate) baseline: Vec<f64>,
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub(crate) rounds: Vec<Vec<RegTree>>,
}

#[derive(Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

/// Bin codes stored feature-major, `codes[f * n + r]`.
struct Layout<'a> {
    codes: &'a [u8],
    n: usize,
    d: usize,
    offsets: Vec<usize>,
    total_bins: usize,
}

#[derive(Clone, Copy)]
struct Cand {
    gain: f64,
    feature: usize,
    bin: usize,
}

/// A leaf owns the rows `idx[start..end]` of the shared index buffer.
struct Leaf {
    node: usize,
    start: usize,
    end: usize,
    hist: Vec<Bin>,
    g: f64,
    h: f64,
    best: Option<Cand>,
}

#[derive(Default)]
struct Scratch {
    idx: Vec<u32>,
    spill: Vec<u32>,
    gh: Vec<(f64, f64)>,
    pool: Vec<Vec<Bin>>,
}

impl Scratch {
    fn take_hist(&mut self, len: usize) -> Vec<Bin> {
        match self.pool.pop() {
            Some(mut v) => {
                v.clear();
                v.resize(len, Bin::default());
                v
            }
            None => vec![Bin::default(); len],
        }
    }
}

impl Layout<'_> {
    fn histogram(&self, rows: &[u32], g: &[f64], h: &[f64], gh: &mut Vec<(f64, f64)>, hist: &mut [Bin]) {
        gh.clear();
        gh.extend(rows.iter().map(|&r| (g[r as usize], h[r as usize])));
        for f in 0..self.d {
            let col = &self.codes[f * self.n..(f + 1) * self.n];
            let seg = &mut hist[self.offsets[f]..self.offsets[f + 1]];
            for (&r, &(gr, hr)) in rows.iter().zip(gh.iter()) {
                let b = &mut seg[col[r as usize] as usize];
                b.g += gr;
                b.h += hr;
                b.n += 1;
            }
        }
    }

    fn best_split(&self, hist: &[Bin], g: f64, h: f64, n: u32, params: &HgbParams) -> Option<Cand> {
        let min_leaf = params.min_samples_leaf.max(1) as u32;
        if n < 2 * min_leaf {
            return None;
        }
        let parent = g * g / (h + params.l2);
        let mut best: Option<Cand> = None;
        for f in 0..self.d {
            let bins = &hist[self.offsets[f]..self.offsets[f + 1]];
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
            for (b, bin) in bins.iter().enumerate().take(bins.len().saturating_sub(1)) {
                if bin.n == 0 {
                    continue;
                }
                gl += bin.g;
                hl += bin.h;
                nl += bin.n;
                if nl < min_leaf || hl < MIN_HESSIAN {
                    continue;
                }
                let nr = n - nl;
                if nr < min_leaf {
                    break;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hr < MIN_HESSIAN {
                    continue;
                }
                let gain = gl * gl / (hl + params.l2) + gr * gr / (hr + params.l2) - parent;
                if gain > 1e-12 && best.map_or(true, |c| gain > c.gain) {
                    best = Some(Cand { gain, feature: f, bin: b });
                }
            }
        }
        best
    }

    fn leaf(&self, node: usize, start: usize, end: usize, hist: Vec<Bin>, params: &HgbParams, scratch: &mut Scratch) -> Leaf {
        let (g, h, n) = hist[self.offsets[0]..self.offsets[1]]
            .iter()
            .fold((0.0, 0.0, 0u32), |(g, h, n), b| (g + b.g, h + b.h, n + b.n));
        let best = self.best_split(&hist, g, h, n, params);
        let hist = if best.is_some() {
            hist
        } else {
            scratch.pool.push(hist);
            Vec::new()
        };
        Leaf {
            node,
            start,
            end,
            hist,
            g,
            h,
            best,
        }
    }

    /// Stable in-place partition of `idx[start..end]`; returns the split point.
    fn partition(&self, scratch: &mut Scratch, start: usize, end: usize, cand: Cand) -> usize {
        let col = &self.codes[cand.feature * self.n..(cand.feature + 1) * self.n];
        scratch.spill.clear();
        let mut w = start;
        for i in start..end {
            let r = scratch.idx[i];
            if col[r as usize] as usize <= cand.bin {
                scratch.idx[w] = r;
                w += 1;
            } else {
                scratch.spill.push(r);
            }
        }
        scratch.idx[w..end].copy_from_slice(&scratch.spill);
        w
    }

    /// Grows one tree best-first, reporting every row's leaf value through
    /// `apply`.
    fn grow(
        &self,
        bins: &FeatureBins,
        g: &[f64],
        h: &[f64],
        params: &HgbParams,
        scratch: &mut Scratch,
        mut apply: impl FnMut(usize, f64),
    ) -> RegTree {
        let n = self.n;
        scratch.idx.clear();
        scratch.idx.extend(0..n as u32);
        let mut hist = scratch.take_hist(self.total_bins);
        self.histogram(&scratch.idx, g, h, &mut scratch.gh, &mut hist);
        let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
        let root = self.leaf(0, 0, n, hist, params, scratch);
        let mut leaves = vec![root];
        while leaves.len() < params.max_leaf_nodes.max(2) {
            let pick = leaves
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.best.map(|c| (i, c.gain)))
                .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                    Some((_, g0)) if g0 >= gain => acc,
                    _ => Some((i, gain)),
                });
            let Some((i, _)) = pick else { break };
            let parent = leaves.swap_remove(i);
            let cand = parent.best.expect("picked leaves have a split");
            let mid = self.partition(scratch, parent.start, parent.end, cand);
            let left_node = nodes.len();
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes[parent.node] = RegNode::Split {
                feature: cand.feature as u32,
                threshold: bins.threshold(cand.feature, cand.bin),
                left: left_node as u32,
                right: left_node as u32 + 1,
            };
            let left_small = mid - parent.start <= parent.end - mid;
            let small = if left_small { parent.start..mid } else { mid..parent.end };
            let mut small_hist = scratch.take_hist(self.total_bins);
            {
                let Scratch { idx, gh, .. } = scratch;
                self.histogram(&idx[small], g, h, gh, &mut small_hist);
            }
            let mut big_hist = parent.hist;
            for (b, s) in big_hist.iter_mut().zip(&small_hist) {
                b.g -= s.g;
                b.h -= s.h;
                b.n -= s.n;
            }
            let (left_hist, right_hist) = if left_small {
                (small_hist, big_hist)
            } else {
                (big_hist, small_hist)
            };
            let left = self.leaf(left_node, parent.start, mid, left_hist, params, scratch);
            let right = self.leaf(left_node + 1, mid, parent.end, right_hist, params, scratch);
            leaves.push(left);
            leaves.push(right);
        }
        for leaf in leaves {
            let value = -params.learning_rate * leaf.g / (leaf.h + params.l2);
            nodes[leaf.node] = RegNode::Leaf { value };
            for &r in &scratch.idx[leaf.start..leaf.end] {
                apply(r as usize, value);
            }
            if leaf.hist.capacity() > 0 {
                scratch.pool.push(leaf.hist);
            }
        }
        RegTree { nodes }
    }
}

fn softmax_into(raw: &[f64], out: &mut [f64]) {
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, r) in out.iter_mut().zip(raw) {
        *o = (r - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

impl HgbModel {
    pub fn fit(x: &Matrix, labels: &[usize], row_weight: &[f64], n_classes: usize, params: &HgbParams) -> Self {
        let n = x.rows();
        let d = x.cols();
        let all: Vec<usize> = (0..n).collect();
        let bins = FeatureBins::fit(x, &all, params.max_bins.clamp(2, 255));
        let mut codes = vec![0u8; n * d];
        for j in 0..d {
            for i in 0..n {
                codes[j * n + i] = bins.bin(j, x.get(i, j)) as u8;
            }
        }
        let mut offsets = vec![0usize; d + 1];
        for j in 0..d {
            offsets[j + 1] = offsets[j] + bins.n_bins(j);
        }
        let layout = Layout {
            codes: &codes,
            n,
            d,
            total_bins: offsets[d],
            offsets,
        };

        let mut class_w = vec![0.0; n_classes];
        for (&y, &w) in labels.iter().zip(row_weight) {
            class_w[y] += w;
        }
        let total_w: f64 = class_w.iter().sum();
        let baseline: Vec<f64> = class_w.iter().map(|w| (w / total_w).max(1e-12).ln()).collect();
        let present: Vec<bool> = class_w.iter().map(|&w| w > 0.0).collect();

        let mut raw: Vec<f64> = (0..n).flat_map(|_| baseline.iter().copied()).collect();
        let mut proba = vec![0.0; n * n_classes];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut scratch = Scratch::default();
        let mut rounds = Vec::with_capacity(params.n_rounds);
        for _ in 0..params.n_rounds {
            for i in 0..n {
                let span = i * n_classes..(i + 1) * n_classes;
                softmax_into(&raw[span.clone()], &mut proba[span]);
            }
            let mut trees = Vec::with_capacity(n_classes);
            for k in 0..n_classes {
                if !present[k] {
                    trees.push(RegTree::constant(0.0));
                    continue;
                }
                for i in 0..n {
                    let p = proba[i * n_classes + k];
                    let y = if labels[i] == k { 1.0 } else { 0.0 };
                    g[i] = row_weight[i] * (p - y);
                    h[i] = row_weight[i] * (p * (1.0 - p)).max(1e-16);
                }
                let tree = layout.grow(&bins, &g, &h, params, &mut scratch, |r, v| raw[r * n_classes + k] += v);
                trees.push(tree);
            }
            rounds.push(trees);
        }
        HgbModel {
            n_classes,
            baseline,
            rounds,
        }
    }

    pub fn raw_score(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.baseline);
        for trees in &self.rounds {
            for (o, t) in out.iter_mut().zip(trees) {
                *o += t.predict_row(x);
            }
        }
    }

    pub fn predict_row(&self, x: &[f64], out: &mut [f64]) {
        let mut raw = vec![0.0; self.n_classes];
        self.raw_score(x, &mut raw);
        softmax_into(&raw, out);
        out.iter_mut().for_each(|p| *p = p.max(PROBA_FLOOR));
        let s: f64 = out.iter().sum();
        out.iter_mut().for_each(|p| *p /= s);
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn params() -> HgbParams {
        HgbParams {
            n_rounds: 40,
            learning_rate: 0.2,
            max_bins: 64,
            max_leaf_nodes: 8,
            l2: 1e-3,
            min_samples_leaf: 5,
        }
    }

    #[test]
    fn learns_three_bands() {
        let mut rng = seeded(8, "hgb");
        let n = 300;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let y: Vec<usize> = xs.iter().map(|&v| v as usize).collect();
        let x = Matrix::from_vec(n, 1, xs.clone()).unwrap();
        let m = HgbModel::fit(&x, &y, &vec![1.0; n], 3, &params());
        let mut out = vec![0.0; 3];
        let mut correct = 0;
        for i in 0..n {
            m.predict_row(x.row(i), &mut out);
            assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let pred = (0..3).max_by(|&a, &b| out[a].total_cmp(&out[b]).then(b.cmp(&a))).unwrap();
            correct += (pred == y[i]) as usize;
        }
        assert!(correct >= 290, "{correct}");
    }

    #[test]
    fn absent_class_stays_improbable() {
        let x = Matrix::from_vec(20, 1, (0..20).map(|i| i as f64).collect()).unwrap();
        let y: Vec<usize> = (0..20).map(|i| (i >= 10) as usize).collect();
        let m = HgbModel::fit(&x, &y, &vec![1.0; 20], 3, &params());
        let mut out = vec![0.0; 3];
        m.predict_row(&[3.0], &mut out);
        assert!(out[2] < 1e-6 && out[2] > 0.0);
    }

    #[test]
    fn leaf_budget_respected() {
        let mut rng = seeded(9, "hgb");
        let x = Matrix::from_vec(200, 2, (0..400).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y: Vec<usize> = (0..200).map(|_| rng.gen_range(0..2)).collect();
        let m = HgbModel::fit(&x, &y, &vec![1.0; 200], 2, &params());
        assert!(m.rounds.iter().flatten().all(|t| t.n_leaves() <= 8));
    }
}
