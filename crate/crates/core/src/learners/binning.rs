//! Feature discretisation shared by the tree learners.
//!
//! Splits are searched over bin boundaries but stored as real thresholds, so
//! fitted models predict on raw feature values.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    /// Per feature, increasing thresholds; bin `b` holds values in
    /// `(t[b-1], t[b]]`.
    thresholds: Vec<Vec<f64>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

impl FeatureBins {
    /// With at most `max_bins` distinct values a feature gets one bin per
    /// value, which makes split search exact; otherwise cut points sit at
    /// evenly spaced sample quantiles.
    pub fn fit(x: &Matrix, rows: &[usize], max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, u16::MAX as usize);
        let thresholds = (0..x.cols())
            .map(|j| {
                let mut v: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                if distinct.len() <= max_bins {
                    distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect()
                } else {
                    let n = v.len();
                    let mut t: Vec<f64> = Vec::with_capacity(max_bins - 1);
                    for k in 1..max_bins {
                        let idx = k * n / max_bins;
                        if idx == 0 || idx >= n || v[idx - 1] == v[idx] {
                            continue;
                        }
                        let cut = midpoint(v[idx - 1], v[idx]);
                        if t.last().map_or(true, |&last| cut > last) {
                            t.push(cut);
                        }
                    }
                    t
                }
            })
            .collect();
        FeatureBins { thresholds }
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn threshold(&self, feature: usize, bin: usize) -> f64 {
        self.thresholds[feature][bin]
    }

    #[inline]
    pub fn bin(&self, feature: usize, value: f64) -> u16 {
        self.thresholds[feature].partition_point(|&t| t < value) as u16
    }

    /// Column-major bin codes of every row of `x`.
    pub fn transform(&self, x: &Matrix) -> BinnedColumns {
        let columns = (0..x.cols())
            .map(|j| (0..x.rows()).map(|i| self.bin(j, x.get(i, j))).collect())
            .collect();
        BinnedColumns { columns }
    }
}

#[derive(Debug, Clone)]
pub struct BinnedColumns {
    columns: Vec<Vec<u16>>,
}

impl BinnedColumns {
    #[inline]
    pub fn column(&self, j: usize) -> &[u16] {
        &self.columns[j]
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}
