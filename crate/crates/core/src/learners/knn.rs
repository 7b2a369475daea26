use serde::{Deserialize, Serialize};

use crate::data::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euclidean" => Some(Metric::Euclidean),
            "manhattan" => Some(Metric::Manhattan),
            _ => None,
        }
    }

    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

impl Weighting {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Weighting::Uniform),
            "inverse-distance" | "inverse_distance" => Some(Weighting::InverseDistance),
            _ => None,
        }
    }
}

/// Lazy learner: keeps the training rows and votes at query time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub(crate) k: usize,
    pub(crate) weighting: Weighting,
    pub(crate) metric: Metric,
    pub(crate) n_classes: usize,
    pub(crate) train: Matrix,
    pub(crate) labels: Vec<u32>,
    /// Per-class vote multipliers when class weighting is on.
    pub(crate) vote_weights: Option<Vec<f64>>,
}

impl KnnModel {
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        k: usize,
        weighting: Weighting,
        metric: Metric,
        vote_weights: Option<Vec<f64>>,
    ) -> Self {
        KnnModel {
            k: k.max(1),
            weighting,
            metric,
            n_classes,
            train: x.clone(),
            labels: labels.iter().map(|&l| l as u32).collect(),
            vote_weights,
        }
    }

    /// Indices and distances of the `k` nearest training rows, ordered by
    /// distance and then by index.
    pub fn neighbors(&self, q: &[f64]) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = self
            .train
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (self.metric.distance(q, r), i))
            .collect();
        let k = self.k.min(all.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        all
    }

    pub fn predict_row(&self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let nn = self.neighbors(q);
        let exact = nn.iter().any(|&(d, _)| d == 0.0);
        for &(d, i) in &nn {
            let label = self.labels[i] as usize;
            let base = match self.weighting {
                Weighting::Uniform => 1.0,
                // exact matches take every vote when present
                Weighting::InverseDistance if exact => {
                    if d == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Weighting::InverseDistance => 1.0 / d,
            };
            let scale = self.vote_weights.as_ref().map_or(1.0, |w| w[label]);
            out[label] += base * scale;
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 && total.is_finite() {
            out.iter_mut().for_each(|v| *v /= total);
        } else {
            let u = 1.0 / self.n_classes as f64;
            out.iter_mut().for_each(|v| *v = u);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    /// All-pairs scan with a full sort, no partial selection.
    fn brute_force(x: &Matrix, y: &[usize], c: usize, k: usize, metric: Metric, q: &[f64]) -> Vec<f64> {
        let mut d: Vec<(f64, usize)> = (0..x.rows())
            .map(|i| {
                let s: f64 = match metric {
                    Metric::Euclidean => (0..x.cols()).map(|j| (x.get(i, j) - q[j]).powi(2)).sum::<f64>().sqrt(),
                    Metric::Manhattan => (0..x.cols()).map(|j| (x.get(i, j) - q[j]).abs()).sum(),
                };
                (s, i)
            })
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut votes = vec![0.0; c];
        for &(_, i) in d.iter().take(k) {
            votes[y[i]] += 1.0;
        }
        let t: f64 = votes.iter().sum();
        votes.iter().map(|v| v / t).collect()
    }

    #[test]
    fn matches_brute_force_on_small_sets() {
        let mut rng = seeded(21, "knn");
        for trial in 0..200 {
            let n = rng.gen_range(2..=30);
            let d = rng.gen_range(1..=3);
            let c = rng.gen_range(2..=4);
            // a coarse grid makes distance ties common
            let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(0..5) as f64).collect()).unwrap();
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let k = rng.gen_range(1..=n);
            let metric = if trial % 2 == 0 { Metric::Euclidean } else { Metric::Manhattan };
            let m = KnnModel::fit(&x, &y, c, k, Weighting::Uniform, metric, None);
            let mut out = vec![0.0; c];
            for _ in 0..5 {
                let q: Vec<f64> = (0..d).map(|_| rng.gen_range(0..5) as f64 + 0.5 * rng.gen_range(0..2) as f64).collect();
                m.predict_row(&q, &mut out);
                assert_eq!(out, brute_force(&x, &y, c, k, metric, &q), "trial {trial}");
            }
        }
    }

    #[test]
    fn inverse_distance_prefers_exact_match() {
        let x = Matrix::from_vec(3, 1, vec![0.0, 1.0, 1.1]).unwrap();
        let m = KnnModel::fit(&x, &[0, 1, 1], 2, 3, Weighting::InverseDistance, Metric::Euclidean, None);
        let mut out = vec![0.0; 2];
        m.predict_row(&[0.0], &mut out);
        assert_eq!(out, vec![1.0, 0.0]);
        m.predict_row(&[0.5], &mut out);
        assert!(out[1] > out[0]);
    }

    #[test]
    fn vote_weights_scale_classes() {
        let x = Matrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let m = KnnModel::fit(&x, &[0, 0, 1], 2, 3, Weighting::Uniform, Metric::Euclidean, Some(vec![0.5, 2.0]));
        let mut out = vec![0.0; 2];
        m.predict_row(&[1.0], &mut out);
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-12);
    }
}
