//! Random-forest regression surrogate and the expected-improvement
//! acquisition.

use rand::seq::index::sample;
use rand::Rng as _;

use crate::rng::{seeded_indexed, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    /// Share of input dimensions examined at each node.
    pub feature_fraction: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            n_trees: 10,
            min_samples_split: 3,
            feature_fraction: 5.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        mean: f64,
        var: f64,
    },
}

#[derive(Debug, Clone)]
struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { mean, var } => return (*mean, *var),
            }
        }
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a SurrogateParams,
    rng: &'a mut Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n;
        let var = rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum::<f64>() / n;
        self.nodes.push(Node::Leaf { mean, var });
        self.nodes.len() - 1
    }

    fn grow(&mut self, mut rows: Vec<usize>) -> usize {
        let n = rows.len();
        let first = self.y[rows[0]];
        if n < self.params.min_samples_split || rows.iter().all(|&r| self.y[r] == first) {
            return self.leaf(&rows);
        }
        let d = self.x[0].len();
        let m = ((self.params.feature_fraction * d as f64).ceil() as usize).clamp(1, d);
        let mut features = sample(self.rng, d, m).into_vec();
        features.sort_unstable();

        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let parent_sse = total_sq - total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &features {
            rows.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut s, mut sq) = (0.0, 0.0);
            for i in 0..n - 1 {
                let yi = self.y[rows[i]];
                s += yi;
                sq += yi * yi;
                let (v, next) = (self.x[rows[i]][f], self.x[rows[i + 1]][f]);
                if v == next {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let sse = (sq - s * s / nl) + (total_sq - sq - (total - s).powi(2) / nr);
                if best.map_or(true, |b| sse < b.0) {
                    best = Some((sse, f, v + (next - v) / 2.0));
                }
            }
        }
        match best {
            Some((sse, feature, threshold)) if parent_sse - sse > 1e-12 => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
                let at = self.nodes.len();
                self.nodes.push(Node::Leaf { mean: 0.0, var: 0.0 });
                let left = self.grow(l);
                let right = self.grow(r);
                self.nodes[at] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                at
            }
            _ => self.leaf(&rows),
        }
    }
}

/// Bagged regression trees whose spread across trees and within leaves
/// gives a predictive variance.
#[derive(Debug, Clone)]
pub struct RandomForestSurrogate {
    trees: Vec<RegressionTree>,
}

impl RandomForestSurrogate {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &SurrogateParams, seed: u64) -> Self {
        assert!(!x.is_empty() && x.len() == y.len(), "surrogate needs matching, nonempty data");
        let n = x.len();
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = seeded_indexed(seed, "surrogate-tree", t as u64);
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut g = Grower {
                    x,
                    y,
                    params,
                    rng: &mut rng,
                    nodes: Vec::new(),
                };
                g.grow(rows);
                RegressionTree { nodes: g.nodes }
            })
            .collect();
        RandomForestSurrogate { trees }
    }

    /// Predictive mean and variance by the law of total variance over trees.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let m = self.trees.len() as f64;
        let (mut mean, mut second) = (0.0, 0.0);
        for t in &self.trees {
            let (mu, var) = t.predict(x);
            mean += mu;
            second += var + mu * mu;
        }
        mean /= m;
        (mean, (second / m - mean * mean).max(0.0))
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best_loss` of a Gaussian prediction.
pub fn expected_improvement(mu: f64, sigma: f64, best_loss: f64) -> f64 {
    let gap = best_loss - mu;
    if sigma <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * std_normal_cdf(z) + sigma * std_normal_pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn ei_closed_forms() {
        assert_eq!(expected_improvement(0.3, 0.0, 0.3), 0.0);
        assert_eq!(expected_improvement(-0.7, 0.0, 0.3), 1.0);
        let v = expected_improvement(0.3, 1.0, 0.3);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn ei_grows_with_sigma_when_not_better() {
        for mu_gap in [0.0, 0.1, 1.0] {
            let mut last = 0.0;
            for i in 0..100 {
                let v = expected_improvement(0.5 + mu_gap, i as f64 * 0.05, 0.5);
                assert!(v >= last);
                last = v;
            }
        }
    }

    #[test]
    fn forest_fits_a_step() {
        let mut rng = seeded(2, "t");
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] < 0.5 { 0.1 } else { 0.9 }).collect();
        let f = RandomForestSurrogate::fit(&x, &y, &SurrogateParams::default(), 4);
        let (lo, _) = f.predict(&[0.2, 0.5]);
        let (hi, _) = f.predict(&[0.8, 0.5]);
        assert!(lo < 0.2 && hi > 0.8, "{lo} {hi}");
        let (_, var_edge) = f.predict(&[0.5, 0.5]);
        assert!(var_edge >= 0.0);
    }
}
