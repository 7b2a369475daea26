use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Fold, LabeledDataset};
use crate::error::Result;
use crate::imbalance::{apply_balancing, BalancingStrategy};
use crate::learners::{balancing_of, fit};
use crate::report::LossMetric;
use crate::rng::derive_seed;
use crate::space::Configuration;

/// Loss recorded for evaluations that could not be completed.
pub const FAILED_LOSS: f64 = 1.0;

pub const DEFAULT_DISCARD_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Complete,
    Discarded,
    Failed,
}

/// One evaluated configuration. Discarded records keep the folds observed
/// before they were cut; failed records keep the folds that succeeded and
/// report [`FAILED_LOSS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub config: Configuration,
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
    pub status: EvalStatus,
    pub wall_time_s: f64,
}

impl EvaluationRecord {
    pub fn is_complete(&self) -> bool {
        self.status == EvalStatus::Complete
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// True when the folds observed so far already trail the incumbent by at
/// least `margin`. Without an incumbent nothing is discarded.
pub fn early_discard(observed: &[f64], incumbent_loss: Option<f64>, margin: f64) -> bool {
    match incumbent_loss {
        Some(best) if !observed.is_empty() => mean(observed) >= best + margin,
        _ => false,
    }
}

/// A loss evaluated fold by fold.
pub trait Objective {
    fn n_folds(&self) -> usize;
    fn fold_loss(&self, cfg: &Configuration, fold: usize) -> Result<f64>;
}

/// Balances the training part, fits, and scores on the untouched
/// validation part.
pub fn fold_loss(
    cfg: &Configuration,
    train: &LabeledDataset,
    valid: &LabeledDataset,
    metric: LossMetric,
    seed: u64,
) -> Result<f64> {
    let strategy = BalancingStrategy::new(balancing_of(cfg));
    let balanced = apply_balancing(train, &strategy, derive_seed(seed, "balance", 0))?;
    let model = fit(
        cfg.algorithm,
        cfg,
        &balanced.data,
        balanced.weights.as_ref(),
        derive_seed(seed, "fit", 0),
    )?;
    let proba = model.predict_proba(valid.features())?;
    metric.loss(valid.labels(), &proba)
}

/// Cross-validated loss of a learner configuration on fixed folds.
pub struct CvObjective {
    pub train: Vec<LabeledDataset>,
    pub valid: Vec<LabeledDataset>,
    pub metric: LossMetric,
    pub seed: u64,
}

impl CvObjective {
    pub fn new(ds: &LabeledDataset, folds: &[Fold], metric: LossMetric, seed: u64) -> Self {
        CvObjective {
            train: folds.iter().map(|f| ds.subset(&f.train)).collect(),
            valid: folds.iter().map(|f| ds.subset(&f.valid)).collect(),
            metric,
            seed,
        }
    }
}

impl Objective for CvObjective {
    fn n_folds(&self) -> usize {
        self.train.len()
    }

    fn fold_loss(&self, cfg: &Configuration, fold: usize) -> Result<f64> {
        fold_loss(
            cfg,
            &self.train[fold],
            &self.valid[fold],
            self.metric,
            derive_seed(self.seed, "fold", fold as u64),
        )
    }
}

/// Options controlling one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalLimits {
    pub incumbent_loss: Option<f64>,
    pub margin: f64,
    pub time_limit_s: Option<f64>,
}

/// Runs the folds in order, stopping early on discard, failure or when the
/// time limit has passed at a fold boundary.
pub fn evaluate(objective: &dyn Objective, cfg: &Configuration, limits: EvalLimits) -> EvaluationRecord {
    let started = Instant::now();
    let k = objective.n_folds();
    let mut losses = Vec::with_capacity(k);
    let mut status = EvalStatus::Complete;
    for fold in 0..k {
        match objective.fold_loss(cfg, fold) {
            Ok(l) if l.is_finite() => losses.push(l),
            _ => {
                status = EvalStatus::Failed;
                break;
            }
        }
        if fold + 1 < k {
            if early_discard(&losses, limits.incumbent_loss, limits.margin) {
                status = EvalStatus::Discarded;
                break;
            }
            if limits.time_limit_s.is_some_and(|t| started.elapsed().as_secs_f64() > t) {
                status = EvalStatus::Failed;
                break;
            }
        }
    }
    let mean_loss = match status {
        EvalStatus::Failed => FAILED_LOSS,
        _ => mean(&losses),
    };
    EvaluationRecord {
        config: cfg.clone(),
        fold_losses: losses,
        mean_loss,
        status,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

/// Full cross-validation of `cfg` without discarding.
pub fn cash_objective(
    cfg: &Configuration,
    ds: &LabeledDataset,
    folds: &[Fold],
    metric: LossMetric,
    seed: u64,
) -> EvaluationRecord {
    let objective = CvObjective::new(ds, folds, metric, seed);
    evaluate(
        &objective,
        cfg,
        EvalLimits {
            incumbent_loss: None,
            margin: DEFAULT_DISCARD_MARGIN,
            time_limit_s: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discard_rule() {
        assert!(early_discard(&[0.5], Some(0.10), 0.05));
        assert!(!early_discard(&[0.12], Some(0.10), 0.05));
        assert!(!early_discard(&[0.9], None, 0.05));
        assert!(early_discard(&[0.1, 0.2], Some(0.10), 0.05));
    }

    struct Fixed(Vec<f64>);

    impl Objective for Fixed {
        fn n_folds(&self) -> usize {
            self.0.len()
        }
        fn fold_loss(&self, _: &Configuration, fold: usize) -> Result<f64> {
            let v = self.0[fold];
            if v < 0.0 {
                Err(crate::Error::DegenerateTraining)
            } else {
                Ok(v)
            }
        }
    }

    fn cfg() -> Configuration {
        crate::learners::default_config(crate::space::AlgorithmId::Knn)
    }

    fn limits(inc: Option<f64>) -> EvalLimits {
        EvalLimits {
            incumbent_loss: inc,
            margin: DEFAULT_DISCARD_MARGIN,
            time_limit_s: None,
        }
    }

    #[test]
    fn mean_over_folds() {
        let r = evaluate(&Fixed(vec![0.1, 0.3]), &cfg(), limits(None));
        assert_eq!(r.status, EvalStatus::Complete);
        assert!((r.mean_loss - 0.2).abs() < 1e-15);
    }

    #[test]
    fn discards_keep_partial_folds() {
        let r = evaluate(&Fixed(vec![0.6, 0.1, 0.1]), &cfg(), limits(Some(0.1)));
        assert_eq!(r.status, EvalStatus::Discarded);
        assert_eq!(r.fold_losses, vec![0.6]);
        assert_eq!(r.mean_loss, 0.6);
    }

    #[test]
    fn failures_score_worst_case() {
        let r = evaluate(&Fixed(vec![0.2, -1.0, 0.1]), &cfg(), limits(None));
        assert_eq!(r.status, EvalStatus::Failed);
        assert_eq!(r.mean_loss, FAILED_LOSS);
        assert_eq!(r.fold_losses, vec![0.2]);
    }
}
