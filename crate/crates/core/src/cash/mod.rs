//! Joint algorithm selection and hyperparameter optimization.
//!
//! The search is sequential model-based optimization: a random-forest
//! surrogate learns the cross-validated loss over encoded configurations and
//! expected improvement picks the next one, with random proposals
//! interleaved. Configurations trailing the incumbent are cut after any
//! fold.

pub mod config_space;
pub mod objective;
pub mod surrogate;

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{stratified_kfold, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::imbalance::{apply_balancing, BalancingStrategy};
use crate::learners::{balancing_of, fit, TrainedModel};
use crate::report::LossMetric;
use crate::rng::{derive_seed, seeded_indexed};
use crate::space::Configuration;

pub use config_space::{ConfigSpace, INACTIVE};
pub use objective::{
    cash_objective, early_discard, evaluate, fold_loss, CvObjective, EvalLimits, EvalStatus, EvaluationRecord,
    Objective, DEFAULT_DISCARD_MARGIN, FAILED_LOSS,
};
pub use surrogate::{expected_improvement, RandomForestSurrogate, SurrogateParams};

/// Observations gathered before the surrogate is trusted.
pub const MIN_OBSERVATIONS: usize = 8;
/// Every n-th proposal is drawn at random.
pub const RANDOM_INTERLEAVE: usize = 3;
pub const RANDOM_CANDIDATES: usize = 1000;
pub const LOCAL_CANDIDATES: usize = 100;
pub const DEFAULT_TOP_M: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub max_evaluations: usize,
    #[serde(default)]
    pub max_wall_time_s: Option<f64>,
    #[serde(default)]
    pub per_eval_time_limit_s: Option<f64>,
    pub k_folds: usize,
    pub seed: u64,
}

impl BudgetSpec {
    pub fn evaluations(max_evaluations: usize, k_folds: usize, seed: u64) -> Self {
        BudgetSpec {
            max_evaluations,
            max_wall_time_s: None,
            per_eval_time_limit_s: None,
            k_folds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0 {
            return Err(Error::EmptyRun("evaluation budget is zero".into()));
        }
        if self.k_folds < 2 {
            return Err(Error::Config(format!("k_folds must be at least 2, got {}", self.k_folds)));
        }
        for (name, v) in [
            ("max_wall_time_s", self.max_wall_time_s),
            ("per_eval_time_limit_s", self.per_eval_time_limit_s),
        ] {
            if v.is_some_and(|v| !(v > 0.0)) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    #[default]
    Bayesian,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub strategy: SearchStrategy,
    pub margin: f64,
    pub surrogate: SurrogateParams,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            strategy: SearchStrategy::Bayesian,
            margin: DEFAULT_DISCARD_MARGIN,
            surrogate: SurrogateParams::default(),
        }
    }
}

/// Everything the optimizer has learned so far.
#[derive(Debug, Clone, Default)]
pub struct SurrogateState {
    pub design: Vec<Vec<f64>>,
    /// Surrogate targets; pessimistic for discarded and failed records.
    pub targets: Vec<f64>,
    /// Trace index and mean loss of the best complete record.
    pub incumbent: Option<(usize, f64)>,
    pub incumbent_config: Option<Configuration>,
    /// Proposals made so far, excluding warmstart configurations.
    pub proposals: usize,
    seen: HashSet<Vec<u64>>,
}

fn key(encoded: &[f64]) -> Vec<u64> {
    encoded.iter().map(|v| v.to_bits()).collect()
}

impl SurrogateState {
    pub fn incumbent_loss(&self) -> Option<f64> {
        self.incumbent.map(|(_, l)| l)
    }

    pub fn has_seen(&self, encoded: &[f64]) -> bool {
        self.seen.contains(&key(encoded))
    }

    /// Records an evaluation. Discarded records enter the surrogate at no
    /// better than the incumbent plus the margin.
    pub fn observe(&mut self, encoded: Vec<f64>, record: &EvaluationRecord, trace_index: usize, margin: f64) {
        let target = match record.status {
            EvalStatus::Complete => record.mean_loss,
            EvalStatus::Discarded => {
                let floor = self.incumbent_loss().map_or(f64::NEG_INFINITY, |b| b + margin);
                record.mean_loss.max(floor)
            }
            EvalStatus::Failed => FAILED_LOSS,
        };
        self.seen.insert(key(&encoded));
        self.design.push(encoded);
        self.targets.push(target);
        if record.is_complete() && self.incumbent_loss().map_or(true, |b| record.mean_loss < b) {
            self.incumbent = Some((trace_index, record.mean_loss));
            self.incumbent_config = Some(record.config.clone());
        }
    }
}

/// Index of the largest score; the first one wins ties.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.map_or(true, |b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Next configuration to evaluate.
///
/// While fewer than [`MIN_OBSERVATIONS`] are known, and on every
/// [`RANDOM_INTERLEAVE`]-th proposal, a uniformly random configuration is
/// returned. Otherwise random and incumbent-neighbourhood candidates are
/// ranked by expected improvement under the forest surrogate.
pub fn propose_next(state: &SurrogateState, space: &ConfigSpace, params: &SurrogateParams, seed: u64) -> Configuration {
    let index = state.proposals as u64;
    let mut rng = seeded_indexed(seed, "propose", index);
    let interleaved = (state.proposals + 1) % RANDOM_INTERLEAVE == 0;
    let (Some(best), Some(incumbent)) = (state.incumbent_loss(), state.incumbent_config.as_ref()) else {
        return space.sample(&mut rng);
    };
    if state.design.len() < MIN_OBSERVATIONS || interleaved {
        return space.sample(&mut rng);
    }
    let forest = RandomForestSurrogate::fit(&state.design, &state.targets, params, derive_seed(seed, "surrogate", index));
    let mut candidates: Vec<Configuration> = (0..RANDOM_CANDIDATES).map(|_| space.sample(&mut rng)).collect();
    candidates.extend((0..LOCAL_CANDIDATES).map(|_| space.mutate(incumbent, &mut rng)));
    let mut kept = Vec::with_capacity(candidates.len());
    let mut scores = Vec::with_capacity(candidates.len());
    let mut fresh = HashSet::new();
    for cfg in candidates {
        let Ok(x) = space.encode(&cfg) else { continue };
        if state.has_seen(&x) || !fresh.insert(key(&x)) {
            continue;
        }
        let (mu, var) = forest.predict(&x);
        scores.push(expected_improvement(mu, var.sqrt(), best));
        kept.push(cfg);
    }
    match argmax_first(&scores) {
        Some(i) => kept.swap_remove(i),
        None => space.sample(&mut rng),
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trace: Vec<EvaluationRecord>,
    pub incumbent: Option<usize>,
}

impl SearchOutcome {
    pub fn incumbent_loss(&self) -> Option<f64> {
        self.incumbent.map(|i| self.trace[i].mean_loss)
    }

    /// Best complete loss after each evaluation; `None` before the first.
    pub fn incumbent_curve(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trace
            .iter()
            .map(|r| {
                if r.is_complete() && best.map_or(true, |b| r.mean_loss < b) {
                    best = Some(r.mean_loss);
                }
                best
            })
            .collect()
    }
}

/// Runs warmstart configurations, then proposals, until the budget is
/// spent. Time limits are checked between evaluations and folds.
pub fn run_search(
    objective: &dyn Objective,
    space: &ConfigSpace,
    budget: &BudgetSpec,
    warmstart: &[Configuration],
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    budget.validate()?;
    for cfg in warmstart {
        space.validate(cfg)?;
    }
    let started = Instant::now();
    let mut state = SurrogateState::default();
    let mut trace = Vec::new();
    let mut queue = warmstart.iter();
    while trace.len() < budget.max_evaluations {
        if budget.max_wall_time_s.is_some_and(|t| started.elapsed().as_secs_f64() >= t) {
            break;
        }
        let cfg = match queue.next() {
            Some(cfg) => {
                let x = space.encode(cfg)?;
                if state.has_seen(&x) {
                    continue;
                }
                cfg.clone()
            }
            None => {
                let cfg = match options.strategy {
                    SearchStrategy::Bayesian => propose_next(&state, space, &options.surrogate, budget.seed),
                    SearchStrategy::Random => space.sample(&mut seeded_indexed(budget.seed, "propose", state.proposals as u64)),
                };
                state.proposals += 1;
                cfg
            }
        };
        let record = evaluate(
            objective,
            &cfg,
            EvalLimits {
                incumbent_loss: state.incumbent_loss(),
                margin: options.margin,
                time_limit_s: budget.per_eval_time_limit_s,
            },
        );
        state.observe(space.encode(&cfg)?, &record, trace.len(), options.margin);
        trace.push(record);
    }
    Ok(SearchOutcome {
        trace,
        incumbent: state.incumbent.map(|(i, _)| i),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CashOptions {
    pub metric: LossMetric,
    pub search: SearchOptions,
    /// Best complete configurations refitted for the ensemble stage.
    pub top_m: usize,
}

impl Default for CashOptions {
    fn default() -> Self {
        CashOptions {
            metric: LossMetric::default(),
            search: SearchOptions::default(),
            top_m: DEFAULT_TOP_M,
        }
    }
}

/// A refitted configuration and the trace record it came from.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub trace_index: usize,
    pub model: TrainedModel,
}

#[derive(Debug, Clone)]
pub struct CashResult {
    pub trace: Vec<EvaluationRecord>,
    pub incumbent_index: usize,
    pub incumbent: Configuration,
    pub incumbent_loss: f64,
    pub candidates: Vec<Candidate>,
}

/// Trace indices of the best `m` distinct complete configurations, best
/// first; ties keep trace order.
pub fn top_configurations(trace: &[EvaluationRecord], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trace.len()).filter(|&i| trace[i].is_complete()).collect();
    idx.sort_by(|&a, &b| trace[a].mean_loss.total_cmp(&trace[b].mean_loss).then(a.cmp(&b)));
    let mut out: Vec<usize> = Vec::new();
    for i in idx {
        if out.len() == m {
            break;
        }
        if !out.iter().any(|&j| trace[j].config == trace[i].config) {
            out.push(i);
        }
    }
    out
}

/// Fits `cfg` on all of `ds`, applying its balancing strategy first.
pub fn refit(cfg: &Configuration, ds: &LabeledDataset, seed: u64) -> Result<TrainedModel> {
    let strategy = BalancingStrategy::new(balancing_of(cfg));
    let balanced = apply_balancing(ds, &strategy, derive_seed(seed, "balance", 0))?;
    fit(cfg.algorithm, cfg, &balanced.data, balanced.weights.as_ref(), derive_seed(seed, "fit", 0))
}

/// Cross-validated search on `ds`, followed by refitting the top
/// candidates on all of `ds`.
pub fn run_cash(
    ds: &LabeledDataset,
    space: &ConfigSpace,
    budget: &BudgetSpec,
    warmstart: &[Configuration],
    options: &CashOptions,
) -> Result<CashResult> {
    budget.validate()?;
    let folds = stratified_kfold(ds, &SplitSpec::kfold(budget.k_folds, derive_seed(budget.seed, "folds", 0)))?;
    let objective = CvObjective::new(ds, &folds, options.metric, derive_seed(budget.seed, "cv", 0));
    let outcome = run_search(&objective, space, budget, warmstart, &options.search)?;
    let Some(best) = outcome.incumbent else {
        return Err(Error::NoIncumbent);
    };
    let mut candidates = Vec::new();
    for i in top_configurations(&outcome.trace, options.top_m) {
        if let Ok(model) = refit(&outcome.trace[i].config, ds, derive_seed(budget.seed, "refit", i as u64)) {
            candidates.push(Candidate { trace_index: i, model });
        }
    }
    Ok(CashResult {
        incumbent: outcome.trace[best].config.clone(),
        incumbent_loss: outcome.trace[best].mean_loss,
        incumbent_index: best,
        trace: outcome.trace,
        candidates,
    })
}

/// One JSON object per line.
pub fn trace_to_jsonl(trace: &[EvaluationRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Hash of the trace with wall times zeroed, stable across reruns.
pub fn trace_digest(trace: &[EvaluationRecord]) -> String {
    let mut h = Sha256::new();
    for r in trace {
        let mut r = r.clone();
        r.wall_time_s = 0.0;
        h.update(serde_json::to_vec(&r).expect("records serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax_first(&[0.0, 1.0, 0.0, 1.0]), Some(1));
        assert_eq!(argmax_first(&[]), None);
    }

    #[test]
    fn zero_budget_is_an_empty_run() {
        let b = BudgetSpec::evaluations(0, 3, 1);
        assert!(matches!(b.validate(), Err(Error::EmptyRun(_))));
    }
}
