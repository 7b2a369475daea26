//! Hyperparameter spaces and configurations.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    DecisionTree,
    RandomForest,
    Knn,
    HistGradientBoosting,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 4] = [
        AlgorithmId::DecisionTree,
        AlgorithmId::RandomForest,
        AlgorithmId::Knn,
        AlgorithmId::HistGradientBoosting,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmId::DecisionTree => "decision_tree",
            AlgorithmId::RandomForest => "random_forest",
            AlgorithmId::Knn => "knn",
            AlgorithmId::HistGradientBoosting => "hist_gradient_boosting",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    /// Conventional estimator name shown in contribution tables.
    pub fn classifier_name(&self) -> &'static str {
        match self {
            AlgorithmId::DecisionTree => "DecisionTreeClassifier",
            AlgorithmId::RandomForest => "RandomForestClassifier",
            AlgorithmId::Knn => "KNeighborsClassifier",
            AlgorithmId::HistGradientBoosting => "HistGradientBoostingClassifier",
        }
    }

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|a| a == self).expect("listed")
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ParamKind {
    Int { low: i64, high: i64, log: bool },
    Real { low: f64, high: f64, log: bool },
    Categorical { choices: Vec<String> },
}

/// Activation condition: the parameter only exists when `parent` takes one
/// of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub default: ParamValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_when: Option<Condition>,
}

impl ParamSpec {
    pub fn int(name: &str, low: i64, high: i64, log: bool, default: i64) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Int { low, high, log },
            default: ParamValue::Int(default),
            active_when: None,
        }
    }

    pub fn real(name: &str, low: f64, high: f64, log: bool, default: f64) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Real { low, high, log },
            default: ParamValue::Real(default),
            active_when: None,
        }
    }

    pub fn categorical(name: &str, choices: &[&str], default: &str) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
            default: ParamValue::Cat(default.into()),
            active_when: None,
        }
    }

    pub fn when(mut self, parent: &str, values: &[&str]) -> Self {
        self.active_when = Some(Condition {
            parent: parent.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        self
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (&self.kind, v) {
            (ParamKind::Int { low, high, .. }, ParamValue::Int(x)) => low <= x && x <= high,
            (ParamKind::Real { low, high, .. }, ParamValue::Real(x)) => *low <= *x && *x <= *high,
            (ParamKind::Categorical { choices }, ParamValue::Cat(c)) => choices.contains(c),
            _ => false,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> ParamValue {
        match &self.kind {
            ParamKind::Int { low, high, log } => {
                if *log {
                    let (a, b) = ((*low as f64 - 0.5).max(0.5).ln(), (*high as f64 + 0.5).ln());
                    let v = rng.gen_range(a..b).exp().round() as i64;
                    ParamValue::Int(v.clamp(*low, *high))
                } else {
                    ParamValue::Int(rng.gen_range(*low..=*high))
                }
            }
            ParamKind::Real { low, high, log } => {
                if *log {
                    ParamValue::Real(rng.gen_range(low.ln()..=high.ln()).exp().clamp(*low, *high))
                } else {
                    ParamValue::Real(rng.gen_range(*low..=*high))
                }
            }
            ParamKind::Categorical { choices } => {
                ParamValue::Cat(choices[rng.gen_range(0..choices.len())].clone())
            }
        }
    }

    /// Position of a numeric value in `[0, 1]`, measured in the log domain
    /// for log-scaled parameters.
    pub fn normalize(&self, v: &ParamValue) -> Option<f64> {
        let unit = |x: f64, lo: f64, hi: f64, log: bool| {
            if hi == lo {
                0.0
            } else if log {
                (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
            } else {
                (x - lo) / (hi - lo)
            }
        };
        match (&self.kind, v) {
            (ParamKind::Int { low, high, log }, ParamValue::Int(x)) => {
                Some(unit(*x as f64, *low as f64, *high as f64, *log))
            }
            (ParamKind::Real { low, high, log }, ParamValue::Real(x)) => Some(unit(*x, *low, *high, *log)),
            _ => None,
        }
    }

    /// Inverse of [`ParamSpec::normalize`]; integers are rounded.
    pub fn denormalize(&self, u: f64) -> Option<ParamValue> {
        let u = u.clamp(0.0, 1.0);
        let back = |lo: f64, hi: f64, log: bool| {
            if log {
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            } else {
                lo + u * (hi - lo)
            }
        };
        match &self.kind {
            ParamKind::Int { low, high, log } => Some(ParamValue::Int(
                (back(*low as f64, *high as f64, *log).round() as i64).clamp(*low, *high),
            )),
            ParamKind::Real { low, high, log } => {
                Some(ParamValue::Real(back(*low, *high, *log).clamp(*low, *high)))
            }
            ParamKind::Categorical { .. } => None,
        }
    }
}

/// Declared hyperparameters of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSpace {
    pub params: Vec<ParamSpec>,
}

impl HyperparameterSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let space = HyperparameterSpace { params };
        space.check_schema()?;
        Ok(space)
    }

    fn check_schema(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (i, p) in self.params.iter().enumerate() {
            if self.params[..i].iter().any(|q| q.name == p.name) {
                problems.push(format!("{}: declared twice", p.name));
            }
            if !p.contains(&p.default) {
                problems.push(format!("{}: default {} outside its domain", p.name, p.default));
            }
            match &p.kind {
                ParamKind::Int { low, high, log } => {
                    if low > high || (*log && *low < 1) {
                        problems.push(format!("{}: invalid integer bounds", p.name));
                    }
                }
                ParamKind::Real { low, high, log } => {
                    if !(low <= high) || (*log && *low <= 0.0) {
                        problems.push(format!("{}: invalid real bounds", p.name));
                    }
                }
                ParamKind::Categorical { choices } => {
                    if choices.is_empty() {
                        problems.push(format!("{}: no choices", p.name));
                    }
                }
            }
            if let Some(cond) = &p.active_when {
                // parents must be categorical and declared earlier
                match self.params[..i].iter().find(|q| q.name == cond.parent) {
                    Some(ParamSpec {
                        kind: ParamKind::Categorical { choices },
                        ..
                    }) => {
                        for v in &cond.values {
                            if !choices.contains(v) {
                                problems.push(format!("{}: condition value {v:?} not a choice of {}", p.name, cond.parent));
                            }
                        }
                    }
                    _ => problems.push(format!(
                        "{}: condition references undeclared or non-categorical {:?}",
                        p.name, cond.parent
                    )),
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::SpaceViolation(problems))
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    fn is_active(spec: &ParamSpec, values: &BTreeMap<String, ParamValue>) -> bool {
        match &spec.active_when {
            None => true,
            Some(cond) => match values.get(&cond.parent) {
                Some(ParamValue::Cat(v)) => cond.values.contains(v),
                _ => false,
            },
        }
    }

    /// Names of the parameters active under `values`.
    pub fn active_names(&self, values: &BTreeMap<String, ParamValue>) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| Self::is_active(p, values))
            .map(|p| p.name.as_str())
            .collect()
    }

    pub fn defaults(&self) -> BTreeMap<String, ParamValue> {
        let mut values = BTreeMap::new();
        for p in &self.params {
            if Self::is_active(p, &values) {
                values.insert(p.name.clone(), p.default.clone());
            }
        }
        values
    }

    pub fn sample(&self, rng: &mut Rng) -> BTreeMap<String, ParamValue> {
        let mut values = BTreeMap::new();
        for p in &self.params {
            if Self::is_active(p, &values) {
                values.insert(p.name.clone(), p.sample(rng));
            }
        }
        values
    }

    /// Drops assignments that became inactive and fills newly active ones
    /// with their defaults.
    pub fn repair(&self, values: &mut BTreeMap<String, ParamValue>) {
        let mut fixed = BTreeMap::new();
        for p in &self.params {
            if Self::is_active(p, &fixed) {
                let v = values.remove(&p.name).unwrap_or_else(|| p.default.clone());
                fixed.insert(p.name.clone(), v);
            }
        }
        *values = fixed;
    }

    /// Lists every offending parameter: missing, out of range, inactive or
    /// undeclared.
    pub fn violations(&self, values: &BTreeMap<String, ParamValue>) -> Vec<String> {
        let mut problems = Vec::new();
        for p in &self.params {
            let active = Self::is_active(p, values);
            match (active, values.get(&p.name)) {
                (true, None) => problems.push(format!("{}: missing", p.name)),
                (true, Some(v)) if !p.contains(v) => problems.push(format!("{}: {v} outside domain", p.name)),
                (false, Some(_)) => problems.push(format!("{}: assigned while inactive", p.name)),
                _ => {}
            }
        }
        for name in values.keys() {
            if self.get(name).is_none() {
                problems.push(format!("{name}: not declared"));
            }
        }
        problems
    }
}

/// A point in the joint algorithm × hyperparameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub algorithm: AlgorithmId,
    pub params: BTreeMap<String, ParamValue>,
}

impl Configuration {
    pub fn new(algorithm: AlgorithmId, params: BTreeMap<String, ParamValue>) -> Self {
        Configuration { algorithm, params }
    }

    /// Replaces one assignment, builder style.
    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        match self.params.get(name) {
            Some(ParamValue::Int(v)) => Ok(*v),
            other => Err(Error::SpaceViolation(vec![format!("{name}: expected integer, found {other:?}")])),
        }
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        match self.params.get(name) {
            Some(ParamValue::Real(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            other => Err(Error::SpaceViolation(vec![format!("{name}: expected real, found {other:?}")])),
        }
    }

    pub fn cat(&self, name: &str) -> Result<&str> {
        match self.params.get(name) {
            Some(ParamValue::Cat(v)) => Ok(v),
            other => Err(Error::SpaceViolation(vec![format!("{name}: expected choice, found {other:?}")])),
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.algorithm)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}
