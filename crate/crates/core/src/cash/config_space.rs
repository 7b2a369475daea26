use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::{default_space, BALANCING_PARAM};
use crate::rng::Rng;
use crate::space::{AlgorithmId, Configuration, HyperparameterSpace, ParamKind, ParamSpec, ParamValue};

/// Sentinel written into the slots of inactive parameters.
pub const INACTIVE: f64 = -1.0;

/// Joint space: a root choice of algorithm, each with its own conditional
/// subspace. Parameters declared identically by every algorithm (the
/// balancing strategy) share encoding slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub algorithms: Vec<(AlgorithmId, HyperparameterSpace)>,
}

impl Default for ConfigSpace {
    fn default() -> Self {
        Self::restricted(&AlgorithmId::ALL)
    }
}

impl ConfigSpace {
    pub fn restricted(algorithms: &[AlgorithmId]) -> Self {
        ConfigSpace {
            algorithms: algorithms.iter().map(|&a| (a, default_space(a))).collect(),
        }
    }

    pub fn new(algorithms: Vec<(AlgorithmId, HyperparameterSpace)>) -> Result<Self> {
        if algorithms.is_empty() {
            return Err(Error::Config("configuration space needs at least one algorithm".into()));
        }
        Ok(ConfigSpace { algorithms })
    }

    /// Hex SHA-256 of the canonical JSON form; stored artifacts carry it to
    /// detect a changed space.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("space serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn space(&self, alg: AlgorithmId) -> Result<&HyperparameterSpace> {
        self.algorithms
            .iter()
            .find(|(a, _)| *a == alg)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::SpaceViolation(vec![format!("algorithm: {alg} is not part of the space")]))
    }

    pub fn validate(&self, cfg: &Configuration) -> Result<()> {
        let problems = self.space(cfg.algorithm)?.violations(&cfg.params);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::SpaceViolation(problems))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Configuration {
        let (alg, space) = &self.algorithms[rng.gen_range(0..self.algorithms.len())];
        Configuration::new(*alg, space.sample(rng))
    }

    pub fn default_configuration(&self, alg: AlgorithmId) -> Result<Configuration> {
        Ok(Configuration::new(alg, self.space(alg)?.defaults()))
    }

    fn shared(&self) -> Option<&ParamSpec> {
        let first = self.algorithms[0].1.get(BALANCING_PARAM)?;
        self.algorithms
            .iter()
            .all(|(_, s)| s.get(BALANCING_PARAM) == Some(first))
            .then_some(first)
    }

    fn own_params<'a>(&'a self, space: &'a HyperparameterSpace) -> impl Iterator<Item = &'a ParamSpec> + 'a {
        let shared = self.shared().is_some();
        space.params.iter().filter(move |p| !(shared && p.name == BALANCING_PARAM))
    }

    fn width(p: &ParamSpec) -> usize {
        match &p.kind {
            ParamKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    pub fn encoding_len(&self) -> usize {
        let own: usize = self
            .algorithms
            .iter()
            .map(|(_, s)| self.own_params(s).map(Self::width).sum::<usize>())
            .sum();
        self.algorithms.len() + own + self.shared().map_or(0, Self::width)
    }

    fn encode_param(p: &ParamSpec, value: Option<&ParamValue>, out: &mut Vec<f64>) {
        match (&p.kind, value) {
            (ParamKind::Categorical { choices }, Some(ParamValue::Cat(v))) => {
                out.extend(choices.iter().map(|c| if c == v { 1.0 } else { 0.0 }))
            }
            (_, Some(v)) => out.push(p.normalize(v).unwrap_or(INACTIVE)),
            (_, None) => out.extend(std::iter::repeat(INACTIVE).take(Self::width(p))),
        }
    }

    /// Fixed-length vector: algorithm one-hot, then every algorithm's own
    /// slots, then the shared slots. Numeric values are scaled to `[0, 1]`
    /// (log-scaled ones in the log domain), categoricals are one-hot and
    /// inactive slots hold [`INACTIVE`].
    pub fn encode(&self, cfg: &Configuration) -> Result<Vec<f64>> {
        self.validate(cfg)?;
        let mut out = Vec::with_capacity(self.encoding_len());
        for (alg, _) in &self.algorithms {
            out.push(if *alg == cfg.algorithm { 1.0 } else { 0.0 });
        }
        for (alg, space) in &self.algorithms {
            for p in self.own_params(space) {
                let value = if *alg == cfg.algorithm { cfg.params.get(&p.name) } else { None };
                Self::encode_param(p, value, &mut out);
            }
        }
        if let Some(p) = self.shared() {
            Self::encode_param(p, cfg.params.get(&p.name), &mut out);
        }
        Ok(out)
    }

    /// A neighbour of `cfg` differing in one active parameter: numeric
    /// values take a Gaussian step of 0.2 in the unit scale, categoricals
    /// switch to another choice.
    pub fn mutate(&self, cfg: &Configuration, rng: &mut Rng) -> Configuration {
        let Ok(space) = self.space(cfg.algorithm) else {
            return self.sample(rng);
        };
        let active: Vec<&ParamSpec> = space.params.iter().filter(|p| cfg.params.contains_key(&p.name)).collect();
        if active.is_empty() {
            return self.sample(rng);
        }
        let p = active[rng.gen_range(0..active.len())];
        let current = &cfg.params[&p.name];
        let next = match &p.kind {
            ParamKind::Categorical { choices } => {
                if choices.len() < 2 {
                    current.clone()
                } else {
                    let others: Vec<&String> = choices.iter().filter(|c| !matches!(current, ParamValue::Cat(v) if v == *c)).collect();
                    ParamValue::Cat(others[rng.gen_range(0..others.len())].clone())
                }
            }
            _ => {
                let u = p.normalize(current).unwrap_or(0.5);
                let step = Normal::new(0.0, 0.2).expect("valid sigma").sample(rng);
                let mut v = p.denormalize(u + step).unwrap_or_else(|| current.clone());
                if &v == current {
                    if let ParamKind::Int { low, high, .. } = p.kind {
                        if let ParamValue::Int(c) = current {
                            let c = *c;
                            v = ParamValue::Int(if step >= 0.0 && c < high || c == low { (c + 1).min(high) } else { c - 1 });
                        }
                    }
                }
                v
            }
        };
        let mut params: BTreeMap<String, ParamValue> = cfg.params.clone();
        params.insert(p.name.clone(), next);
        space.repair(&mut params);
        Configuration::new(cfg.algorithm, params)
    }
}
