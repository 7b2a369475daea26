//! Dataset meta-features and nearest-dataset warmstarting.
//!
//! Offline, every dataset in a collection gets a CASH run whose best
//! configurations are stored next to its meta-features. Online, a new
//! dataset is matched against the stored ones and the configurations of the
//! closest donors are evaluated first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cash::{run_cash, top_configurations, BudgetSpec, CashOptions, ConfigSpace};
use crate::data::{class_distribution, LabeledDataset};
use crate::error::{Error, Result};
use crate::space::Configuration;

pub const KB_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K_DATASETS: usize = 3;
pub const CONFIGS_PER_DATASET: usize = 5;
pub const N_META_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures {
    pub n_samples: f64,
    pub n_features: f64,
    /// Classes with at least one sample.
    pub n_classes: f64,
    /// Natural-log entropy of the class frequencies.
    pub class_entropy: f64,
    /// Largest over smallest nonzero class count.
    pub imbalance_ratio: f64,
    /// Mean over features of the population standard deviation.
    pub feature_mean_std: f64,
    pub log_n_samples: f64,
    pub log_n_features: f64,
}

impl MetaFeatures {
    pub fn to_vec(&self) -> [f64; N_META_FEATURES] {
        [
            self.n_samples,
            self.n_features,
            self.n_classes,
            self.class_entropy,
            self.imbalance_ratio,
            self.feature_mean_std,
            self.log_n_samples,
            self.log_n_features,
        ]
    }

    pub fn from_slice(v: &[f64; N_META_FEATURES]) -> Self {
        MetaFeatures {
            n_samples: v[0],
            n_features: v[1],
            n_classes: v[2],
            class_entropy: v[3],
            imbalance_ratio: v[4],
            feature_mean_std: v[5],
            log_n_samples: v[6],
            log_n_features: v[7],
        }
    }
}

pub fn compute_meta_features(ds: &LabeledDataset) -> Result<MetaFeatures> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("meta-features of an empty dataset".into()));
    }
    let counts: Vec<usize> = class_distribution(ds).counts.into_iter().filter(|&c| c > 0).collect();
    if counts.len() < 2 {
        return Err(Error::InsufficientData("meta-features need at least two classes".into()));
    }
    let n = ds.n_samples() as f64;
    let d = ds.n_features();
    let class_entropy = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    let max = *counts.iter().max().expect("nonempty") as f64;
    let min = *counts.iter().min().expect("nonempty") as f64;
    let x = ds.features();
    let mut std_sum = 0.0;
    for j in 0..d {
        let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
        let var = x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        std_sum += var.sqrt();
    }
    Ok(MetaFeatures {
        n_samples: n,
        n_features: d as f64,
        n_classes: counts.len() as f64,
        class_entropy,
        imbalance_ratio: max / min,
        feature_mean_std: std_sum / d as f64,
        log_n_samples: n.ln(),
        log_n_features: (d as f64).ln(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub config: Configuration,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEntry {
    pub dataset_id: String,
    pub meta_features: MetaFeatures,
    /// Best first.
    pub configs: Vec<StoredConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub format_version: u32,
    pub space_hash: String,
    pub entries: Vec<KbEntry>,
    pub mean: Vec<f64>,
    /// Population standard deviation; constant meta-features store 1.
    pub std: Vec<f64>,
}

impl KnowledgeBase {
    /// Wraps `entries`, computing normalization statistics over them.
    pub fn from_entries(entries: Vec<KbEntry>, space_hash: String) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyKnowledgeBase);
        }
        let m = entries.len() as f64;
        let mut mean = vec![0.0; N_META_FEATURES];
        let mut std = vec![0.0; N_META_FEATURES];
        for e in &entries {
            for (acc, v) in mean.iter_mut().zip(e.meta_features.to_vec()) {
                *acc += v / m;
            }
        }
        for e in &entries {
            for (j, v) in e.meta_features.to_vec().into_iter().enumerate() {
                std[j] += (v - mean[j]).powi(2) / m;
            }
        }
        for s in &mut std {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Ok(KnowledgeBase {
            format_version: KB_FORMAT_VERSION,
            space_hash,
            entries,
            mean,
            std,
        })
    }

    pub fn normalize(&self, mf: &MetaFeatures) -> Vec<f64> {
        mf.to_vec()
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Errors unless the stored configurations were built for `space`.
    pub fn check(&self, space: &ConfigSpace) -> Result<()> {
        if self.format_version != KB_FORMAT_VERSION {
            return Err(Error::Migration {
                stored: format!("format {}", self.format_version),
                current: format!("format {KB_FORMAT_VERSION}"),
            });
        }
        let current = space.hash();
        if self.space_hash != current {
            return Err(Error::Migration {
                stored: self.space_hash.clone(),
                current,
            });
        }
        for e in &self.entries {
            for c in &e.configs {
                space.validate(&c.config).map_err(|err| Error::Dataset {
                    dataset_id: e.dataset_id.clone(),
                    source: Box::new(err),
                })?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn from_json(text: &str, space: &ConfigSpace) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(KB_FORMAT_VERSION as u64) {
            return Err(Error::Migration {
                stored: version.map_or("unversioned".into(), |v| format!("format {v}")),
                current: format!("format {KB_FORMAT_VERSION}"),
            });
        }
        let kb: KnowledgeBase = serde_json::from_value(value)?;
        kb.check(space)?;
        Ok(kb)
    }

    pub fn load(path: impl AsRef<Path>, space: &ConfigSpace) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, space)
    }
}

/// Runs CASH on one dataset and keeps its best distinct configurations.
/// Errors are tagged with `dataset_id`.
pub fn knowledge_base_entry(
    dataset_id: &str,
    ds: &LabeledDataset,
    space: &ConfigSpace,
    budget: &BudgetSpec,
    options: &CashOptions,
) -> Result<KbEntry> {
    let tag = |err: Error| Error::Dataset {
        dataset_id: dataset_id.to_string(),
        source: Box::new(err),
    };
    let meta_features = compute_meta_features(ds).map_err(tag)?;
    let options = CashOptions { top_m: 0, ..*options };
    let result = run_cash(ds, space, budget, &[], &options).map_err(tag)?;
    let configs = top_configurations(&result.trace, CONFIGS_PER_DATASET)
        .into_iter()
        .map(|i| StoredConfig {
            config: result.trace[i].config.clone(),
            mean_loss: result.trace[i].mean_loss,
        })
        .collect();
    Ok(KbEntry {
        dataset_id: dataset_id.to_string(),
        meta_features,
        configs,
    })
}

/// Offline phase: one entry per dataset, all searched under `budget`.
pub fn build_knowledge_base(
    datasets: &[(String, LabeledDataset)],
    space: &ConfigSpace,
    budget: &BudgetSpec,
    options: &CashOptions,
) -> Result<KnowledgeBase> {
    if datasets.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    let entries = datasets
        .iter()
        .map(|(id, ds)| knowledge_base_entry(id, ds, space, budget, options))
        .collect::<Result<Vec<_>>>()?;
    KnowledgeBase::from_entries(entries, space.hash())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Entry indices ordered by normalized distance to `mf`, ties by position.
pub fn nearest_entries(kb: &KnowledgeBase, mf: &MetaFeatures) -> Vec<(usize, f64)> {
    let q = kb.normalize(mf);
    let mut ranked: Vec<(usize, f64)> = kb
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, euclidean(&q, &kb.normalize(&e.meta_features))))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Configurations of the `k_datasets` closest entries, closest donor first
/// and best first within a donor, without repeats.
pub fn warmstart_select(kb: &KnowledgeBase, mf: &MetaFeatures, k_datasets: usize) -> Result<Vec<Configuration>> {
    if kb.entries.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    if k_datasets == 0 {
        return Err(Error::Config("k_datasets must be at least 1".into()));
    }
    let mut out: Vec<Configuration> = Vec::new();
    for (i, _) in nearest_entries(kb, mf).into_iter().take(k_datasets) {
        let mut configs: Vec<&StoredConfig> = kb.entries[i].configs.iter().collect();
        configs.sort_by(|a, b| a.mean_loss.total_cmp(&b.mean_loss));
        for c in configs {
            if !out.contains(&c.config) {
                out.push(c.config.clone());
            }
        }
    }
    Ok(out)
}
