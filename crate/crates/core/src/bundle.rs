//! Versioned, self-verifying persistence of a fitted ensemble.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, WindowSpec};
use crate::ensemble::{ContributionRow, EnsembleModel};
use crate::error::{Error, Result};
use crate::learners::{Classifier, TrainedModel};
use crate::report::{ClassificationReport, LossMetric};
use crate::space::Configuration;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const PROBE_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    /// Set when rows are windows of trajectories, which can then be
    /// featurized on the fly.
    pub window: Option<WindowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMember {
    pub config: Configuration,
    pub seed: u64,
    pub count: usize,
    pub weight: f64,
    /// Base64 of the canonical model bytes.
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub evaluations: usize,
    pub incumbent: Configuration,
    pub incumbent_loss: f64,
    /// Digest of the search trace with wall times removed.
    pub trace_digest: String,
    pub contributions: Vec<ContributionRow>,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub features: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub space_hash: String,
    pub metric: LossMetric,
    pub class_names: Vec<String>,
    pub schema: FeatureSchema,
    pub validation_loss: f64,
    pub members: Vec<BundleMember>,
    pub summary: TrainingSummary,
    pub probe: ProbeSet,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

impl ModelBundle {
    /// Packs `ens`, predicting the first [`PROBE_ROWS`] rows of `probe_x`
    /// as the stored probe.
    pub fn new(
        ens: &EnsembleModel,
        space_hash: String,
        class_names: Vec<String>,
        schema: FeatureSchema,
        summary: TrainingSummary,
        probe_x: &Matrix,
    ) -> Result<Self> {
        let take: Vec<usize> = (0..probe_x.rows().min(PROBE_ROWS)).collect();
        let probe_x = probe_x.select_rows(&take);
        let probabilities = ens.predict_proba(&probe_x)?;
        let members = ens
            .members
            .iter()
            .zip(ens.counts.iter().zip(&ens.weights))
            .map(|(m, (&count, &weight))| BundleMember {
                config: m.config.clone(),
                seed: m.seed,
                count,
                weight,
                state: STANDARD.encode(m.canonical_bytes()),
            })
            .collect();
        Ok(ModelBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            space_hash,
            metric: ens.metric,
            class_names,
            schema,
            validation_loss: ens.validation_loss,
            members,
            summary,
            probe: ProbeSet {
                features: rows_of(&probe_x),
                probabilities: rows_of(&probabilities),
            },
        })
    }

    pub fn ensemble(&self) -> Result<EnsembleModel> {
        let members = self
            .members
            .iter()
            .map(|m| {
                let bytes = STANDARD
                    .decode(&m.state)
                    .map_err(|e| Error::Bundle(format!("member state is not base64: {e}")))?;
                TrainedModel::from_canonical_bytes(&bytes, m.config.clone(), m.seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let ens = EnsembleModel::from_counts(
            members,
            self.members.iter().map(|m| m.count).collect(),
            self.metric,
            self.validation_loss,
        )?;
        if ens.n_classes() != self.class_names.len() || ens.n_features() != self.schema.names.len() {
            return Err(Error::Bundle("members disagree with the stored schema".into()));
        }
        Ok(ens)
    }

    /// Recomputes the probe predictions and requires bit equality.
    pub fn verify(&self, ens: &EnsembleModel) -> Result<()> {
        if self.probe.features.is_empty() {
            return Ok(());
        }
        let x = Matrix::from_rows(&self.probe.features)?;
        let p = ens.predict_proba(&x)?;
        let same = p.iter_rows().zip(&self.probe.probabilities).all(|(a, b)| {
            a.len() == b.len() && a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits())
        });
        if same {
            Ok(())
        } else {
            Err(Error::Bundle("probe predictions differ from the stored ones".into()))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(BUNDLE_FORMAT_VERSION as u64) {
            return Err(Error::Migration {
                stored: version.map_or("unversioned".into(), |v| format!("bundle format {v}")),
                current: format!("bundle format {BUNDLE_FORMAT_VERSION}"),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Reads a bundle and checks it against its probe set.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, EnsembleModel)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle = Self::from_json(&text)?;
        let ens = bundle.ensemble()?;
        bundle.verify(&ens)?;
        Ok((bundle, ens))
    }
}
