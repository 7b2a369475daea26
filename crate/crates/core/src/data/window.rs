use serde::{Deserialize, Serialize};

use super::trajectory::{acceleration_norms, bbox_diagonal, norm, rms_deviation, velocities};
use super::{action_vocabulary, LabeledDataset, Matrix, TrajectoryRecording, ACTION_CLASSES};
use crate::error::{Error, Result};

/// Number of features emitted per window for 3-D trajectories.
pub const WINDOW_FEATURES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    Majority,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub stride: usize,
    pub label_rule: LabelRule,
}

impl Default for WindowSpec {
    /// One second at 25 fps, advancing five frames at a time.
    fn default() -> Self {
        WindowSpec {
            window_len: 25,
            stride: 5,
            label_rule: LabelRule::Majority,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::InvalidWindow("window_len must be at least 2".into()));
        }
        if self.stride == 0 || self.stride > self.window_len {
            return Err(Error::InvalidWindow(format!(
                "stride must lie in [1, window_len={}], got {}",
                self.window_len, self.stride
            )));
        }
        Ok(())
    }

    pub fn window_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.stride + 1
        }
    }
}

pub fn window_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(WINDOW_FEATURES);
    for stat in ["mean", "std", "min", "max"] {
        for axis in ["x", "y", "z"] {
            names.push(format!("{stat}_{axis}"));
        }
    }
    names.extend(
        ["speed_mean", "speed_max", "accel_mean", "accel_max", "range", "deviation"]
            .iter()
            .map(|s| s.to_string()),
    );
    names
}

fn window_row(frames: &[super::Frame], out: &mut Vec<f64>) {
    let n = frames.len() as f64;
    let mut mean = [0.0; 3];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for f in frames {
        for k in 0..3 {
            mean[k] += f.pos[k];
            lo[k] = lo[k].min(f.pos[k]);
            hi[k] = hi[k].max(f.pos[k]);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0; 3];
    for f in frames {
        for k in 0..3 {
            let d = f.pos[k] - mean[k];
            var[k] += d * d;
        }
    }
    out.extend_from_slice(&mean);
    out.extend(var.iter().map(|v| (v / n).sqrt()));
    out.extend_from_slice(&lo);
    out.extend_from_slice(&hi);

    let vel = velocities(frames);
    let speeds: Vec<f64> = vel.iter().map(|v| norm(*v)).collect();
    let acc = acceleration_norms(frames, &vel);
    let mean_max = |v: &[f64]| {
        if v.is_empty() {
            (0.0, 0.0)
        } else {
            (
                v.iter().sum::<f64>() / v.len() as f64,
                v.iter().copied().fold(0.0, f64::max),
            )
        }
    };
    let (sm, sx) = mean_max(&speeds);
    let (am, ax) = mean_max(&acc);
    out.extend_from_slice(&[sm, sx, am, ax, bbox_diagonal(frames), rms_deviation(frames)]);
}

fn window_label(labels: &[usize], rule: LabelRule) -> usize {
    match rule {
        LabelRule::Center => labels[labels.len() / 2],
        LabelRule::Majority => {
            let mut counts = [0usize; ACTION_CLASSES.len()];
            for &l in labels {
                counts[l] += 1;
            }
            // first maximum: ties go to the smaller class id
            let mut best = 0;
            for c in 1..counts.len() {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            best
        }
    }
}

/// Slides a window over the recording and summarises each position.
///
/// Unlabeled recordings produce rows labeled with class 0; callers that
/// need labels must check [`TrajectoryRecording::labels`] first.
pub fn window_featurize(rec: &TrajectoryRecording, spec: &WindowSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let count = spec.window_count(rec.len());
    if count == 0 {
        return Err(Error::InsufficientData(format!(
            "recording has {} frames, window needs {}",
            rec.len(),
            spec.window_len
        )));
    }
    let frames = rec.frames();
    let mut data = Vec::with_capacity(count * WINDOW_FEATURES);
    let mut labels = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * spec.stride;
        let end = start + spec.window_len;
        window_row(&frames[start..end], &mut data);
        labels.push(match rec.labels() {
            Some(l) => window_label(&l[start..end], spec.label_rule),
            None => 0,
        });
    }
    LabeledDataset::new(
        Matrix::from_vec(count, WINDOW_FEATURES, data)?,
        labels,
        action_vocabulary(),
        window_feature_names(),
    )
}
