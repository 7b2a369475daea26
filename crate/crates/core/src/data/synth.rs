//! Synthetic suturing trajectories.
//!
//! The real recordings are not available, so the generator reproduces their
//! structure instead: eleven actions with strongly skewed frequencies, six
//! experienced and four novice participants, and novices that move faster
//! and far less smoothly than experienced surgeons. Every action has its own
//! working region and motion pattern; participants add a personal offset.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    action_vocabulary, window_featurize, LabelRule, LabeledDataset, Matrix, TrajectoryRecording,
    WindowSpec, ACTION_CLASSES, ACTION_SEQUENCE,
};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

/// Test-set supports of the eleven actions in the recorded suturing data, in
/// [`ACTION_CLASSES`] order.
pub const REFERENCE_SUPPORTS: [usize; 11] = [1005, 1861, 9604, 251, 1076, 1754, 684, 630, 1876, 3259, 1432];

/// Experienced share of the training data: six experienced recordings of
/// 4782 frames against half of four novice recordings of 11716 frames.
const EXPERIENCED_SHARE: f64 = 6.0 * 4782.0 / (6.0 * 4782.0 + 2.0 * 11716.0);

const EXPERIENCED_PARTICIPANTS: usize = 6;
const NOVICE_PARTICIPANTS: usize = 4;

/// Default `PaperLike` scale: 25 training samples for the rarest action.
pub const DEFAULT_PAPER_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    Novice,
    Experienced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthProfile {
    /// Training counts proportional to [`REFERENCE_SUPPORTS`] times `scale`.
    PaperLike { scale: f64 },
    /// `total` training samples split evenly over the eleven actions.
    Balanced { total: usize },
    /// Explicit training count per action.
    Custom { counts: Vec<usize> },
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile::PaperLike {
            scale: DEFAULT_PAPER_SCALE,
        }
    }
}

impl SynthProfile {
    pub fn train_counts(&self) -> Result<Vec<usize>> {
        let counts = match self {
            SynthProfile::PaperLike { scale } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidProfile(format!("scale must be positive, got {scale}")));
                }
                REFERENCE_SUPPORTS
                    .iter()
                    .map(|&s| ((s as f64 * scale).round() as usize).max(1))
                    .collect()
            }
            SynthProfile::Balanced { total } => {
                let c = ACTION_CLASSES.len();
                if *total < c {
                    return Err(Error::InvalidProfile(format!(
                        "balanced profile needs at least {c} samples, got {total}"
                    )));
                }
                (0..c).map(|i| total / c + usize::from(i < total % c)).collect()
            }
            SynthProfile::Custom { counts } => {
                if counts.len() != ACTION_CLASSES.len() {
                    return Err(Error::InvalidProfile(format!(
                        "custom profile needs {} counts, got {}",
                        ACTION_CLASSES.len(),
                        counts.len()
                    )));
                }
                if let Some(c) = counts.iter().position(|&n| n == 0) {
                    return Err(Error::InvalidProfile(format!(
                        "class {:?} has a zero count",
                        ACTION_CLASSES[c]
                    )));
                }
                counts.clone()
            }
        };
        Ok(counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

/// One generated window-length snippet with its provenance.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub recording: TrajectoryRecording,
    pub class: usize,
    pub skill: Skill,
    pub participant: usize,
    pub partition: Partition,
}

/// Kinematic signature of one action.
struct ActionMotion {
    center: [f64; 3],
    speed: f64,
    omega: f64,
    /// Relative amplitude of the out-of-plane component.
    lift: f64,
}

fn action_motion(class: usize) -> ActionMotion {
    let step = ACTION_SEQUENCE.iter().position(|&c| c == class).unwrap_or(0) as f64;
    let angle = TAU * step / ACTION_CLASSES.len() as f64;
    let radius = 260.0;
    // The two throws share a workspace and differ by tempo.
    let (center_angle, height) = match class {
        9 => (angle, 40.0),
        2 => (TAU * 9.0 / 11.0 + 0.15, 55.0),
        _ => (angle, 20.0 * (step % 3.0)),
    };
    let speed = 6.0 + 1.1 * ((class * 7) % 11) as f64;
    let omega = 0.12 + 0.035 * ((class * 5) % 11) as f64;
    ActionMotion {
        center: [radius * center_angle.cos(), radius * center_angle.sin(), height],
        speed,
        omega,
        lift: 0.2 + 0.06 * (class % 4) as f64,
    }
}

struct SkillStyle {
    tempo: f64,
    jitter: f64,
    drift: f64,
}

fn skill_style(skill: Skill) -> SkillStyle {
    match skill {
        Skill::Experienced => SkillStyle {
            tempo: 1.0,
            jitter: 0.6,
            drift: 18.0,
        },
        Skill::Novice => SkillStyle {
            tempo: 1.35,
            jitter: 3.3,
            drift: 32.0,
        },
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite standard deviation")
}

/// Fills `out` with `frames` positions of `class` performed in `style`.
fn perform(
    class: usize,
    style: &SkillStyle,
    anchor: [f64; 3],
    frames: usize,
    rng: &mut Rng,
    out: &mut Vec<[f64; 3]>,
) {
    let m = action_motion(class);
    let tempo = style.tempo * rng.gen_range(0.85..1.15);
    let omega = m.omega * tempo.sqrt();
    let amplitude = m.speed * tempo / omega;
    let phase = rng.gen_range(0.0..TAU);
    let jitter = normal(style.jitter);
    let drift = normal(style.drift);
    let center = [
        anchor[0] + m.center[0] + drift.sample(rng),
        anchor[1] + m.center[1] + drift.sample(rng),
        anchor[2] + m.center[2] + drift.sample(rng),
    ];
    for t in 0..frames {
        let a = omega * t as f64 + phase;
        out.push([
            center[0] + amplitude * a.cos() + jitter.sample(rng),
            center[1] + amplitude * a.sin() + jitter.sample(rng),
            center[2] + m.lift * amplitude * (0.5 * a).sin() + jitter.sample(rng),
        ]);
    }
}

fn participant_anchors(rng: &mut Rng) -> Vec<[f64; 3]> {
    let sd = normal(20.0);
    (0..EXPERIENCED_PARTICIPANTS + NOVICE_PARTICIPANTS)
        .map(|_| [sd.sample(rng), sd.sample(rng), 0.3 * sd.sample(rng)])
        .collect()
}

/// Generates labeled snippets of `window.window_len` frames.
///
/// For every action the training count splits into an experienced share
/// and a novice half; the test set is the other novice half.
pub fn synth_samples(profile: &SynthProfile, window_len: usize, seed: u64) -> Result<Vec<SynthSample>> {
    if window_len < 3 {
        return Err(Error::InvalidWindow("synthetic snippets need at least 3 frames".into()));
    }
    let counts = profile.train_counts()?;
    let mut rng = seeded(seed, "synth");
    let anchors = participant_anchors(&mut rng);
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(window_len);
    let mut emit = |class: usize, skill: Skill, participant: usize, partition: Partition, rng: &mut Rng| -> Result<()> {
        buf.clear();
        perform(class, &skill_style(skill), anchors[participant], window_len, rng, &mut buf);
        let recording = TrajectoryRecording::from_positions(buf.clone(), Some(vec![class; window_len]))?;
        out.push(SynthSample {
            recording,
            class,
            skill,
            participant,
            partition,
        });
        Ok(())
    };
    for (class, &n) in counts.iter().enumerate() {
        let experienced = (n as f64 * EXPERIENCED_SHARE).round() as usize;
        let novice = n - experienced;
        for i in 0..experienced {
            emit(class, Skill::Experienced, i % EXPERIENCED_PARTICIPANTS, Partition::Train, &mut rng)?;
        }
        for i in 0..2 * novice {
            let participant = EXPERIENCED_PARTICIPANTS + (i / 2) % NOVICE_PARTICIPANTS;
            let partition = if i % 2 == 0 { Partition::Train } else { Partition::Test };
            emit(class, Skill::Novice, participant, partition, &mut rng)?;
        }
    }
    Ok(out)
}

/// Featurized `(train, test)` pair following the Exp/Nov protocol.
pub fn synth_generate(profile: &SynthProfile, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let window = WindowSpec::default();
    let samples = synth_samples(profile, window.window_len, seed)?;
    let spec = WindowSpec {
        window_len: window.window_len,
        stride: window.window_len,
        label_rule: LabelRule::Majority,
    };
    let mut parts = [Vec::new(), Vec::new()];
    let mut labels = [Vec::new(), Vec::new()];
    for s in &samples {
        let row = window_featurize(&s.recording, &spec)?;
        let k = usize::from(s.partition == Partition::Test);
        parts[k].extend_from_slice(row.features().row(0));
        labels[k].push(s.class);
    }
    let [train_x, test_x] = parts;
    let [train_y, test_y] = labels;
    let d = super::WINDOW_FEATURES;
    let names = super::window_feature_names();
    let train = LabeledDataset::new(
        Matrix::from_vec(train_y.len(), d, train_x)?,
        train_y,
        action_vocabulary(),
        names.clone(),
    )?;
    let test = LabeledDataset::new(
        Matrix::from_vec(test_y.len(), d, test_x)?,
        test_y,
        action_vocabulary(),
        names,
    )?;
    Ok((train, test))
}

/// A continuous labeled recording of one full suture. Each action lasts
/// `frames_per_support` frames per unit of its reference support, but never
/// less than `min_frames`.
pub fn synth_recording(
    skill: Skill,
    frames_per_support: f64,
    min_frames: usize,
    seed: u64,
) -> Result<TrajectoryRecording> {
    let mut rng = seeded(seed, "synth_recording");
    let anchors = participant_anchors(&mut rng);
    let participant = match skill {
        Skill::Experienced => 0,
        Skill::Novice => EXPERIENCED_PARTICIPANTS,
    };
    let style = skill_style(skill);
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for &class in &ACTION_SEQUENCE {
        let len = ((REFERENCE_SUPPORTS[class] as f64 * frames_per_support).round() as usize).max(min_frames);
        perform(class, &style, anchors[participant], len, &mut rng, &mut positions);
        labels.extend(std::iter::repeat(class).take(len));
    }
    TrajectoryRecording::from_positions(positions, Some(labels))
}
