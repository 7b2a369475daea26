use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{action_id, ACTION_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: i64,
    pub pos: [f64; 3],
}

/// Instrument-tip trajectory with an optional per-frame action label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecording {
    frames: Vec<Frame>,
    labels: Option<Vec<usize>>,
    frame_rate_hz: f64,
}

impl TrajectoryRecording {
    pub const DEFAULT_FRAME_RATE: f64 = 25.0;

    pub fn new(frames: Vec<Frame>, labels: Option<Vec<usize>>, frame_rate_hz: f64) -> Result<Self> {
        if !(frame_rate_hz > 0.0) {
            return Err(Error::InvalidDataset("frame rate must be positive".into()));
        }
        for (i, w) in frames.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::Ordering {
                    line: i + 2,
                    previous: w[0].t,
                    found: w[1].t,
                });
            }
        }
        if frames.iter().any(|f| f.pos.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidDataset("non-finite position".into()));
        }
        if let Some(l) = &labels {
            if l.len() != frames.len() {
                return Err(Error::shape(format!("{} labels", frames.len()), l.len()));
            }
            if let Some(bad) = l.iter().find(|&&c| c >= ACTION_CLASSES.len()) {
                return Err(Error::InvalidDataset(format!("label id {bad} out of range")));
            }
        }
        Ok(TrajectoryRecording {
            frames,
            labels,
            frame_rate_hz,
        })
    }

    /// Frames at consecutive indices `0..positions.len()`.
    pub fn from_positions(positions: Vec<[f64; 3]>, labels: Option<Vec<usize>>) -> Result<Self> {
        let frames = positions
            .into_iter()
            .enumerate()
            .map(|(t, pos)| Frame { t: t as i64, pos })
            .collect();
        Self::new(frames, labels, Self::DEFAULT_FRAME_RATE)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Reads a `frame,x,y,z[,label]` CSV file.
pub fn load_trajectory_csv(path: impl AsRef<Path>) -> Result<TrajectoryRecording> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory_csv(&text, &path.display().to_string())
}

pub fn parse_trajectory_csv(text: &str, source: &str) -> Result<TrajectoryRecording> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let has_label = match cols.as_slice() {
        [f, x, y, z] if f == "frame" && x == "x" && y == "y" && z == "z" => false,
        [f, x, y, z, l] if f == "frame" && x == "x" && y == "y" && z == "z" && l == "label" => true,
        _ => {
            return Err(parse_err(
                1,
                format!("expected header frame,x,y,z[,label], found {header:?}"),
            ))
        }
    };
    let width = if has_label { 5 } else { 4 };

    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(parse_err(
                lineno,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let t: i64 = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid frame index {:?}", fields[0])))?;
        let mut pos = [0.0f64; 3];
        for k in 0..3 {
            pos[k] = fields[k + 1]
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid coordinate {:?}", fields[k + 1])))?;
            if !pos[k].is_finite() {
                return Err(parse_err(lineno, "non-finite coordinate".into()));
            }
        }
        if let Some(prev) = frames.last().map(|f: &Frame| f.t) {
            if t <= prev {
                return Err(Error::Ordering {
                    line: lineno,
                    previous: prev,
                    found: t,
                });
            }
        }
        frames.push(Frame { t, pos });
        if has_label {
            let id = action_id(fields[4]).ok_or_else(|| Error::Vocabulary {
                label: fields[4].to_string(),
                expected: ACTION_CLASSES.join(", "),
            })?;
            labels.push(id);
        }
    }
    TrajectoryRecording::new(
        frames,
        has_label.then_some(labels),
        TrajectoryRecording::DEFAULT_FRAME_RATE,
    )
}

pub fn trajectory_to_csv(rec: &TrajectoryRecording) -> String {
    let mut out = String::from(if rec.labels.is_some() { "frame,x,y,z,label\n" } else { "frame,x,y,z\n" });
    for (i, f) in rec.frames.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}", f.t, f.pos[0], f.pos[1], f.pos[2]));
        if let Some(l) = &rec.labels {
            out.push(',');
            out.push_str(ACTION_CLASSES[l[i]]);
        }
        out.push('\n');
    }
    out
}

/// Whole-recording kinematic summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCharacteristics {
    pub trajectory_length: usize,
    pub mean_speed: f64,
    pub mean_acceleration: f64,
    /// Diagonal of the axis-aligned bounding box.
    pub trajectory_range: f64,
    /// Root-mean-square distance from the centroid.
    pub trajectory_deviation: f64,
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Per-step velocity vectors in units/frame.
pub(crate) fn velocities(frames: &[Frame]) -> Vec<[f64; 3]> {
    frames
        .windows(2)
        .map(|w| {
            let dt = (w[1].t - w[0].t) as f64;
            [
                (w[1].pos[0] - w[0].pos[0]) / dt,
                (w[1].pos[1] - w[0].pos[1]) / dt,
                (w[1].pos[2] - w[0].pos[2]) / dt,
            ]
        })
        .collect()
}

/// Acceleration magnitudes in units/frame²; for unit frame steps this is the
/// norm of the second difference.
pub(crate) fn acceleration_norms(frames: &[Frame], vel: &[[f64; 3]]) -> Vec<f64> {
    vel.windows(2)
        .enumerate()
        .map(|(i, v)| {
            let dt = 0.5 * ((frames[i + 2].t - frames[i].t) as f64);
            norm([
                (v[1][0] - v[0][0]) / dt,
                (v[1][1] - v[0][1]) / dt,
                (v[1][2] - v[0][2]) / dt,
            ])
        })
        .collect()
}

pub(crate) fn bbox_diagonal(frames: &[Frame]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for f in frames {
        for k in 0..3 {
            lo[k] = lo[k].min(f.pos[k]);
            hi[k] = hi[k].max(f.pos[k]);
        }
    }
    norm([hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]])
}

pub(crate) fn rms_deviation(frames: &[Frame]) -> f64 {
    let n = frames.len() as f64;
    let mut c = [0.0; 3];
    for f in frames {
        for k in 0..3 {
            c[k] += f.pos[k];
        }
    }
    for v in &mut c {
        *v /= n;
    }
    let ss: f64 = frames
        .iter()
        .map(|f| {
            let d = [f.pos[0] - c[0], f.pos[1] - c[1], f.pos[2] - c[2]];
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        })
        .sum();
    (ss / n).sqrt()
}

pub fn compute_characteristics(rec: &TrajectoryRecording) -> Result<TrajectoryCharacteristics> {
    let frames = rec.frames();
    if frames.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "characteristics need at least 3 frames, recording has {}",
            frames.len()
        )));
    }
    let vel = velocities(frames);
    let acc = acceleration_norms(frames, &vel);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let speeds: Vec<f64> = vel.iter().map(|v| norm(*v)).collect();
    Ok(TrajectoryCharacteristics {
        trajectory_length: frames.len(),
        mean_speed: mean(&speeds),
        mean_acceleration: mean(&acc),
        trajectory_range: bbox_diagonal(frames),
        trajectory_deviation: rms_deviation(frames),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_file() {
        let rec = parse_trajectory_csv("frame,x,y,z\n0,0,0,0\n1,1,0,0\n2,2,0,0\n", "t").unwrap();
        assert_eq!(rec.len(), 3);
        assert!(rec.labels().is_none());
    }

    #[test]
    fn csv_writer_round_trips() {
        let rec = TrajectoryRecording::from_positions(vec![[0.5, -1.25, 3.0], [0.1, 0.2, 0.3]], Some(vec![3, 10])).unwrap();
        let back = parse_trajectory_csv(&trajectory_to_csv(&rec), "t").unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn rejects_non_monotone_frames() {
        let err = parse_trajectory_csv("frame,x,y,z\n0,0,0,0\n2,1,0,0\n1,2,0,0\n", "t").unwrap_err();
        assert!(matches!(err, Error::Ordering { line: 4, previous: 2, found: 1 }), "{err:?}");
    }

    #[test]
    fn maps_labels_to_vocabulary() {
        let rec = parse_trajectory_csv("frame,x,y,z,label\n0,0,0,0,Set needle\n", "t").unwrap();
        assert_eq!(rec.labels().unwrap(), &[8]);
        let err = parse_trajectory_csv("frame,x,y,z,label\n0,0,0,0,Tie knot\n", "t").unwrap_err();
        assert_eq!(err.code(), "E_VOCABULARY");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_trajectory_csv("frame,x,y,z\n0,0,0,0\n1,abc,0,0\n", "t").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_trajectory_csv("frame,x,y\n0,0,0\n", "t").is_err());
    }

    #[test]
    fn constant_velocity_line() {
        let rec =
            TrajectoryRecording::from_positions((0..10).map(|i| [i as f64, 0.0, 0.0]).collect(), None)
                .unwrap();
        let c = compute_characteristics(&rec).unwrap();
        assert_eq!(c.trajectory_length, 10);
        assert!((c.mean_speed - 1.0).abs() < 1e-12);
        assert!(c.mean_acceleration.abs() < 1e-12);
    }

    #[test]
    fn stationary_point() {
        let rec = TrajectoryRecording::from_positions(vec![[2.0, 3.0, 4.0]; 5], None).unwrap();
        let c = compute_characteristics(&rec).unwrap();
        assert_eq!(c.trajectory_range, 0.0);
        assert_eq!(c.trajectory_deviation, 0.0);
    }

    #[test]
    fn range_is_box_diagonal() {
        let rec = TrajectoryRecording::from_positions(
            vec![[0.0, 0.0, 0.0], [1.5, 2.0, 0.0], [3.0, 4.0, 0.0]],
            None,
        )
        .unwrap();
        let c = compute_characteristics(&rec).unwrap();
        assert!((c.trajectory_range - 5.0).abs() < 1e-12);
    }

    #[test]
    fn too_short_recording() {
        let rec = TrajectoryRecording::from_positions(vec![[0.0; 3]; 2], None).unwrap();
        assert_eq!(compute_characteristics(&rec).unwrap_err().code(), "E_INSUFFICIENT_DATA");
    }

    #[test]
    fn skipped_frames_scale_speed() {
        let frames = vec![
            Frame { t: 0, pos: [0.0; 3] },
            Frame { t: 2, pos: [2.0, 0.0, 0.0] },
            Frame { t: 4, pos: [4.0, 0.0, 0.0] },
        ];
        let rec = TrajectoryRecording::new(frames, None, 25.0).unwrap();
        let c = compute_characteristics(&rec).unwrap();
        assert!((c.mean_speed - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn translation_invariant(
            pts in prop::collection::vec(prop::array::uniform3(-100.0f64..100.0), 3..40),
            shift in prop::array::uniform3(-1e3f64..1e3),
        ) {
            let a = TrajectoryRecording::from_positions(pts.clone(), None).unwrap();
            let moved = pts.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect();
            let b = TrajectoryRecording::from_positions(moved, None).unwrap();
            let (ca, cb) = (compute_characteristics(&a).unwrap(), compute_characteristics(&b).unwrap());
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-8 * (1.0 + x.abs());
            prop_assert!(close(ca.mean_speed, cb.mean_speed));
            prop_assert!(close(ca.mean_acceleration, cb.mean_acceleration));
            prop_assert!(close(ca.trajectory_range, cb.trajectory_range));
            prop_assert!(close(ca.trajectory_deviation, cb.trajectory_deviation));
        }
    }
}
