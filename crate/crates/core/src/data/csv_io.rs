use std::collections::BTreeSet;
use std::path::Path;

use super::{action_id, LabeledDataset, Matrix, ACTION_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFileKind {
    /// `frame,x,y,z[,label]`
    Trajectory,
    /// `f0,...,f{d-1}[,label]`
    Features,
}

fn header_kind(header: &str) -> Option<DatasetFileKind> {
    let first = header.split(',').next()?.trim().to_ascii_lowercase();
    match first.as_str() {
        "frame" => Some(DatasetFileKind::Trajectory),
        "f0" => Some(DatasetFileKind::Features),
        _ => None,
    }
}

/// Distinguishes trajectory files from feature files by their header.
pub fn sniff_file_kind(path: impl AsRef<Path>) -> Result<DatasetFileKind> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text.lines().next().unwrap_or("");
    header_kind(header).ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        message: format!("unrecognised header {header:?}; expected frame,x,y,z[,label] or f0,...[,label]"),
    })
}

/// Raw contents of a feature CSV.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub features: Matrix,
    pub labels: Option<Vec<String>>,
}

pub fn parse_feature_csv(text: &str, source: &str) -> Result<FeatureTable> {
    let perr = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_label = names.last() == Some(&"label");
    let d = names.len() - usize::from(has_label);
    if d == 0 {
        return Err(perr(1, "no feature columns".into()));
    }
    for (j, n) in names[..d].iter().enumerate() {
        if *n != format!("f{j}") {
            return Err(perr(1, format!("expected column f{j}, found {n:?}")));
        }
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        if rec.len() != names.len() {
            return Err(perr(line, format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        for j in 0..d {
            let v: f64 = rec[j]
                .parse()
                .map_err(|_| perr(line, format!("invalid number {:?}", &rec[j])))?;
            if !v.is_finite() {
                return Err(perr(line, "non-finite value".into()));
            }
            data.push(v);
        }
        if has_label {
            labels.push(rec[d].to_string());
        }
    }
    let rows = data.len() / d;
    Ok(FeatureTable {
        features: Matrix::from_vec(rows, d, data)?,
        labels: has_label.then_some(labels),
    })
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_csv(&text, &path.display().to_string())
}

/// Maps label strings onto `vocabulary`, or infers one.
///
/// The inferred vocabulary is the sorted set of distinct labels, spelled
/// canonically when every label is a known suturing action.
pub fn resolve_labels(raw: &[String], vocabulary: Option<&[String]>) -> Result<(Vec<usize>, Vec<String>)> {
    let vocab: Vec<String> = match vocabulary {
        Some(v) => v.to_vec(),
        None => {
            if raw.iter().all(|l| action_id(l).is_some()) {
                let ids: BTreeSet<usize> = raw.iter().filter_map(|l| action_id(l)).collect();
                ids.into_iter().map(|i| ACTION_CLASSES[i].to_string()).collect()
            } else {
                raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
            }
        }
    };
    let ids = raw
        .iter()
        .map(|l| {
            vocab
                .iter()
                .position(|v| v.eq_ignore_ascii_case(l.trim()))
                .ok_or_else(|| Error::Vocabulary {
                    label: l.clone(),
                    expected: vocab.join(", "),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, vocab))
}

/// Reads a labeled feature CSV.
pub fn read_dataset_csv(path: impl AsRef<Path>, vocabulary: Option<&[String]>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let table = read_feature_csv(path)?;
    let raw = table.labels.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        message: "missing label column".into(),
    })?;
    let (labels, vocab) = resolve_labels(&raw, vocabulary)?;
    if vocab.is_empty() {
        return Err(Error::InvalidDataset(format!("{} holds no rows", path.display())));
    }
    LabeledDataset::with_default_names(table.features, labels, vocab)
}

pub fn dataset_to_csv(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..ds.n_features()).map(|j| format!("f{j}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for (i, row) in ds.features().iter_rows().enumerate() {
        for v in row {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&ds.class_names()[ds.labels()[i]]);
        out.push('\n');
    }
    out
}

pub fn write_dataset_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset_to_csv(ds)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let x = Matrix::from_vec(2, 2, vec![0.1, 1.0 / 3.0, -2.5e-17, 7.0]).unwrap();
        let ds = LabeledDataset::with_default_names(x, vec![1, 0], vec!["Grasp needle".into(), "Tension".into()])
            .unwrap();
        let text = dataset_to_csv(&ds);
        let table = parse_feature_csv(&text, "mem").unwrap();
        assert_eq!(table.features, *ds.features());
        let (ids, vocab) = resolve_labels(table.labels.as_ref().unwrap(), Some(ds.class_names())).unwrap();
        assert_eq!(ids, ds.labels());
        assert_eq!(vocab, ds.class_names());
    }

    #[test]
    fn inferred_vocabulary() {
        let raw = vec!["tension".to_string(), "Grasp needle".to_string()];
        let (ids, vocab) = resolve_labels(&raw, None).unwrap();
        assert_eq!(vocab, vec!["Grasp needle", "Tension"]);
        assert_eq!(ids, vec![1, 0]);
        let (_, vocab) = resolve_labels(&["b".to_string(), "a".to_string()], None).unwrap();
        assert_eq!(vocab, vec!["a", "b"]);
    }

    #[test]
    fn header_checks() {
        assert!(parse_feature_csv("f0,f2,label\n1,2,a\n", "m").is_err());
        let t = parse_feature_csv("f0,f1\n1,2\n", "m").unwrap();
        assert!(t.labels.is_none());
        assert_eq!(header_kind("frame,x,y,z"), Some(DatasetFileKind::Trajectory));
        assert_eq!(header_kind("f0,f1,label"), Some(DatasetFileKind::Features));
        assert_eq!(header_kind("a,b"), None);
    }

    #[test]
    fn unknown_label_with_vocabulary() {
        let err = resolve_labels(&["zz".into()], Some(&["a".into()])).unwrap_err();
        assert_eq!(err.code(), "E_VOCABULARY");
    }
}
