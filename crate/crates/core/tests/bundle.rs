use std::path::Path;

use sutureml::bundle::{ModelBundle, BUNDLE_FORMAT_VERSION, PROBE_ROWS};
use sutureml::data::{Matrix, SynthProfile};
use sutureml::learners::Classifier;
use sutureml::pipeline::{cmd_fit, cmd_predict, DataSource, RunConfig, BUNDLE_FILE};
use sutureml::Error;

fn tiny(out: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        data: DataSource::Synth {
            profile: SynthProfile::PaperLike { scale: 0.03 },
        },
        out_dir: out.to_path_buf(),
        seed,
        ..RunConfig::default()
    };
    cfg.budget.max_evaluations = 6;
    cfg.budget.k_folds = 3;
    cfg
}

#[test]
fn saved_bundle_reloads_and_predicts_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = cmd_fit(&tiny(&tmp.path().join("run"), 5)).unwrap();
    let path = tmp.path().join("run").join(BUNDLE_FILE);
    let (bundle, ens) = ModelBundle::load(&path).unwrap();
    assert_eq!(bundle, fit.bundle);
    assert_eq!(bundle.format_version, BUNDLE_FORMAT_VERSION);
    assert_eq!(bundle.probe.features.len(), PROBE_ROWS);
    assert!((bundle.members.iter().map(|m| m.weight).sum::<f64>() - 1.0).abs() < 1e-9);

    let x = Matrix::from_rows(&bundle.probe.features).unwrap();
    let (a, b) = (fit.ensemble.predict_proba(&x).unwrap(), ens.predict_proba(&x).unwrap());
    assert!(a.as_slice().iter().zip(b.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));

    let csv = tmp.path().join("probe.csv");
    let mut text = (0..x.cols()).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in &bundle.probe.features {
        text.push_str(&row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    std::fs::write(&csv, text).unwrap();
    let (_, preds) = cmd_predict(&path, &csv).unwrap();
    for (row, stored) in preds.probabilities.iter_rows().zip(&bundle.probe.probabilities) {
        assert!(row.iter().zip(stored).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn same_config_gives_the_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |dir: &str| {
        cmd_fit(&tiny(&tmp.path().join(dir), 8)).unwrap();
        std::fs::read(tmp.path().join(dir).join(BUNDLE_FILE)).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn tampering_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = cmd_fit(&tiny(&tmp.path().join("run"), 2)).unwrap();

    let mut changed = fit.bundle.clone();
    changed.probe.probabilities[0][0] += 1e-3;
    assert!(matches!(changed.verify(&fit.ensemble).unwrap_err(), Error::Bundle(_)));

    let mut garbled = fit.bundle.clone();
    garbled.members[0].state = "%%%".into();
    assert!(matches!(garbled.ensemble().unwrap_err(), Error::Bundle(_)));

    let mut value: serde_json::Value = serde_json::from_str(&fit.bundle.to_json()).unwrap();
    value["format_version"] = (BUNDLE_FORMAT_VERSION + 1).into();
    assert!(matches!(
        ModelBundle::from_json(&value.to_string()).unwrap_err(),
        Error::Migration { .. }
    ));
}
