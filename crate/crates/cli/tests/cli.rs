use std::path::Path;
use std::process::{Command, Output};

fn sutureml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sutureml"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_error(o: &Output, code: &str) {
    assert!(!o.status.success(), "expected failure, stdout: {}", stdout(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "one error line expected: {err}");
    assert!(lines[0].starts_with(&format!("error[{code}]: ")), "{err}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fit_then_use_the_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let fit = sutureml(&[
        "fit", "--profile", "paper_like", "--scale", "0.06", "--budget-evals", "30", "--kfolds", "3", "--seed", "7", "--out",
        p(&out),
    ]);
    assert!(fit.status.success(), "{}", stderr(&fit));
    for f in ["bundle.json", "trace.jsonl", "contributions.csv", "report.json", "report.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join(".lock").exists());
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 30);

    let data = tmp.path().join("data");
    let synth = sutureml(&["synth", "--scale", "0.06", "--seed", "7", "--out", p(&data)]);
    assert!(synth.status.success(), "{}", stderr(&synth));
    let bundle = out.join("bundle.json");

    let ev_dir = tmp.path().join("eval");
    let ev = sutureml(&["evaluate", "--bundle", p(&bundle), "--input", p(&data.join("test.csv")), "--out", p(&ev_dir)]);
    assert!(ev.status.success(), "{}", stderr(&ev));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ev_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["classes"].as_array().unwrap().len(), 11);
    assert!(ev_dir.join("confusion_matrix.csv").is_file());
    let accuracy = report["accuracy"].as_f64().unwrap();

    let pr_dir = tmp.path().join("pred");
    let pr = sutureml(&["predict", "--bundle", p(&bundle), "--input", p(&data.join("test.csv")), "--out", p(&pr_dir)]);
    assert!(pr.status.success(), "{}", stderr(&pr));
    let preds = std::fs::read_to_string(pr_dir.join("predictions.csv")).unwrap();
    let header = preds.lines().next().unwrap();
    assert!(header.starts_with("predicted,p(Create Bight),"), "{header}");
    assert_eq!(header.split(',').count(), 12);

    let rec = sutureml(&["predict", "--bundle", p(&bundle), "--input", p(&data.join("recording.csv")), "--out", p(&pr_dir)]);
    assert!(rec.status.success(), "{}", stderr(&rec));

    let bm_dir = tmp.path().join("bench");
    let bm = sutureml(&[
        "benchmark", "--bundle", p(&bundle), "--input", p(&data.join("test.csv")), "--repetitions", "3", "--out", p(&bm_dir),
    ]);
    assert!(bm.status.success(), "{}", stderr(&bm));
    let members = serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&bundle).unwrap()).unwrap()["members"]
        .as_array()
        .unwrap()
        .len();
    let csv = std::fs::read_to_string(bm_dir.join("benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), members + 1);
    assert!(bm_dir.join("host.json").is_file());
    let last = csv.lines().last().unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "accuracy").unwrap();
    let bench_acc: f64 = last.split(',').nth(col).unwrap().parse().unwrap();
    assert!((bench_acc - accuracy).abs() < 1e-12, "{bench_acc} vs {accuracy}");

    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, format!("{}\n", csv_header(&data.join("test.csv"), false))).unwrap();
    let zero = sutureml(&["predict", "--bundle", p(&bundle), "--input", p(&empty), "--out", p(&pr_dir)]);
    assert!(zero.status.success(), "{}", stderr(&zero));
    assert_eq!(std::fs::read_to_string(pr_dir.join("predictions.csv")).unwrap().lines().count(), 1);

    let labeled_empty = tmp.path().join("labeled_empty.csv");
    std::fs::write(&labeled_empty, format!("{}\n", csv_header(&data.join("test.csv"), true))).unwrap();
    assert_error(&sutureml(&["evaluate", "--bundle", p(&bundle), "--input", p(&labeled_empty), "--out", p(&ev_dir)]), "E_INSUFFICIENT_DATA");

    let narrow = tmp.path().join("narrow.csv");
    std::fs::write(&narrow, "f0,f1\n1.0,2.0\n").unwrap();
    let bad = sutureml(&["predict", "--bundle", p(&bundle), "--input", p(&narrow), "--out", p(&pr_dir)]);
    assert_error(&bad, "E_SHAPE");
    assert!(stderr(&bad).contains("f0,f1,f2"));

    let short = tmp.path().join("short.csv");
    std::fs::write(&short, "frame,x,y,z\n0,0,0,0\n1,0.1,0,0\n2,0.2,0,0\n").unwrap();
    let too_short = sutureml(&["predict", "--bundle", p(&bundle), "--input", p(&short), "--out", p(&pr_dir)]);
    assert_error(&too_short, "E_INSUFFICIENT_DATA");
    assert!(stderr(&too_short).contains("too short"));

    let unknown = tmp.path().join("unknown.csv");
    let test_csv = std::fs::read_to_string(data.join("test.csv")).unwrap();
    let mut lines = test_csv.lines();
    let head = lines.next().unwrap();
    let row = lines.next().unwrap();
    let (features, _) = row.rsplit_once(',').unwrap();
    std::fs::write(&unknown, format!("{head}\n{features},Juggle\n")).unwrap();
    assert_error(&sutureml(&["evaluate", "--bundle", p(&bundle), "--input", p(&unknown), "--out", p(&ev_dir)]), "E_VOCABULARY");
}

fn csv_header(path: &Path, with_label: bool) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let header = text.lines().next().unwrap();
    if with_label {
        header.to_string()
    } else {
        header.rsplit_once(',').unwrap().0.to_string()
    }
}

#[test]
fn missing_train_file_fails_before_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = sutureml(&["fit", "--train", p(&tmp.path().join("nope.csv")), "--out", p(&out)]);
    assert_error(&o, "E_CONFIG");
    assert!(!out.exists());
}

#[test]
fn unknown_metric_is_a_usage_error() {
    let o = sutureml(&["fit", "--metric", "auc"]);
    assert_error(&o, "E_USAGE");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = sutureml(&["--help"]);
    assert!(o.status.success());
    for cmd in ["fit", "predict", "evaluate", "benchmark", "synth", "meta-build"] {
        assert!(stdout(&o).contains(cmd), "{cmd}");
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    let out = tmp.path().join("a");
    std::fs::write(
        &cfg,
        r#"{"data": {"source": "synth", "profile": {"kind": "paper_like", "scale": 0.03}}, "budget": {"max_evaluations": 0, "k_folds": 3}, "seed": 3}"#,
    )
    .unwrap();
    assert_error(&sutureml(&["fit", "--config", p(&cfg), "--out", p(&out)]), "E_EMPTY_RUN");
    let o = sutureml(&["fit", "--config", p(&cfg), "--budget-evals", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().count(), 2);

    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let o = sutureml(&["fit", "--config", p(&cfg)]);
    assert_error(&o, "E_CONFIG");
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn locked_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".lock"), "").unwrap();
    let o = sutureml(&["fit", "--scale", "0.06", "--budget-evals", "1", "--out", p(&out)]);
    assert_error(&o, "E_LOCKED");
}

#[test]
fn meta_build_is_reproducible_and_hash_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("datasets.txt");
    std::fs::write(&list, "# two small datasets\nsynth:balanced:220\nsynth:paper_like:0.03\n").unwrap();
    let kb = tmp.path().join("kb.json");
    let args = ["meta-build", "--list", p(&list), "--kb", p(&kb), "--budget-evals", "6", "--kfolds", "3"];
    let a = sutureml(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let first = std::fs::read(&kb).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(value["entries"].as_array().unwrap().len(), 2);
    assert!(sutureml(&args).status.success());
    assert_eq!(std::fs::read(&kb).unwrap(), first);

    let mut stale = value.clone();
    stale["space_hash"] = serde_json::Value::String("0000".into());
    let stale_path = tmp.path().join("stale.json");
    std::fs::write(&stale_path, serde_json::to_string(&stale).unwrap()).unwrap();
    let o = sutureml(&["fit", "--scale", "0.06", "--budget-evals", "2", "--warmstart-kb", p(&stale_path), "--out", p(&tmp.path().join("r"))]);
    assert_error(&o, "E_MIGRATION");
}

#[test]
fn meta_build_failure_needs_the_partial_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("datasets.txt");
    std::fs::write(&list, "synth:balanced:220\nmissing.csv\n").unwrap();
    let kb = tmp.path().join("kb.json");
    let base = ["meta-build", "--list", p(&list), "--kb", p(&kb), "--budget-evals", "4", "--kfolds", "3"];
    assert_error(&sutureml(&base), "E_IO");
    assert!(!kb.exists());
    let mut partial = base.to_vec();
    partial.push("--allow-partial");
    let o = sutureml(&partial);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipped missing.csv"));
    assert!(kb.is_file());
}
