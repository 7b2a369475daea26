use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use sutureml::data::{class_distribution, synth_generate, LabeledDataset, Matrix, SynthProfile};
use sutureml::imbalance::class_weights;
use sutureml::learners::{
    argmax_rows, default_config, default_space, fit, tree::TreeNode, ClassificationTree, ForestModel, ModelState,
};
use sutureml::rng::seeded_indexed;
use sutureml::space::{AlgorithmId, ParamValue};
use sutureml::Error;

fn names(c: usize) -> Vec<String> {
    (0..c).map(|k| format!("c{k}")).collect()
}

fn random_dataset(seed: u64, n: usize, d: usize, c: usize) -> LabeledDataset {
    let mut rng = seeded_indexed(seed, "learner-test", 0);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    y[0] = 0;
    y[1] = 1;
    LabeledDataset::with_default_names(x, y, names(c)).unwrap()
}

/// Two overlapping Gaussian blobs with `n_minor` minority rows.
fn blobs(seed: u64, n_major: usize, n_minor: usize) -> LabeledDataset {
    let mut rng = seeded_indexed(seed, "blobs", 0);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for i in 0..n_major + n_minor {
        let minor = i >= n_major;
        let shift = if minor { 1.4 } else { 0.0 };
        data.push(shift + noise.sample(&mut rng));
        data.push(shift + noise.sample(&mut rng));
        y.push(minor as usize);
    }
    LabeledDataset::with_default_names(Matrix::from_vec(y.len(), 2, data).unwrap(), y, names(2)).unwrap()
}

fn all_configs() -> Vec<sutureml::space::Configuration> {
    AlgorithmId::ALL
        .iter()
        .map(|&a| {
            let cfg = default_config(a);
            match a {
                AlgorithmId::RandomForest => cfg.with("n_trees", ParamValue::Int(16)),
                AlgorithmId::HistGradientBoosting => cfg.with("n_rounds", ParamValue::Int(32)),
                _ => cfg,
            }
        })
        .collect()
}

#[test]
fn spaces_declare_documented_ranges() {
    use sutureml::space::ParamKind;
    let knn = default_space(AlgorithmId::Knn);
    assert_eq!(
        knn.get("k").unwrap().kind,
        ParamKind::Int {
            low: 1,
            high: 50,
            log: false
        }
    );
    let rf = default_space(AlgorithmId::RandomForest);
    assert_eq!(
        rf.get("n_trees").unwrap().kind,
        ParamKind::Int {
            low: 16,
            high: 512,
            log: true
        }
    );
    for a in AlgorithmId::ALL {
        match &default_space(a).get("balancing").unwrap().kind {
            ParamKind::Categorical { choices } => {
                assert_eq!(choices, &["none", "weighting", "smote", "undersample"])
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn unbounded_tree_memorizes_training_set() {
    for seed in 0..5 {
        let ds = random_dataset(seed, 150, 3, 4);
        let cfg = default_config(AlgorithmId::DecisionTree);
        let m = fit(AlgorithmId::DecisionTree, &cfg, &ds, None, seed).unwrap();
        assert_eq!(m.predict_label(ds.features()).unwrap(), ds.labels());
    }
}

#[test]
fn one_nn_reproduces_training_labels() {
    let ds = random_dataset(3, 80, 2, 3);
    for metric in ["euclidean", "manhattan"] {
        let cfg = default_config(AlgorithmId::Knn)
            .with("k", ParamValue::Int(1))
            .with("metric", ParamValue::Cat(metric.into()));
        let m = fit(AlgorithmId::Knn, &cfg, &ds, None, 0).unwrap();
        let p = m.predict_proba(ds.features()).unwrap();
        for (i, row) in p.iter_rows().enumerate() {
            let mut expect = vec![0.0; 3];
            expect[ds.labels()[i]] = 1.0;
            assert_eq!(row, expect.as_slice());
        }
    }
}

#[test]
fn probabilities_form_a_simplex() {
    let ds = random_dataset(11, 120, 4, 3);
    let probe = random_dataset(12, 40, 4, 3);
    for cfg in all_configs() {
        let m = fit(cfg.algorithm, &cfg, &ds, None, 5).unwrap();
        let p = m.predict_proba(probe.features()).unwrap();
        assert_eq!((p.rows(), p.cols()), (40, 3));
        for row in p.iter_rows() {
            assert!(row.iter().all(|&v| v >= 0.0), "{}", cfg.algorithm);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "{}", cfg.algorithm);
            if cfg.algorithm == AlgorithmId::HistGradientBoosting {
                assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }
}

#[test]
fn fitting_is_deterministic_in_bytes() {
    let ds = random_dataset(21, 200, 3, 3);
    let w = class_weights(&class_distribution(&ds)).unwrap();
    for cfg in all_configs() {
        let a = fit(cfg.algorithm, &cfg, &ds, Some(&w), 99).unwrap();
        let b = fit(cfg.algorithm, &cfg, &ds, Some(&w), 99).unwrap();
        assert_eq!(a.canonical_bytes(), b.canonical_bytes(), "{}", cfg.algorithm);
        assert_eq!(a.size_bytes(), a.canonical_bytes().len());
    }
}

#[test]
fn dimension_mismatch_is_a_shape_error() {
    let ds = random_dataset(1, 30, 3, 2);
    let cfg = default_config(AlgorithmId::Knn);
    let m = fit(AlgorithmId::Knn, &cfg, &ds, None, 0).unwrap();
    let err = m.predict_proba(&Matrix::zeros(2, 4)).unwrap_err();
    assert_eq!(err.code(), "E_SHAPE");
}

#[test]
fn single_class_and_invalid_config_are_rejected() {
    let x = Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let ds = LabeledDataset::with_default_names(x, vec![1, 1, 1, 1], names(2)).unwrap();
    let cfg = default_config(AlgorithmId::DecisionTree);
    assert!(matches!(
        fit(AlgorithmId::DecisionTree, &cfg, &ds, None, 0),
        Err(Error::DegenerateTraining)
    ));

    let ds = random_dataset(2, 20, 1, 2);
    let bad = default_config(AlgorithmId::Knn)
        .with("k", ParamValue::Int(500))
        .with("bogus", ParamValue::Int(1));
    match fit(AlgorithmId::Knn, &bad, &ds, None, 0) {
        Err(Error::SpaceViolation(list)) => {
            assert_eq!(list.len(), 2, "{list:?}");
            assert!(list[0].starts_with("k:") && list[1].starts_with("bogus:"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn argmax_breaks_ties_low() {
    let p = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5], vec![0.4, 0.4]]).unwrap();
    assert_eq!(argmax_rows(&p), vec![1, 0, 0]);
}

#[test]
fn identical_stumps_average_to_one_stump() {
    let ds = blobs(4, 40, 40);
    let cfg = default_config(AlgorithmId::DecisionTree).with("max_depth", ParamValue::Int(1));
    let stump = fit(AlgorithmId::DecisionTree, &cfg, &ds, None, 0).unwrap();
    let ModelState::DecisionTree(tree) = &stump.state else { panic!() };
    let trees: Vec<ClassificationTree> = vec![tree.clone(); 7];
    let forest = ForestModel::from_trees(2, trees);
    let mut out = vec![0.0; 2];
    for row in ds.features().iter_rows() {
        forest.predict_row(row, &mut out);
        for (a, b) in out.iter().zip(tree.predict_row(row)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn model_size_tracks_complexity() {
    let ds = random_dataset(6, 300, 3, 3);
    let mut last = 0;
    for depth in [1, 2, 4, 8, 16] {
        let cfg = default_config(AlgorithmId::DecisionTree).with("max_depth", ParamValue::Int(depth));
        let size = fit(AlgorithmId::DecisionTree, &cfg, &ds, None, 0).unwrap().size_bytes();
        assert!(size >= last, "depth {depth}: {size} < {last}");
        last = size;
    }
    let cfg = default_config(AlgorithmId::Knn);
    let sizes: Vec<usize> = [50, 100, 150]
        .iter()
        .map(|&n| {
            let sub = ds.subset(&(0..n).collect::<Vec<_>>());
            fit(AlgorithmId::Knn, &cfg, &sub, None, 0).unwrap().size_bytes()
        })
        .collect();
    assert!(sizes[0] < sizes[1]);
    assert_eq!(sizes[1] - sizes[0], sizes[2] - sizes[1]);
}

// ---- exhaustive greedy split search on raw values ----

fn gini(counts: &[f64]) -> f64 {
    let w: f64 = counts.iter().sum();
    if w == 0.0 {
        0.0
    } else {
        w - counts.iter().map(|c| c * c).sum::<f64>() / w
    }
}

fn class_counts(y: &[usize], rows: &[usize], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for &r in rows {
        out[y[r]] += 1.0;
    }
    out
}

fn oracle_loss(x: &Matrix, y: &[usize], c: usize, rows: Vec<usize>, depth: usize) -> f64 {
    let counts = class_counts(y, &rows, c);
    let parent = gini(&counts);
    let total = rows.len() as f64;
    if depth == 0 || counts.iter().filter(|&&v| v > 0.0).count() <= 1 {
        return parent;
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
            let score = gini(&class_counts(y, &l, c)) + gini(&class_counts(y, &r, c));
            if best.map_or(true, |b| score < b.0) {
                best = Some((score, f, t));
            }
        }
    }
    match best {
        Some((score, f, t)) if parent - score > 1e-12 * total.max(1.0) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
            oracle_loss(x, y, c, l, depth - 1) + oracle_loss(x, y, c, r, depth - 1)
        }
        _ => parent,
    }
}

fn model_loss(tree: &ClassificationTree, x: &Matrix, y: &[usize], c: usize) -> f64 {
    let mut leaves: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 0..x.rows() {
        let mut at = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = &tree.nodes()[at]
        {
            at = if x.get(i, *feature as usize) <= *threshold {
                *left as usize
            } else {
                *right as usize
            };
        }
        leaves.entry(at).or_insert_with(|| vec![0.0; c])[y[i]] += 1.0;
    }
    leaves.values().map(|counts| gini(counts)).sum()
}

#[test]
fn tree_matches_exhaustive_split_search() {
    for seed in 0..300u64 {
        let mut rng = seeded_indexed(seed, "oracle", 0);
        let n = rng.gen_range(4..=30);
        let d = rng.gen_range(1..=3);
        let c = rng.gen_range(2..=3);
        let ds = random_dataset(seed + 1000, n, d, c);
        for depth in [1, 2] {
            let cfg = default_config(AlgorithmId::DecisionTree).with("max_depth", ParamValue::Int(depth));
            let m = fit(AlgorithmId::DecisionTree, &cfg, &ds, None, 0).unwrap();
            let ModelState::DecisionTree(tree) = &m.state else { panic!() };
            let got = model_loss(tree, ds.features(), ds.labels(), c);
            let want = oracle_loss(ds.features(), ds.labels(), c, (0..n).collect(), depth as usize);
            assert!((got - want).abs() < 1e-9, "seed {seed} depth {depth}: {got} vs {want}");
        }
    }
}

// ---- class weighting ----

fn minority_recall(alg: AlgorithmId, cfg: &sutureml::space::Configuration, seed: u64, weighted: bool) -> f64 {
    let train = blobs(seed, 380, 20);
    let test = blobs(seed + 10_000, 950, 50);
    let w = class_weights(&class_distribution(&train)).unwrap();
    let m = fit(alg, cfg, &train, weighted.then_some(&w), seed).unwrap();
    let pred = m.predict_label(test.features()).unwrap();
    let hits = pred.iter().zip(test.labels()).filter(|(p, y)| **y == 1 && **p == 1).count();
    hits as f64 / 50.0
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn class_weights_raise_minority_recall() {
    let configs = [
        default_config(AlgorithmId::DecisionTree)
            .with("max_depth", ParamValue::Int(4))
            .with("min_samples_leaf", ParamValue::Int(8)),
        default_config(AlgorithmId::RandomForest)
            .with("n_trees", ParamValue::Int(32))
            .with("min_samples_leaf", ParamValue::Int(8)),
        default_config(AlgorithmId::Knn).with("k", ParamValue::Int(15)),
        default_config(AlgorithmId::HistGradientBoosting).with("n_rounds", ParamValue::Int(32)),
    ];
    for cfg in &configs {
        let seeds = 0..11u64;
        let plain = median(seeds.clone().map(|s| minority_recall(cfg.algorithm, cfg, s, false)).collect());
        let weighted = median(seeds.map(|s| minority_recall(cfg.algorithm, cfg, s, true)).collect());
        assert!(weighted >= plain, "{}: weighted {weighted} < plain {plain}", cfg.algorithm);
    }
}

#[test]
fn forest_beats_majority_baseline_on_synthetic_actions() {
    let (train, test) = synth_generate(&SynthProfile::default(), 3).unwrap();
    let cfg = default_config(AlgorithmId::RandomForest).with("n_trees", ParamValue::Int(64));
    let m = fit(AlgorithmId::RandomForest, &cfg, &train, None, 3).unwrap();
    let pred = m.predict_label(test.features()).unwrap();
    let acc = pred.iter().zip(test.labels()).filter(|(p, y)| p == y).count() as f64 / test.n_samples() as f64;
    let dist = class_distribution(&test);
    let majority = *dist.counts.iter().max().unwrap() as f64 / dist.total as f64;
    assert!(acc > majority, "accuracy {acc} vs majority {majority}");
}
