use std::collections::BTreeSet;

use hwr_core::dataset::{make_splits, SplitSizes};
use hwr_core::features::{FeatureConfig, WeightMode};
use hwr_core::harness::{
    self, evaluate, extract_table, fit, labels_for, predict, Corpus, ExperimentConfig, Mode,
    Prediction, Selection, SplitTag, IMPOSSIBLE_LABEL,
};
use hwr_core::oracle::synthetic_corpus;
use hwr_core::recognizer::{Lexicon, RecognitionResult, RecognizeError};
use proptest::prelude::*;

fn synthetic_features() -> FeatureConfig {
    FeatureConfig {
        window_width: 4,
        cells: 4,
        bins: 5,
        weight_mode: WeightMode::Unit,
        stride: 2,
        standard_height: 32,
    }
}

fn synthetic_config(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("unused", out);
    cfg.inventory = None;
    cfg.base_features = synthetic_features();
    cfg.window_widths = vec![4];
    cfg.cell_counts = vec![4];
    cfg.state_counts = vec![2];
    cfg.mixture_counts = vec![1];
    cfg.iterations_per_level = 3;
    cfg
}

fn corpus(samples: usize, jitter: std::ops::RangeInclusive<i32>) -> Corpus {
    let c = synthetic_corpus(samples, jitter, 21);
    Corpus {
        dataset: c.dataset,
        schema: Some(c.schema),
        supplementary: None,
    }
}

proptest! {
    #[test]
    fn split_roles_are_disjoint_and_test_is_shared(
        train in 1usize..10, val in 1usize..5, test in 0usize..6, folds in 1usize..4, extra in 0usize..6, seed in any::<u64>()
    ) {
        let n = (train + val * folds).max(train + val) + test + extra;
        let plans = make_splits(n, SplitSizes::new(train, val, test), folds, seed).unwrap();
        prop_assert_eq!(plans.len(), folds);
        let mut validation_seen = BTreeSet::new();
        for p in &plans {
            let (tr, va, te): (BTreeSet<_>, BTreeSet<_>, BTreeSet<_>) = (
                p.train.iter().copied().collect(),
                p.validation.iter().copied().collect(),
                p.test.iter().copied().collect(),
            );
            prop_assert_eq!(tr.len(), train);
            prop_assert_eq!(va.len(), val);
            prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
            prop_assert!(p.train.iter().chain(&p.validation).chain(&p.test).all(|&o| o < n));
            prop_assert_eq!(&p.test, &plans[0].test);
            for &v in &p.validation {
                prop_assert!(validation_seen.insert(v), "validation ordinal {} reused across folds", v);
            }
        }
        prop_assert_eq!(make_splits(n, SplitSizes::new(train, val, test), folds, seed).unwrap(), plans);
    }
}

#[test]
fn infeasible_splits_are_rejected() {
    assert!(make_splits(10, SplitSizes::new(8, 2, 2), 1, 0).is_err());
    assert!(make_splits(25, SplitSizes::new(15, 5, 5), 5, 0).is_err());
    assert!(make_splits(25, SplitSizes::new(12, 0, 13), 2, 0).is_err());
    assert!(make_splits(25, SplitSizes::standard(), 4, 0).is_ok());
}

#[test]
fn cache_is_transparent_and_self_healing() {
    let c = corpus(4, -1..=2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_features();
    let fresh = extract_table(&c.dataset, &cfg, None).unwrap();
    let cold = extract_table(&c.dataset, &cfg, Some(dir.path())).unwrap();
    let warm = extract_table(&c.dataset, &cfg, Some(dir.path())).unwrap();
    assert_eq!(fresh, cold);
    assert_eq!(fresh, warm);

    // clobber every entry; the next run must notice and rebuild
    let mut entries = 0;
    for sub in std::fs::read_dir(dir.path()).unwrap() {
        for f in std::fs::read_dir(sub.unwrap().path()).unwrap() {
            std::fs::write(f.unwrap().path(), b"garbage").unwrap();
            entries += 1;
        }
    }
    assert_eq!(entries, c.dataset.len());
    assert_eq!(
        extract_table(&c.dataset, &cfg, Some(dir.path())).unwrap(),
        fresh
    );
    assert_eq!(
        extract_table(&c.dataset, &cfg, Some(dir.path())).unwrap(),
        fresh
    );

    // a different configuration never reads these entries
    let other = FeatureConfig { cells: 2, ..cfg };
    assert_eq!(
        extract_table(&c.dataset, &other, Some(dir.path())).unwrap(),
        extract_table(&c.dataset, &other, None).unwrap()
    );
}

#[test]
fn memorized_training_data_is_recognized_perfectly() {
    // without jitter every sample of a character is the same image
    let c = corpus(3, 0..=0);
    let table = extract_table(&c.dataset, &synthetic_features(), None).unwrap();
    let ids: Vec<String> = c.dataset.character_ids().map(str::to_string).collect();
    for mode in [Mode::Monolithic, Mode::Decomposed] {
        let labels = labels_for(&c, mode).unwrap();
        let ordinals = [0, 1, 2];
        let sel = Selection {
            table: &table,
            ordinals: &ordinals,
        };
        let (_, models) = fit(&labels, &ids, &[sel], 2, &[1], 3)
            .unwrap()
            .pop()
            .unwrap();
        let metrics = evaluate(
            &predict(&models, &Lexicon::new(labels), &ids, sel).unwrap(),
            SplitTag::Train,
        )
        .unwrap();
        assert_eq!(
            metrics.accuracy,
            1.0,
            "{mode:?}: {:?}",
            metrics.errors().collect::<Vec<_>>()
        );
    }
}

#[test]
fn unalignable_samples_count_as_errors() {
    let hit = |truth: &str, got: &str| Prediction {
        truth: truth.into(),
        outcome: Ok(RecognitionResult {
            character_id: got.into(),
            log_likelihood: -1.0,
            boundaries: vec![],
            n_best: vec![(got.into(), -1.0)],
        }),
    };
    let preds = vec![
        hit("a", "a"),
        hit("a", "b"),
        hit("b", "b"),
        Prediction {
            truth: "b".into(),
            outcome: Err(RecognizeError::AllImpossible { frames: 1 }),
        },
    ];
    let m = evaluate(&preds, SplitTag::Test).unwrap();
    assert_eq!((m.correct, m.total), (2, 4));
    assert_eq!(m.accuracy, 0.5);
    assert_eq!(m.per_character["b"], (1, 2));
    assert_eq!(
        m.confusion[&("b".to_string(), IMPOSSIBLE_LABEL.to_string())],
        1
    );
    let row_sum: usize = m
        .confusion
        .iter()
        .filter(|((t, _), _)| t == "a")
        .map(|(_, n)| n)
        .sum();
    assert_eq!(row_sum, 2);
    assert_eq!(m.errors().count(), 2);
    assert!(evaluate(&[], SplitTag::Test).is_err());
}

#[test]
fn learning_curve_has_one_point_per_size() {
    let c = corpus(25, -1..=3);
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path());
    let points = harness::learning_curve_on(&cfg, &c, &[15, 5, 10]).unwrap();
    let sizes: Vec<usize> = points.iter().map(|p| p.n_train).collect();
    assert_eq!(sizes, [5, 10, 15]);
    for p in &points {
        for acc in [
            p.train_accuracy,
            p.test_accuracy,
            p.validation_accuracy.unwrap(),
        ] {
            assert!((0.0..=1.0).contains(&acc));
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("learning_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let svg = std::fs::read_to_string(dir.path().join("learning_curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn grid_search_writes_reports_and_selects_a_point() {
    let c = corpus(10, -1..=3);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path());
    cfg.mixture_counts = vec![1, 2];
    cfg.split = SplitSizes::new(5, 2, 3);
    cfg.n_folds = 2;
    let report = harness::run_experiment_on(&cfg, &c).unwrap();
    assert_eq!(report.validation.len(), 2);
    assert!(report.validation.contains_key(&report.selected));
    assert_eq!(report.test.total, 9 * 3);
    for name in [
        "metrics.csv",
        "confusion.csv",
        "model.bundle",
        "summary.txt",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    // 2 folds × 2 points of validation rows, then final train and test rows
    assert_eq!(metrics.lines().count(), 1 + 4 + 2);
    let bundle = harness::load_bundle(&dir.path().join("model.bundle")).unwrap();
    assert_eq!(bundle.models, report.models);
}

#[test]
fn invalid_configurations_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path());
    cfg.mixture_counts = vec![3];
    assert!(cfg.validate().is_err());
    let mut cfg = synthetic_config(dir.path());
    cfg.cell_counts = vec![64];
    assert!(cfg.validate().is_err());
    let c = Corpus {
        schema: None,
        ..corpus(2, 0..=0)
    };
    assert!(labels_for(&c, Mode::Decomposed).is_err());
    assert!(labels_for(&c, Mode::Monolithic).is_ok());
}
