//! CSV, SVG and plain-text report writers. Accuracies are printed with a
//! fixed number of decimals so reruns compare byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    Comparison, Corpus, ExperimentConfig, GridPoint, LearningCurvePoint, Metrics, Mode, SplitTag,
    REFERENCE_DCT_NN, REFERENCE_DECOMPOSED, REFERENCE_MONOLITHIC, REFERENCE_SUPPLEMENTED,
    REFERENCE_VALIDATION,
};

pub const METRICS_HEADER: &str = "fold,mode,w,h,S,G,split,accuracy,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// Fold index, or `final` for the selected model's train and test rows.
    pub fold: String,
    pub mode: Mode,
    pub point: GridPoint,
    pub split: SplitTag,
    pub accuracy: f64,
    pub seconds: Option<f64>,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let secs = r.seconds.map(|s| format!("{s:.3}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{}",
            r.fold, r.mode, r.point.w, r.point.h, r.point.s, r.point.g, r.split, r.accuracy, secs
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `run,split,truth,predicted,count`, one line per confusion cell.
pub fn confusion_csv(runs: &[(&str, &Metrics)]) -> String {
    let mut out = String::from("run,split,truth,predicted,count\n");
    for (run, m) in runs {
        for ((t, p), n) in &m.confusion {
            let _ = writeln!(
                out,
                "{},{},{},{},{n}",
                csv_field(run),
                m.split,
                csv_field(t),
                csv_field(p)
            );
        }
    }
    out
}

pub fn learning_curve_csv(points: &[LearningCurvePoint]) -> String {
    let mut out = String::from("n_train,train_accuracy,validation_accuracy,test_accuracy\n");
    for p in points {
        let val = p
            .validation_accuracy
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.6},{},{:.6}",
            p.n_train, p.train_accuracy, val, p.test_accuracy
        );
    }
    out
}

/// Line plot of accuracy (percent) against training samples per character.
pub fn learning_curve_svg(points: &[LearningCurvePoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 140.0;
    const T: f64 = 30.0;
    const B: f64 = 50.0;
    let x_max = points.iter().map(|p| p.n_train).max().unwrap_or(1).max(1) as f64;
    let x = |n: usize| L + (W - L - R) * n as f64 / x_max;
    let y = |acc: f64| T + (H - T - B) * (1.0 - acc);

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<path d=\"M{L},{T} V{} H{}\" stroke=\"black\" fill=\"none\"/>",
        H - B,
        W - R
    );
    for tick in 0..=5 {
        let acc = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{:.1}\" x2=\"{L}\" y2=\"{:.1}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            L - 4.0,
            y(acc),
            y(acc),
            L - 8.0,
            y(acc) + 4.0,
            tick * 20
        );
    }
    for p in points {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x(p.n_train),
            H - B + 18.0,
            p.n_train
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">training samples per character</text>",
        (L + W - R) / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">accuracy (%)</text>",
        H / 2.0,
        H / 2.0
    );

    type Series<'a> = (&'a str, &'a str, Vec<(usize, f64)>);
    let series: [Series; 3] = [
        (
            "train",
            "#1f77b4",
            points
                .iter()
                .map(|p| (p.n_train, p.train_accuracy))
                .collect(),
        ),
        (
            "validation",
            "#2ca02c",
            points
                .iter()
                .filter_map(|p| p.validation_accuracy.map(|v| (p.n_train, v)))
                .collect(),
        ),
        (
            "test",
            "#d62728",
            points
                .iter()
                .map(|p| (p.n_train, p.test_accuracy))
                .collect(),
        ),
    ];
    for (k, (name, colour, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(n, a)| format!("{:.1},{:.1}", x(n), y(a)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" stroke=\"{colour}\" fill=\"none\" stroke-width=\"2\"/>",
            coords.join(" ")
        );
        for &(n, a) in pts {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{colour}\"/>",
                x(n),
                y(a)
            );
        }
        let ly = T + 20.0 * k as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{colour}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{name}</text>",
            W - R + 15.0,
            W - R + 40.0,
            W - R + 45.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Only the grid search cross-validates, so only it reports folds.
fn header(cfg: &ExperimentConfig, what: &str, folds: bool) -> String {
    let folds = if folds {
        format!(" over {} folds", cfg.n_folds)
    } else {
        String::new()
    };
    format!(
        "{what}\nseed: {}\nmode: {}\ndataset: {}\nsplit: {}/{}/{}{folds}\nfeatures: bins {}, {} weighting, stride {}, height {}\n\n",
        cfg.seed,
        cfg.mode,
        cfg.dataset_root.display(),
        cfg.split.train,
        cfg.split.validation,
        cfg.split.test,
        cfg.base_features.bins,
        cfg.base_features.weight_mode.as_str(),
        cfg.base_features.stride,
        cfg.base_features.standard_height,
    )
}

pub(super) fn experiment_summary(
    cfg: &ExperimentConfig,
    validation: &BTreeMap<GridPoint, f64>,
    selected: GridPoint,
    train: &Metrics,
    test: &Metrics,
) -> String {
    let mut s = header(cfg, "grid search", true);
    if !validation.is_empty() {
        s.push_str("mean validation accuracy (%)\n   w   h   S   G  accuracy\n");
        for (p, acc) in validation {
            let _ = writeln!(
                s,
                "{:>4}{:>4}{:>4}{:>4}  {:>8}",
                p.w,
                p.h,
                p.s,
                p.g,
                pct(*acc)
            );
        }
        let reference = GridPoint {
            w: 8,
            h: 8,
            s: 10,
            g: 4,
        };
        if let Some(acc) = validation.get(&reference) {
            let _ = writeln!(
                s,
                "\nS=10 G=4 w=8 h=8: {} (published reference {REFERENCE_VALIDATION:.2}, difference {:+.2})",
                pct(*acc),
                100.0 * acc - REFERENCE_VALIDATION
            );
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "selected: w={} h={} S={} G={}\ntrain accuracy: {} ({}/{})\ntest accuracy: {} ({}/{})",
        selected.w,
        selected.h,
        selected.s,
        selected.g,
        pct(train.accuracy),
        train.correct,
        train.total,
        pct(test.accuracy),
        test.correct,
        test.total
    );
    s
}

pub(super) fn comparison_table(
    cfg: &ExperimentConfig,
    cmp: &Comparison,
    corpus: &Corpus,
) -> String {
    let mut s = header(cfg, "monolithic versus decomposed models", false);
    let excluded = corpus
        .schema
        .as_ref()
        .map(|sc| {
            corpus
                .dataset
                .character_ids()
                .filter(|id| sc.decompose(id).is_none())
                .count()
        })
        .unwrap_or(0);
    let _ = writeln!(
        s,
        "point: w={} h={} S={} G={}\ncharacters: {} ({} without a decomposition use whole-character models in both columns)\n",
        cmp.point.w,
        cmp.point.h,
        cmp.point.s,
        cmp.point.g,
        corpus.dataset.groups.len(),
        excluded
    );
    let rows = [
        (
            "DCT features + neural network",
            "reference",
            REFERENCE_DCT_NN,
        ),
        (
            "HMM, one model per character",
            "reference",
            REFERENCE_MONOLITHIC,
        ),
        (
            "HMM, implicit segmentation",
            "reference",
            REFERENCE_DECOMPOSED,
        ),
        (
            "HMM, one model per character",
            "measured",
            100.0 * cmp.monolithic.accuracy,
        ),
        (
            "HMM, implicit segmentation",
            "measured",
            100.0 * cmp.decomposed.accuracy,
        ),
    ];
    let _ = writeln!(s, "{:<32}{:<11}{:>10}", "system", "source", "accuracy");
    for (name, src, acc) in rows {
        let _ = writeln!(s, "{name:<32}{src:<11}{acc:>10.2}");
    }
    let _ = writeln!(
        s,
        "\nmeasured gap: {:+.2} points (reference gap {:+.2})",
        cmp.gap(),
        REFERENCE_DECOMPOSED - REFERENCE_MONOLITHIC
    );
    if cmp.gap() < 0.0 {
        s.push_str("note: decomposed mode did not reach monolithic accuracy on this split\n");
    }
    s
}

pub(super) fn curve_summary(
    cfg: &ExperimentConfig,
    point: GridPoint,
    points: &[LearningCurvePoint],
    supplemented: bool,
) -> String {
    let mut s = header(cfg, "learning curve", false);
    let _ = writeln!(
        s,
        "point: w={} h={} S={} G={}\n\nn_train     train  validation      test",
        point.w, point.h, point.s, point.g
    );
    for p in points {
        let _ = writeln!(
            s,
            "{:>7}{:>10}{:>12}{:>10}",
            p.n_train,
            pct(p.train_accuracy),
            p.validation_accuracy.map(pct).unwrap_or_else(|| "-".into()),
            pct(p.test_accuracy)
        );
    }
    if supplemented {
        if let Some(last) = points.last() {
            let _ = writeln!(
                s,
                "\nwith supplementary samples: test {} (published reference {REFERENCE_SUPPLEMENTED:.2})",
                pct(last.test_accuracy)
            );
        }
    }
    s
}
