use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hwr(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hwr"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "hwr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path, samples: &str) -> PathBuf {
    let data = dir.join("data");
    hwr(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--samples",
        samples,
        "--seed",
        "3",
    ]);
    assert!(data.join("manifest.tsv").is_file());
    assert!(data.join("schema.tsv").is_file());
    data
}

/// Small synthetic-scale settings shared by every experiment command.
fn experiment<'a>(data: &'a str, schema: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "--data",
        data,
        "--schema",
        schema,
        "--inventory",
        "any",
        "--mode",
        "decomposed",
        "--seed",
        "1",
        "--out",
        out,
        "-w",
        "4",
        "--cells",
        "4",
        "-S",
        "2",
        "-G",
        "1",
        "--stride",
        "2",
        "--height",
        "32",
        "--iterations",
        "2",
    ];
    v.extend_from_slice(extra);
    v
}

fn first_image(data: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.remove(0)
}

#[test]
fn train_then_recognize_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "8");
    let schema = data.join("schema.tsv");
    let out = dir.path().join("run");
    let (d, s, o) = (
        data.to_str().unwrap(),
        schema.to_str().unwrap(),
        out.to_str().unwrap(),
    );

    hwr(&[
        &["train"],
        experiment(d, s, o, &["--split", "5/0/3", "--folds", "1"]).as_slice(),
    ]
    .concat());
    let bundle = out.join("model.bundle");
    assert!(bundle.is_file());

    let image = first_image(&data);
    let text = stdout(&hwr(&[
        "recognize",
        "--bundle",
        bundle.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
    ]));
    assert!(text.starts_with("character\t"));
    assert!(text.lines().any(|l| l.starts_with("boundaries\t")));
    let tsv = stdout(&hwr(&[
        "recognize",
        "--bundle",
        bundle.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--format",
        "tsv",
        "--n-best",
        "2",
    ]));
    assert_eq!(tsv.lines().count(), 1);
    assert_eq!(tsv.trim_end().split('\t').count(), 5);

    let eval = stdout(&hwr(&[
        &["evaluate", "--bundle", bundle.to_str().unwrap()],
        experiment(d, s, o, &["--split", "5/0/3", "--folds", "1"]).as_slice(),
    ]
    .concat()));
    assert!(eval.starts_with("test accuracy"), "{eval}");
}

#[test]
fn grid_and_learning_curve_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "10");
    let schema = data.join("schema.tsv");
    let (grid, curve) = (dir.path().join("grid"), dir.path().join("curve"));
    let (d, s) = (data.to_str().unwrap(), schema.to_str().unwrap());

    let summary = stdout(&hwr(&[
        &["grid"],
        experiment(
            d,
            s,
            grid.to_str().unwrap(),
            &["--split", "5/2/3", "--folds", "2", "-G", "1,2"],
        )
        .as_slice(),
    ]
    .concat()));
    assert!(!summary.is_empty());
    let metrics = std::fs::read_to_string(grid.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("fold,mode,w,h,S,G,split,accuracy,seconds"));
    assert!(grid.join("cache").is_dir());

    hwr(&[
        &["learning-curve", "--n-train", "2,4"],
        experiment(d, s, curve.to_str().unwrap(), &["--split", "4/2/3"]).as_slice(),
    ]
    .concat());
    let csv = std::fs::read_to_string(curve.join("learning_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_hwr"))
        .args([
            "train",
            "--data",
            "/nonexistent",
            "--mode",
            "monolithic",
            "--seed",
            "0",
            "--out",
            "/tmp/x",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = Command::new(env!("CARGO_BIN_EXE_hwr"))
        .args([
            "grid",
            "--data",
            "d",
            "--mode",
            "decomposed",
            "--seed",
            "0",
            "--out",
            "o",
            "--split",
            "1/2",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
