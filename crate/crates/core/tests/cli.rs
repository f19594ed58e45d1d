mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use fkp::imagecore::{read_binary, write_gray};
use fkp::{FingerLabel, GrayImage};

fn fkp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkp"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SYNTH_ROI: [&str; 4] = ["--roi-w", "88", "--roi-h", "60"];

/// Reads tp_rate from the aggregate row of a report CSV.
fn aggregate_tp(csv_path: &Path) -> f64 {
    let text = std::fs::read_to_string(csv_path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "tp_rate").unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("all,"));
    last.split(',').nth(col).unwrap().parse().unwrap()
}

#[test]
fn preprocess_constant_frame_is_empty_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.pgm");
    write_gray(&GrayImage::filled(384, 288, 128), &input).unwrap();

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let prefix = dir.path().join(run);
        let o = fkp(&[
            "preprocess",
            "--input",
            s(&input),
            "--out-prefix",
            s(&prefix),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let shadow = dir.path().join(format!("{run}_shadow.pbm"));
        let light = dir.path().join(format!("{run}_light.pbm"));
        for path in [&shadow, &light] {
            let t = read_binary(path).unwrap();
            assert_eq!((t.width(), t.height()), (220, 110));
            assert!(t.is_empty());
        }
        outputs.push((
            std::fs::read(&shadow).unwrap(),
            std::fs::read(&light).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn enroll_then_identify_exact_probe() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let images = separable_images(61, 3, 2);
    write_dataset(&data, FingerLabel::LeftMiddle, &images);
    let gallery = dir.path().join("gallery");

    let mut args = vec!["enroll", "--gallery", s(&gallery), "--dataset", s(&data)];
    args.extend(SYNTH_ROI);
    let o = fkp(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("enrolled 6 sample(s)"));

    let probe = data.join("left-middle").join("s01").join("2.pgm");
    let o = fkp(&[
        "identify",
        "--gallery",
        s(&gallery),
        "--probe",
        s(&probe),
        "--measure",
        "hd",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert_eq!(first, "best: s01 left-middle 2 score 0.0000");

    // a single extra sample appends to the existing gallery
    let extra = dir.path().join("extra.pgm");
    write_gray(&images[0].2, &extra).unwrap();
    let o = fkp(&[
        "enroll",
        "--gallery",
        s(&gallery),
        "--input",
        s(&extra),
        "--subject",
        "new",
        "--finger",
        "left-middle",
        "--session",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("now holds 7"));
}

#[test]
fn identify_needs_a_populated_gallery() {
    let dir = tempfile::tempdir().unwrap();
    let probe = dir.path().join("p.pgm");
    write_gray(&GrayImage::filled(220, 110, 90), &probe).unwrap();

    let o = fkp(&["identify", "--gallery", s(dir.path()), "--probe", s(&probe)]);
    assert!(!o.status.success());

    let gallery = dir.path().join("g");
    fkp::Gallery::default().save(&gallery).unwrap();
    let o = fkp(&["identify", "--gallery", s(&gallery), "--probe", s(&probe)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("empty"));
}

#[test]
fn evaluate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, FingerLabel::RightIndex, &separable_images(62, 4, 3));
    let report = dir.path().join("report.csv");
    let mut args = vec![
        "evaluate",
        "--dataset",
        s(&data),
        "--workers",
        "2",
        "--report-out",
        s(&report),
    ];
    args.extend(SYNTH_ROI);
    let o = fkp(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(aggregate_tp(&report), 100.0);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("right-index,cd,4,12,12,132,"));
}

#[test]
fn missing_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let missing = dir.path().join("nowhere");
    let o = fkp(&[
        "evaluate",
        "--dataset",
        s(&missing),
        "--report-out",
        s(&report),
    ]);
    assert!(!o.status.success());
    assert!(!report.exists());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));
}

#[test]
fn chamfer_beats_mean_absolute_on_shifted_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, FingerLabel::LeftIndex, &mixed_density_images(77));
    let mut tp = Vec::new();
    for measure in ["ma", "cd"] {
        let report = dir.path().join(format!("{measure}.csv"));
        let mut args = vec![
            "evaluate",
            "--dataset",
            s(&data),
            "--measure",
            measure,
            "--report-out",
            s(&report),
        ];
        args.extend(SYNTH_ROI);
        let o = fkp(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        tp.push(aggregate_tp(&report));
    }
    assert!(tp[0] < tp[1], "ma {} vs cd {}", tp[0], tp[1]);
}

#[test]
fn bench_reports_every_measure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, FingerLabel::LeftIndex, &separable_images(63, 2, 2));
    let mut args = vec!["bench", "--dataset", s(&data), "--pairs", "5"];
    args.extend(SYNTH_ROI);
    let o = fkp(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text
        .lines()
        .any(|l| l.starts_with("Mean Absolute") && l.trim_end().ends_with("1.0000")));
}

#[test]
fn bad_flags_are_rejected() {
    assert!(!fkp(&[
        "identify",
        "--gallery",
        "g",
        "--probe",
        "p",
        "--measure",
        "xx"
    ])
    .status
    .success());
    assert!(!fkp(&["evaluate", "--dataset", "d", "--tau", "-1"])
        .status
        .success());
    assert!(!fkp(&["evaluate", "--dataset", "d", "--shadow-d", "0"])
        .status
        .success());
}
