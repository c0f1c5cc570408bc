use std::fs;
use std::path::Path;
use std::process::Command;

use chronowarp_cli::csvio::Table;
use chronowarp_cli::pipeline::{self, files};
use chronowarp_cli::ExperimentConfig;

const SMALL: &str = r#"
[model]
name = "rigid_body"

[grid]
horizon = 8.0
train_horizon = 30.0

[design]
n = 15

[surrogate]
p_max = 5
n_frozen = 25
p_max_frozen = 4
n_mc = 150

[validation]
n_val = 60
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chronowarp"))
}

/// Every output file except the timings, by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != files::TIMINGS)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn assert_same(a: &Path, b: &Path) {
    let (sa, sb) = (snapshot(a), snapshot(b));
    let names = |s: &[(String, Vec<u8>)]| s.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
    assert_eq!(names(&sa), names(&sb));
    for (fa, fb) in sa.iter().zip(&sb) {
        assert!(fa.1 == fb.1, "{} differs", fa.0);
    }
}

#[test]
fn reruns_and_stepwise_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.toml");
    fs::write(&cfg_path, SMALL).unwrap();
    let cfg = ExperimentConfig::from_file(&cfg_path, None).unwrap();

    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    pipeline::run_experiment(&cfg, &first).unwrap();
    pipeline::run_experiment(&cfg, &second).unwrap();
    assert_same(&first, &second);

    for f in pipeline::expected_files(&cfg) {
        assert!(first.join(&f).exists(), "{} missing", f.display());
        if f.extension().is_some_and(|e| e == "csv") {
            let t = Table::read(&first.join(&f)).unwrap();
            assert!(t.rows() > 0, "{}", f.display());
        }
    }
    assert!(first.join(files::TIMINGS).exists());

    // The subcommands chained through the files give the same bytes.
    let stepwise = tmp.path().join("stepwise");
    for sub in ["simulate", "fit", "stats", "validate", "report"] {
        let status = bin()
            .args([sub, "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&stepwise)
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        assert!(status.success(), "{sub}");
    }
    assert_same(&first, &stepwise);

    // Re-running from the effective configuration changes nothing.
    let again = tmp.path().join("again");
    let effective = ExperimentConfig::from_file(&first.join(files::CONFIG), None).unwrap();
    pipeline::run_experiment(&effective, &again).unwrap();
    assert_same(&first, &again);

    // A different seed gives different data.
    let other = tmp.path().join("other");
    let reseeded = ExperimentConfig::from_file(&cfg_path, Some(1)).unwrap();
    pipeline::run_experiment(&reseeded, &other).unwrap();
    assert_ne!(
        fs::read(first.join(files::DESIGN)).unwrap(),
        fs::read(other.join(files::DESIGN)).unwrap()
    );

    // Prediction at a training input reproduces the stored trajectory.
    let output = bin()
        .args(["predict", "--out"])
        .arg(&first)
        .args(["--input", "-0.25"])
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,warping,frozen"));
    assert_eq!(lines.count(), cfg.grid().len());

    let summary: pipeline::Summary =
        serde_json::from_str(&fs::read_to_string(first.join(files::SUMMARY)).unwrap()).unwrap();
    let w = summary.warping.unwrap();
    assert!(w.exceedance <= 0.1, "{}", w.exceedance);
    assert_eq!(w.score_loo.len(), w.retained);
}

#[test]
fn method_selection_limits_the_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let src = SMALL.replace("p_max = 5", "p_max = 5\nmethod = \"frozen\"");
    let cfg = ExperimentConfig::from_toml(&src).unwrap();
    let out = tmp.path().join("frozen");
    let summary = pipeline::run_experiment(&cfg, &out).unwrap();
    assert!(summary.warping.is_none());
    let f = summary.frozen.unwrap();
    assert!(f.loo_median_late > f.loo_median_early);
    assert!(!out.join(files::WARP_PARAMS).exists());
    for name in pipeline::expected_files(&cfg) {
        assert!(out.join(&name).exists(), "{}", name.display());
    }
}

#[test]
fn exit_codes_distinguish_config_and_pipeline_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[model]\nname = \"rigid_body\"\n[grid]\nhorizn = 3.0\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("horizn") && err.contains("line 4"), "{err}");

    // Fitting before simulating has no ensemble to read.
    let good = tmp.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    let out = bin()
        .args(["fit", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(tmp.path().join("empty"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("design.csv"));

    // Wrong input dimension for prediction.
    let run = tmp.path().join("run");
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    pipeline::run_experiment(&cfg, &run).unwrap();
    let out = bin()
        .args(["predict", "--out"])
        .arg(&run)
        .args(["--input", "0.1,0.2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["report"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.toml");
    fs::write(&cfg_path, SMALL).unwrap();
    let mut dirs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .env("CHRONOWARP_THREADS", threads)
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        assert!(status.success());
        dirs.push(out);
    }
    assert_same(&dirs[0], &dirs[1]);
}
