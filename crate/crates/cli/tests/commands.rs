use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fan_cli::commands::relative_error_reduction;

const SPEC: &str = "seed = 9\nclasses = 2\nduration_s = 0.3\n\n\
    [[subsets]]\nname = \"s\"\nsplit = \"train\"\nutterances = 12\nplayback_fraction = 0.25\n\n\
    [[subsets]]\nname = \"s\"\nsplit = \"dev\"\nutterances = 4\nplayback_fraction = 0.5\n\n\
    [[subsets]]\nname = \"s\"\nsplit = \"test\"\nutterances = 4\nplayback_fraction = 0.5\n";

fn fan<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_fan")).args(args).output().unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.toml");
    std::fs::write(&spec, SPEC).unwrap();
    let out = dir.join("corpus");
    ok(fan([
        OsStr::new("simulate"),
        "--spec".as_ref(),
        spec.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]));
    out
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split([',', '\t']).map(str::to_owned).collect())
        .collect()
}

#[test]
fn counts_agree_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let manifest = data_rows(&c.join("manifest.tsv"));
    assert_eq!(manifest.len(), 20);
    let counts = data_rows(&c.join("counts.csv"));
    let total: usize = counts.iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    assert_eq!(total, manifest.len());
    let playback: usize = counts
        .iter()
        .filter(|r| r[2] == "1")
        .map(|r| r[3].parse::<usize>().unwrap())
        .sum();
    assert_eq!(playback, manifest.iter().filter(|r| r[3] == "1").count());
    assert_eq!(playback, 3 + 2 + 2);
    for r in &manifest {
        assert!(c.join(&r[0]).is_file(), "{}", r[0]);
    }
}

#[test]
fn self_baseline_has_zero_error_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path()).join("manifest.tsv");
    let model = dir.path().join("out").join("m.fanm");
    let report = dir.path().join("report.csv");
    ok(fan([
        OsStr::new("train"),
        "--variant".as_ref(),
        "fan-max".as_ref(),
        "--epochs".as_ref(),
        "1".as_ref(),
        "--manifest".as_ref(),
        manifest.as_os_str(),
        "--out".as_ref(),
        model.as_os_str(),
    ]));
    assert!(model.with_extension("fanm.metrics.csv").is_file());
    ok(fan([
        OsStr::new("eval"),
        "--manifest".as_ref(),
        manifest.as_os_str(),
        "--checkpoint".as_ref(),
        model.as_os_str(),
        "--baseline-checkpoint".as_ref(),
        model.as_os_str(),
        "--out".as_ref(),
        report.as_os_str(),
    ]));
    let rows = data_rows(&report);
    assert!(!rows.is_empty());
    for r in rows.iter().filter(|r| r[2] != "0") {
        assert_eq!(r[3], r[4]);
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
    }
    let wrong = fan([
        OsStr::new("eval"),
        "--variant".as_ref(),
        "bat-at".as_ref(),
        "--manifest".as_ref(),
        manifest.as_os_str(),
        "--checkpoint".as_ref(),
        model.as_os_str(),
    ]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn empty_corpus_simulates_but_cannot_train() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("empty.toml");
    std::fs::write(&spec, "subsets = []\n").unwrap();
    let out = dir.path().join("c");
    ok(fan([
        OsStr::new("simulate"),
        "--spec".as_ref(),
        spec.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]));
    assert!(data_rows(&out.join("manifest.tsv")).is_empty());
    let manifest = out.join("manifest.tsv");
    let model = dir.path().join("m.fanm");
    let o = fan([
        OsStr::new("train"),
        "--variant".as_ref(),
        "raw1ch".as_ref(),
        "--manifest".as_ref(),
        manifest.as_os_str(),
        "--out".as_ref(),
        model.as_os_str(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!model.exists());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(fan(["params", "--variant", "nope"]).status.code(), Some(1));
    assert_eq!(fan(["frobnicate"]).status.code(), Some(1));
    assert_eq!(fan(["beampattern", "--diagonal-loading", "-1"]).status.code(), Some(1));
    assert_eq!(fan(["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_with_two() {
    let o = fan([
        "eval",
        "--manifest",
        "/nonexistent/m.tsv",
        "--checkpoint",
        "/nonexistent/c.fanm",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_command_reports_pass() {
    let out = ok(fan(["gradcheck", "--variant", "bat-fan-max"]));
    assert!(out.contains("bat-fan-max"), "{out}");
}

#[test]
fn error_reduction_edge_cases() {
    assert!((relative_error_reduction(0.9, 0.8) - 0.5).abs() < 1e-12);
    assert!((relative_error_reduction(0.7, 0.8) + 0.5).abs() < 1e-12);
    assert_eq!(relative_error_reduction(1.0, 1.0), 0.0);
    assert_eq!(relative_error_reduction(0.9, 1.0), f64::NEG_INFINITY);
    assert!(relative_error_reduction(f64::NAN, 0.5).is_nan());
}

#[test]
fn thread_count_does_not_change_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path()).join("manifest.tsv");
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let model = dir.path().join(format!("m{threads}.fanm"));
        ok(fan([
            OsStr::new("--threads"),
            threads.as_ref(),
            "train".as_ref(),
            "--variant".as_ref(),
            "bat-fan-max".as_ref(),
            "--epochs".as_ref(),
            "1".as_ref(),
            "--manifest".as_ref(),
            manifest.as_os_str(),
            "--out".as_ref(),
            model.as_os_str(),
        ]));
        bytes.push(std::fs::read(&model).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}
