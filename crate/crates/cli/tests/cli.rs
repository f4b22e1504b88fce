use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn masc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn masc")
}

fn simulate(dir: &Path) {
    fs::write(dir.join("spec.txt"), "n_treated=6\nn_donors=40\n").unwrap();
    let out = masc(&["simulate", "--spec", "spec.txt", "--seed", "5", "--out", "sim"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const RUN: [&str; 5] = ["run", "--panel", "sim/panel.csv", "--covariates", "sim/covariates.csv"];

fn run(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = RUN.to_vec();
    args.extend(["--out", out]);
    args.extend(extra);
    masc(&args, dir)
}

#[test]
fn match_stage_writes_only_matching_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out = run(dir.path(), "o", &["--stages", "match"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<String> = fs::read_dir(dir.path().join("o"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files, ["balance.csv", "matches.csv", "report.json"]);
}

#[test]
fn staged_rerun_matches_full_run() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    assert!(run(dir.path(), "full", &[]).status.success());
    assert!(run(dir.path(), "staged", &["--stages", "match"]).status.success());
    assert!(run(dir.path(), "staged", &["--stages", "estimate"]).status.success());
    assert!(run(dir.path(), "staged", &["--stages", "heterogeneity"]).status.success());
    for f in ["matches.csv", "effects.csv", "pooled_effects.csv", "weights.csv", "tree.txt", "pca_scores.csv"] {
        let a = fs::read(dir.path().join("full").join(f)).unwrap();
        let b = fs::read(dir.path().join("staged").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    assert_eq!(run(dir.path(), "o", &["--k", "0"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "o", &["--stages", "plot"]).status.code(), Some(2));

    // estimation without prior matches is a stage failure
    let out = run(dir.path(), "empty", &["--stages", "estimate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `match`"));
    assert!(!dir.path().join("empty").join("report.json").exists());

    fs::write(dir.path().join("bad.txt"), "n_treated=0\n").unwrap();
    let out = masc(&["simulate", "--spec", "bad.txt", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_keys() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    assert!(run(dir.path(), "o", &["--placebo-years", "2014"]).status.success());
    let out = masc(&["plot", "--report", "o/report.json", "--figure", "pooled", "--out", "p.csv"], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(csv.starts_with("year,effect,lo80,hi80,lo90,hi90,lo95,hi95\n"));

    let out = masc(&["plot", "--report", "o/report.json", "--figure", "per_unit", "--out", "u.csv"], dir.path());
    assert!(out.status.success());
    let rows = fs::read_to_string(dir.path().join("u.csv")).unwrap().lines().count() - 1;
    // 6 treated units over all 16 panel years
    assert_eq!(rows, 6 * 16);
    let meta = fs::read_to_string(dir.path().join("u.csv.meta.json")).unwrap();
    assert!(meta.contains("[-5.5,3.5]"));

    let out = masc(&["plot", "--report", "o/report.json", "--figure", "violin", "--out", "v.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pooled, per_unit"));
}
