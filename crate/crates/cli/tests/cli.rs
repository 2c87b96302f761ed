use std::path::Path;
use std::process::{Command, Output};

use pointexplainer_cli::RunConfig;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointexplainer"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let text = "run_dir = out\ncohort.n_pd = 2\ncohort.n_hc = 2\ncohort.points_per_subject = 300\nwindow = 64\nstep = 16\n";
    let path = dir.join("small.conf");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn config_file_then_overrides() {
    let mut c = RunConfig::default();
    c.apply_text("window = 128 # comment\n\nsurrogates = LR,XGB\n").unwrap();
    c.apply_override("window=64").unwrap();
    assert_eq!(c.window, 64);
    assert_eq!(c.surrogates.len(), 2);
    assert!(c.apply_override("window").is_err());
    assert!(c.apply_text("no equals sign").is_err());
}

#[test]
fn rendered_config_parses_back() {
    let c = RunConfig::default();
    let mut back = RunConfig { window: 1, ..RunConfig::default() };
    back.apply_text(&c.render()).unwrap();
    assert_eq!(back.render(), c.render());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let unknown = run(dir.path(), &["--config", &conf, "--set", "no_such_key=1", "synth"]);
    assert_eq!(unknown.status.code(), Some(2));
    let empty_class = run(dir.path(), &["--config", &conf, "--set", "cohort.n_pd=0", "synth"]);
    assert_eq!(empty_class.status.code(), Some(2));
    let threads = run(dir.path(), &["--config", &conf, "--threads", "0", "synth"]);
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let missing = run(dir.path(), &["--config", &conf, "train"]);
    assert_eq!(missing.status.code(), Some(3));
    let synth = run(dir.path(), &["--config", &conf, "synth"]);
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    let csv = std::fs::read_dir(dir.path().join("out/cohort"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csv, 4);
    let unknown = run(dir.path(), &["--config", &conf, "explain", "PD-999"]);
    assert_eq!(unknown.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("PD-999"));
}
