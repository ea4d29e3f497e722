use std::path::Path;
use std::process::{Command, Output};

fn causalnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causalnet")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn generate_rejects_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = causalnet(&["generate", "--n", "0", "--file", "d.txt"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));
}

#[test]
fn unknown_method_and_subcommand_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!causalnet(&["sweep", "--methods", "adj,nearest-neighbour"], dir.path()).status.success());
    assert!(!causalnet(&["frobnicate"], dir.path()).status.success());
    assert!(!dir.path().join("results").exists());
}

#[test]
fn generate_train_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(causalnet(&["generate", "--n", "150", "--file", "train.txt", "--seed", "3"], p).status.success());
    assert!(causalnet(&["generate", "--n", "80", "--file", "test.txt", "--seed", "4"], p).status.success());
    let train = causalnet(&["train", "--method", "adj", "--data", "train.txt", "--model", "adj.model"], p);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let eval = causalnet(&["evaluate", "--model", "adj.model", "--data", "test.txt", "--scatter", "scatter.csv"], p);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let line = String::from_utf8(eval.stdout).unwrap();
    assert!(line.starts_with("method=adj n=80 mse="), "{line}");
    let scatter = std::fs::read_to_string(p.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next(), Some("true_tau,est_tau"));
    assert_eq!(scatter.lines().count(), 81);
}
