use std::fs;
use std::path::Path;

use cate_core::causalnet::{build_causalnet, checkpoint_to_string, parse_checkpoint, train, CausalNetConfig};
use cate_core::datagen::{gen_circle, GeneratorKind};
use cate_core::harness::{net_train_config, run_cell, sweep_with_outcome, CellKey, Experiment, ExperimentConfig, Method, Overrides};

fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(GeneratorKind::CircleNoiseless);
    for (k, v) in [
        ("methods", "adj,s-forest"),
        ("grid", "60,90"),
        ("test_size", "120"),
        ("seed", "17"),
        ("forest.trees", "10"),
        ("jobs", "2"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.out_dir = out.to_path_buf();
    cfg
}

/// The results CSV with the wall-clock column cut off.
fn without_seconds(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect()
}

#[test]
fn sweep_counts_resumes_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("a"));
    let first = sweep_with_outcome(&cfg).unwrap();
    assert_eq!(first.computed.len(), 4);
    assert_eq!(first.rows.len(), 8);
    assert!(first.plot.exists());
    let csv = fs::read_to_string(&first.results).unwrap();

    let again = sweep_with_outcome(&cfg).unwrap();
    assert!(again.computed.is_empty());
    assert_eq!(fs::read_to_string(&again.results).unwrap(), csv);

    let victim = CellKey {
        generator: GeneratorKind::CircleNoiseless,
        method: Method::SForest,
        n_train: 90,
        replicate: 0,
    };
    fs::remove_file(Experiment::new(&cfg).unwrap().cell_path(&victim)).unwrap();
    let resumed = sweep_with_outcome(&cfg).unwrap();
    assert_eq!(resumed.computed, vec![victim]);
    assert_eq!(without_seconds(&resumed.results), without_seconds(&first.results));

    let fresh = sweep_with_outcome(&small_config(&dir.path().join("b"))).unwrap();
    assert_eq!(without_seconds(&fresh.results), without_seconds(&first.results));
}

#[test]
fn unknown_method_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    assert!(cfg.set("methods", "adj,x-learner").is_err());
    cfg.grid.clear();
    assert!(sweep_with_outcome(&cfg).is_err());
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn plain_adjusted_regression_is_near_the_average() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.set("grid", "2000").unwrap();
    cfg.set("test_size", "2000").unwrap();
    let key = CellKey {
        generator: GeneratorKind::CircleNoiseless,
        method: Method::Adj,
        n_train: 2000,
        replicate: 0,
    };
    let (train_row, test_row) = run_cell(&cfg, &key).unwrap();
    assert!(!train_row.failed);
    assert!((0.9..=1.2).contains(&test_row.relative_mse), "{}", test_row.relative_mse);
    let (_, repeat) = run_cell(&cfg, &key).unwrap();
    assert_eq!((repeat.mse, repeat.relative_mse), (test_row.mse, test_row.relative_mse));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let data = gen_circle(40, false, 8).unwrap();
    let mut net = build_causalnet(&CausalNetConfig::image(3)).unwrap();
    let mut tc = net_train_config(&Overrides::default(), GeneratorKind::CircleNoiseless, 5);
    tc.epochs = 2;
    train(&mut net, data.observed(), &tc).unwrap();
    let text = checkpoint_to_string(&net);
    let back = parse_checkpoint(&text, "memory").unwrap();
    assert_eq!(checkpoint_to_string(&back), text);
    let a = net.predict_cates(&data.observed().x).unwrap();
    let b = back.predict_cates(&data.observed().x).unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
