use std::path::Path;

use mlanet::app;
use mlanet::io::{write_extxyz, RunConfig};

fn config(dir: &Path, epochs: usize) -> RunConfig {
    let text = format!(
        r#"
[data]
train = "clusters.extxyz"
[model]
hidden_irreps = "8x0e+4x1o"
l_max = 1
n_layers_energy = 1
n_layers_force = 1
n_mlp_layers = 1
r_cut = 4.0
[train]
learning_rate = 2e-3
batch_size = 5
epochs = {epochs}
t_max = 6
seed = 3
loss = {{ energy = 1.0, forces = 10.0 }}
split = {{ val_fraction = 0.2, test_fraction = 0.2 }}
"#
    );
    RunConfig::from_toml_str(&text, dir).unwrap()
}

fn log_without_timings(dir: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join(app::TRAIN_LOG_FILE))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("seconds");
            v
        })
        .collect()
}

#[test]
fn resumed_run_reproduces_the_uninterrupted_one() {
    let data = tempfile::tempdir().unwrap();
    write_extxyz(data.path().join("clusters.extxyz"), &mlanet::datasets::synthetic_clusters(20, 2).unwrap()).unwrap();
    let straight = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();

    let a = app::train(&config(data.path(), 6), None, None, straight.path()).unwrap();
    app::train(&config(data.path(), 3), None, None, split.path()).unwrap();
    let ckpt = split.path().join(app::CHECKPOINT_FILE);
    let b = app::train(&config(data.path(), 6), None, Some(&ckpt), split.path()).unwrap();

    assert_eq!(a.epochs_completed, 6);
    assert_eq!(b.epochs_completed, 6);
    assert_eq!(a.metrics, b.metrics);
    let bytes = |d: &Path| std::fs::read(d.join(app::CHECKPOINT_FILE)).unwrap();
    assert_eq!(bytes(straight.path()), bytes(split.path()));
    let log = log_without_timings(straight.path());
    assert_eq!(log.len(), 6);
    assert_eq!(log, log_without_timings(split.path()));
    let csv = std::fs::read_to_string(straight.path().join(app::METRICS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn folds_select_disjoint_test_sets() {
    let data = tempfile::tempdir().unwrap();
    write_extxyz(data.path().join("clusters.extxyz"), &mlanet::datasets::synthetic_clusters(20, 2).unwrap()).unwrap();
    let mut cfg = config(data.path(), 1);
    cfg.train.split.folds = Some(4);
    cfg.train.split.val_fraction = 0.0;
    let out = tempfile::tempdir().unwrap();
    let s = app::train(&cfg, Some(1), None, out.path()).unwrap();
    assert_eq!((s.train_size, s.test_size), (15, 5));
    assert!(app::train(&cfg, Some(4), None, out.path()).is_err());
}
