use mlanet::io::{
    format_extxyz, load_model, load_model_matching, load_trainer, parse_extxyz, parse_extxyz_str, resolve_output_dir,
    save_model, save_trainer, write_extxyz, RunConfig, OUTPUT_DIR_ENV,
};
use mlanet::model::{MlaNet, ModelConfig};
use mlanet::train::{TrainConfig, Trainer};
use mlanet::verify::random_frame;
use mlanet::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn extxyz_round_trip_is_exact(seed in 0u64..1_000_000, frames in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set: Vec<_> = (0..frames).map(|_| random_frame(&mut rng).unwrap()).collect();
        let text = format_extxyz(&set).unwrap();
        let back = parse_extxyz_str(&text).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(format_extxyz(&back).unwrap(), text);
    }
}

#[test]
fn tolerant_whitespace_and_nine_component_stress() {
    let text = "\n  2  \n  energy = -3.5   pbc=\"F F F\"  stress=\"1 6 5 6 2 4 5 4 3\"\n\tO   0.0 0.0 0.0 \nH 0.96\t0 0\n\n";
    let s = &parse_extxyz_str(text).unwrap()[0];
    assert_eq!(s.energy, Some(-3.5));
    assert_eq!(s.stress, Some([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    assert_eq!(s.species, vec![8, 1]);
}

#[test]
fn files_round_trip_and_report_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let set: Vec<_> = (0..5).map(|_| random_frame(&mut rng).unwrap()).collect();
    let p = dir.path().join("frames.extxyz");
    write_extxyz(&p, &set).unwrap();
    assert_eq!(parse_extxyz(&p).unwrap(), set);
    assert!(matches!(parse_extxyz(dir.path().join("absent.extxyz")), Err(Error::Io { .. })));
}

fn small_model() -> MlaNet {
    MlaNet::new(ModelConfig::small(&[1, 6, 8], "8x0e+4x1o").unwrap(), 2).unwrap()
}

#[test]
fn checkpoint_file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    let model = small_model();
    save_model(&model, &p).unwrap();
    let back = load_model(&p).unwrap();
    let probe = mlanet::datasets::synthetic_clusters(3, 0).unwrap();
    assert_eq!(back.predict_batch(&probe).unwrap(), model.predict_batch(&probe).unwrap());

    let mut bytes = std::fs::read(&p).unwrap();
    let mid = bytes.len() - 200;
    bytes[mid] ^= 1;
    std::fs::write(&p, &bytes).unwrap();
    let err = load_model(&p).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");
    assert_eq!(err.category(), "checkpoint");

    assert!(load_trainer(dir.path().join("absent")).is_err());
    let q = dir.path().join("t.ckpt");
    let trainer = Trainer::new(small_model(), TrainConfig::default()).unwrap();
    save_trainer(&trainer, &q).unwrap();
    assert_eq!(load_trainer(&q).unwrap().optimizer, trainer.optimizer);
    save_model(&small_model(), &q).unwrap();
    assert!(load_trainer(&q).unwrap_err().to_string().contains("no training state"));
    let other = ModelConfig::small(&[1, 6, 8], "8x0e+2x1o").unwrap();
    assert!(load_model_matching(&q, &other).is_err());
}

#[test]
fn run_config_from_file_and_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        r#"
output_dir = "out"
[data]
train = "toy.extxyz"
max_structures = 4
[model]
hidden_irreps = "8x0e+4x1o"
l_max = 1
n_layers_energy = 1
n_layers_force = 1
n_mlp_layers = 1
r_cut = 4.0
"#,
    )
    .unwrap();
    write_extxyz(dir.path().join("toy.extxyz"), &mlanet::datasets::synthetic_clusters(6, 1).unwrap()).unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let (train, test) = cfg.load_data().unwrap();
    assert_eq!(train.len(), 4);
    assert!(test.is_none());
    std::env::remove_var(OUTPUT_DIR_ENV);
    assert_eq!(cfg.output_dir(), dir.path().join("out"));
    assert_eq!(resolve_output_dir(None), std::path::PathBuf::from("mlanet_output"));
    std::env::set_var(OUTPUT_DIR_ENV, "/tmp/elsewhere");
    assert_eq!(cfg.output_dir(), std::path::PathBuf::from("/tmp/elsewhere"));
    std::env::remove_var(OUTPUT_DIR_ENV);
    std::fs::write(&cfg_path, "output_dir = 1\n").unwrap();
    assert!(matches!(RunConfig::load(&cfg_path), Err(Error::Config(_))));
}
