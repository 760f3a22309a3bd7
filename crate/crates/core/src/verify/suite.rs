//! End-to-end property checks with pass/fail verdicts, shared by the
//! `verify` subcommand and the acceptance test target.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    brute_force_neighbors, direct_tensor_product, model_gradcheck, random_structure,
    rigid_motion_errors, RigidMotion,
};
use crate::bench::bench_structure;
use crate::datasets::{carbon_lattice, synthetic_clusters, water, water_trajectory};
use crate::error::Result;
use crate::graph::{bessel_rbf, build_neighbor_list, AtomicStructure, Mat3};
use crate::io::{decode_checkpoint, encode_checkpoint, format_extxyz, parse_extxyz_str, Checkpoint};
use crate::irreps::{IrrepsSpec, IrrepsTensor, PathFilter, TensorProduct};
use crate::md::potentials::LennardJones;
use crate::md::{run_md, MdConfig};
use crate::model::{MlaNet, ModelConfig};
use crate::tensor::{Tape, Tensor};
use crate::train::{evaluate, learning_curve, lmax_timing, Dataset, LossWeights, TrainConfig, Trainer};

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckReport {
    pub fn line(&self) -> String {
        format!(
            "{} [{}] {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// Problem sizes; [`SuiteScale::full`] is the acceptance scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteScale {
    pub equivariance_structures: usize,
    pub equivariance_motions: usize,
    pub neighbor_structures: usize,
    pub overfit_epochs: usize,
    pub curve_sizes: Vec<usize>,
    pub curve_test: usize,
    pub curve_epochs: usize,
    pub md_steps: usize,
    pub nve_steps: usize,
    pub bench_sides: Vec<usize>,
    pub bench_repeat: usize,
}

impl SuiteScale {
    pub fn full() -> Self {
        SuiteScale {
            equivariance_structures: 50,
            equivariance_motions: 20,
            neighbor_structures: 200,
            overfit_epochs: 2000,
            curve_sizes: vec![10, 100, 500],
            curve_test: 100,
            curve_epochs: 100,
            md_steps: 20_000,
            nve_steps: 10_000,
            bench_sides: vec![3, 4, 6],
            bench_repeat: 15,
        }
    }

    pub fn quick() -> Self {
        SuiteScale {
            equivariance_structures: 10,
            equivariance_motions: 4,
            neighbor_structures: 50,
            overfit_epochs: 2000,
            curve_sizes: vec![10, 40, 160],
            curve_test: 40,
            curve_epochs: 40,
            md_steps: 2000,
            nve_steps: 10_000,
            bench_sides: vec![3, 4],
            bench_repeat: 5,
        }
    }
}

fn timed(id: &str, name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckReport {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckReport {
        id: id.into(),
        name: name.into(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn symmetry_model() -> Result<MlaNet> {
    let mut cfg = ModelConfig::small(&[1, 6, 7, 8], "8x0e+4x1o+2x2e+2x3o")?;
    cfg.l_max = 3;
    MlaNet::new(cfg, 21)
}

/// Energy invariance and force equivariance under random rigid motions,
/// alternating periodic and open structures of 2–12 atoms.
pub fn check_equivariance(n_structures: usize, n_motions: usize) -> CheckReport {
    timed("1", "equivariance", || {
        let model = symmetry_model()?;
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let (mut e_worst, mut f_worst) = (0.0f64, 0.0f64);
        for k in 0..n_structures {
            let s = random_structure(&mut rng, 12, &[1, 6, 7, 8], k % 2 == 0)?;
            for _ in 0..n_motions {
                let motion = RigidMotion::random(&mut rng);
                let (e, f) = rigid_motion_errors(&model, &s, &motion)?;
                e_worst = e_worst.max(e);
                f_worst = f_worst.max(f);
            }
        }
        Ok((
            e_worst < 1e-8 && f_worst < 1e-8,
            format!("{n_structures}x{n_motions} motions, energy {e_worst:.2e}, forces {f_worst:.2e} (< 1e-8)"),
        ))
    })
}

/// Parameter gradients of `E + c·f` against central differences on a
/// three-atom molecule with one energy and one force layer.
pub fn check_gradcheck() -> CheckReport {
    timed("2", "gradcheck", || {
        let mut cfg = ModelConfig::small(&[1, 8], "4x0e+2x1o")?;
        cfg.l_max = 1;
        cfg.n_layers_energy = 1;
        cfg.n_layers_force = 1;
        let model = MlaNet::new(cfg, 17)?;
        let s = AtomicStructure::new(vec![[0.0, 0.0, 0.1], [0.95, 0.1, -0.3], [-0.5, 0.8, 0.2]], vec![8, 1, 1])?;
        let err = model_gradcheck(&model, &s, 1, 1e-5, 1e-6)?;
        Ok((
            err < 1e-4,
            format!("{} parameters, max rel err {err:.2e} (< 1e-4)", model.params().num_scalars()),
        ))
    })
}

fn oracle_structure(rng: &mut impl Rng) -> Result<AtomicStructure> {
    let n = rng.random_range(1..=10);
    let cell: Mat3 = std::array::from_fn(|i| {
        std::array::from_fn(|j| if i == j { rng.random_range(3.0..6.0) } else { rng.random_range(-1.0..1.0) })
    });
    let positions = (0..n)
        .map(|_| {
            let f: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..1.3));
            std::array::from_fn(|m| (0..3).map(|k| f[k] * cell[k][m]).sum())
        })
        .collect();
    let s = AtomicStructure::new(positions, vec![1; n])?;
    if rng.random_bool(0.6) {
        let mut pbc: [bool; 3] = std::array::from_fn(|_| rng.random_bool(0.8));
        pbc[rng.random_range(0..3)] = true;
        s.with_cell(cell, pbc)
    } else {
        Ok(s)
    }
}

/// Cell-list neighbors against exhaustive search, and the tensor product
/// against direct Clebsch–Gordan summation over irreps up to l = 3.
pub fn check_oracles(n_structures: usize) -> CheckReport {
    timed("3", "oracle equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let (mut mismatched, mut edges) = (0usize, 0usize);
        for _ in 0..n_structures {
            let s = oracle_structure(&mut rng)?;
            let r_cut = rng.random_range(1.5..5.0);
            let nl = build_neighbor_list(&s, r_cut)?;
            let brute = brute_force_neighbors(&s, r_cut, 5)?;
            let got: Vec<_> = (0..nl.num_edges()).map(|e| (nl.dst[e], nl.src[e], nl.shift[e])).collect();
            let want: Vec<_> = brute.iter().map(|e| (e.0, e.1, e.2)).collect();
            if got != want {
                mismatched += 1;
            }
            edges += want.len();
        }
        let a = IrrepsSpec::parse("3x0e+2x1o+2x2e+2x3o")?;
        let out = IrrepsSpec::parse("3x0e+2x1o+2x1e+2x2e+2x3o+2x0e")?;
        let filter = PathFilter {
            max_l_out: Some(3),
            diagonal: false,
        };
        let tp = TensorProduct::new(&a, &a, &out, &filter)?;
        let paths: Vec<_> = tp.paths().iter().map(|p| (p.a, p.b, p.out)).collect();
        let mut rand_rows = |cols: usize| {
            Tensor::new(vec![6, cols], (0..6 * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        };
        let xa = rand_rows(a.dim())?;
        let xb = rand_rows(a.dim())?;
        let w = rand_rows(tp.num_weights())?.data()[..tp.num_weights()].to_vec();
        let mut tape = Tape::new();
        let ta = IrrepsTensor::new(a.clone(), tape.constant(xa.clone()));
        let tb = IrrepsTensor::new(a.clone(), tape.constant(xb.clone()));
        let tw = tape.constant(Tensor::new(vec![w.len()], w.clone())?);
        let got = tp.apply(&mut tape, &ta, &tb, tw)?;
        let want = direct_tensor_product(&a, &a, &out, &paths, &w, xa.data(), xb.data())?;
        let diff = tape
            .value(got.var)
            .data()
            .iter()
            .zip(&want)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        Ok((
            mismatched == 0 && diff < 1e-12,
            format!(
                "{mismatched}/{n_structures} neighbor lists differ ({edges} edges), {} TP paths max diff {diff:.1e} (< 1e-12)",
                paths.len()
            ),
        ))
    })
}

/// The radial basis vanishes at the cutoff and is orthonormal under the
/// `x²` weight (trapezoidal quadrature).
pub fn check_bessel() -> CheckReport {
    timed("4", "bessel basis", || {
        let (r_cut, n_rbf, k) = (5.0, 8, 20_000);
        let h = r_cut / k as f64;
        let xs: Vec<f64> = (1..=k).map(|i| i as f64 * h).collect();
        let t = bessel_rbf(&xs, r_cut, n_rbf)?;
        let mut worst = 0.0f64;
        let mut at_cut = 0.0f64;
        for m in 0..n_rbf {
            at_cut = at_cut.max(t.get2(k - 1, m).abs());
            for n in 0..n_rbf {
                let mut s = 0.0;
                for (i, &x) in xs.iter().enumerate() {
                    let w = if i == k - 1 { 0.5 } else { 1.0 };
                    s += w * t.get2(i, m) * t.get2(i, n) * x * x;
                }
                let want = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((s * h - want).abs());
            }
        }
        Ok((
            at_cut < 1e-14 && worst < 1e-3,
            format!("|RBF(r_cut)| {at_cut:.1e}, Gram deviation {worst:.1e} (< 1e-3)"),
        ))
    })
}

fn energy_only(lr: f64, batch: usize, epochs: usize) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: lr,
        batch_size: batch,
        epochs,
        loss: LossWeights::from_ratio("1:0")?,
        ..TrainConfig::default()
    })
}

fn cluster_model(hidden: &str, l_max: u32) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::small(&[1, 6, 8], hidden)?;
    cfg.l_max = l_max;
    cfg.n_layers_force = 0;
    Ok(cfg)
}

/// Energy-only training on ten structures must fit them below 1 meV/atom.
pub fn check_overfit(structures: &[AtomicStructure], epochs: usize) -> CheckReport {
    timed("5", "overfit", || {
        let structures = &structures[..structures.len().min(10)];
        let mut species: Vec<u32> = structures.iter().flat_map(|s| s.species.clone()).collect();
        species.sort_unstable();
        species.dedup();
        let mut cfg = cluster_model("16x0e+4x1o", 1)?;
        cfg.species = species;
        let model = MlaNet::new(cfg, 0)?;
        let data = Dataset::new(structures.to_vec(), &model)?;
        let mut trainer = Trainer::new(model, energy_only(5e-3, structures.len(), epochs)?)?;
        let idx: Vec<usize> = (0..structures.len()).collect();
        trainer.fit(&data, &idx, &[], |_, _| Ok(()))?;
        let m = evaluate(&trainer.model, &data, &idx, idx.len())?;
        let mev = m.mae_energy_per_atom * 1e3;
        Ok((
            mev < 1.0,
            format!("{} structures, {epochs} epochs, train MAE {mev:.2e} meV/atom (< 1)", idx.len()),
        ))
    })
}

/// Test MAE falls strictly with training-set size, and seconds per epoch
/// rise strictly with the rotation order.
pub fn check_learning_curve(sizes: &[usize], n_test: usize, epochs: usize) -> CheckReport {
    timed("6", "learning curve", || {
        let pool_n = sizes.iter().copied().max().unwrap_or(1);
        let structures = synthetic_clusters(pool_n + n_test, 9)?;
        let pool: Vec<usize> = (0..pool_n).collect();
        let test: Vec<usize> = (pool_n..pool_n + n_test).collect();
        let cfg = cluster_model("16x0e+4x1o+2x2e", 2)?;
        let rows = learning_curve(&structures, &pool, &test, sizes, &cfg, &energy_only(2e-3, 16, epochs)?)?;
        let maes: Vec<f64> = rows.iter().map(|r| r.test_mae_energy).collect();
        let base = cluster_model("16x0e+8x1o+8x2e+8x3o", 3)?;
        let timing_train: Vec<usize> = (0..pool_n.min(100)).collect();
        let timing = lmax_timing(
            &structures,
            &timing_train,
            &test,
            &base,
            &[1, 2, 3],
            &energy_only(2e-3, 16, 3)?,
        )?;
        let secs: Vec<f64> = timing.iter().map(|r| r.seconds_per_epoch).collect();
        let falling = maes.windows(2).all(|w| w[1] < w[0]);
        let rising = secs.windows(2).all(|w| w[1] > w[0]);
        let fmt = |v: &[f64], p: usize| v.iter().map(|x| format!("{x:.p$}")).collect::<Vec<_>>().join(" > ");
        Ok((
            falling && rising,
            format!(
                "MAE over sizes {sizes:?}: {} eV; s/epoch over l_max 1,2,3: {}",
                fmt(&maes, 3),
                fmt(&secs, 4).replace('>', "<")
            ),
        ))
    })
}

/// A model trained on water trajectories runs `md_steps` Langevin steps at
/// 0.5 fs without a monitor violation, and velocity Verlet conserves the
/// energy of a Lennard-Jones dimer over `nve_steps`.
pub fn check_md(md_steps: usize, nve_steps: usize) -> CheckReport {
    timed("7", "md stability", || {
        let frames = water_trajectory(200, 3)?;
        let cfg = ModelConfig::small(&[1, 8], "16x0e+8x1o")?;
        let model = MlaNet::new(cfg, 0)?;
        let data = Dataset::new(frames, &model)?;
        let tc = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 20,
            epochs: 300,
            loss: LossWeights::from_ratio("1:100")?,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(model, tc)?;
        let idx: Vec<usize> = (0..data.len()).collect();
        trainer.fit(&data, &idx, &[], |_, _| Ok(()))?;
        let fit = evaluate(&trainer.model, &data, &idx, 50)?;
        let md = MdConfig {
            steps: md_steps,
            dt: 0.5,
            temperature: Some(300.0),
            write_every: md_steps.max(1),
            ..MdConfig::default()
        };
        let run = run_md(&water(), &trainer.model, &md)?;
        let dimer = AtomicStructure::new(vec![[0.0; 3], [4.2, 0.0, 0.0]], vec![18, 18])?;
        let nve = MdConfig {
            steps: nve_steps,
            dt: 0.5,
            write_every: nve_steps.max(1),
            ..MdConfig::default()
        };
        let lj = run_md(&dimer, &LennardJones::argon(), &nve)?;
        let drift = lj.report.max_relative_energy_drift.unwrap_or(f64::INFINITY);
        let failure = run.report.failure.as_ref().map(|v| format!(" ({v})")).unwrap_or_default();
        Ok((
            run.report.stable && drift < 1e-4,
            format!(
                "force MAE {:.3} eV/Å, {:.2} ps stable of {:.2}{failure}, {:.0} steps/s; LJ NVE drift {drift:.1e} (< 1e-4)",
                fit.mae_forces.unwrap_or(f64::NAN),
                run.report.ps_stable,
                md_steps as f64 * 0.5e-3,
                run.report.fps
            ),
        ))
    })
}

/// Median latency must grow with the atom count.
pub fn check_bench(sides: &[usize], repeat: usize) -> CheckReport {
    timed("8", "latency scaling", || {
        let model = MlaNet::new(ModelConfig::small(&[6], "16x0e+8x1o+4x2e")?, 0)?;
        let rows = sides
            .iter()
            .map(|&n| bench_structure(&model, &carbon_lattice(n)?, &format!("c{}", n * n * n), repeat))
            .collect::<Result<Vec<_>>>()?;
        let monotone = rows.windows(2).all(|w| w[1].median_ms > w[0].median_ms);
        let table = rows
            .iter()
            .map(|r| format!("{} atoms {:.2} ms", r.atoms, r.median_ms))
            .collect::<Vec<_>>()
            .join(", ");
        Ok((monotone, table))
    })
}

/// A labelled random frame with every optional field populated at random.
pub fn random_frame(rng: &mut impl Rng) -> Result<AtomicStructure> {
    let periodic = rng.random_bool(0.5);
    let mut s = random_structure(rng, 8, &[1, 6, 8, 14, 79], periodic)?;
    if periodic {
        s.pbc = [true, rng.random_bool(0.5), true];
    }
    if rng.random_bool(0.7) {
        s.energy = Some(rng.random_range(-500.0..10.0));
    }
    if rng.random_bool(0.7) {
        s.forces = Some((0..s.len()).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect());
    }
    if rng.random_bool(0.3) {
        s.stress = Some(std::array::from_fn(|_| rng.random_range(-0.1..0.1)));
    }
    if rng.random_bool(0.3) {
        s.total_charge = Some(rng.random_range(-2..=2));
    }
    if rng.random_bool(0.5) {
        s.info.insert("config_type".into(), format!("frame {}", rng.random_range(0..100)));
    }
    Ok(s)
}

fn resume_config() -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: 2e-3,
        batch_size: 6,
        epochs: 6,
        t_max: Some(6),
        seed: 5,
        loss: LossWeights::from_ratio("1:10")?,
        ..TrainConfig::default()
    })
}

/// Resumed training equals uninterrupted training bit for bit, and
/// checkpoints and extxyz text round-trip exactly.
pub fn check_persistence() -> CheckReport {
    timed("9", "determinism and persistence", || {
        let structures = synthetic_clusters(20, 4)?;
        let cfg = ModelConfig::small(&[1, 6, 8], "8x0e+4x1o")?;
        let model = MlaNet::new(cfg, 8)?;
        let data = Dataset::new(structures, &model)?;
        let (train, val): (Vec<usize>, Vec<usize>) = ((0..16).collect(), (16..20).collect());

        let mut straight = Trainer::new(model.clone(), resume_config()?)?;
        let full = straight.fit(&data, &train, &val, |_, _| Ok(()))?;

        let mut first = Trainer::new(
            model,
            TrainConfig {
                epochs: 3,
                ..resume_config()?
            },
        )?;
        first.fit(&data, &train, &val, |_, _| Ok(()))?;
        let mut resumed = decode_checkpoint(&encode_checkpoint(&Checkpoint::from_trainer(&first))?)?.to_trainer()?;
        resumed.config.epochs = 6;
        let tail = resumed.fit(&data, &train, &val, |_, _| Ok(()))?;
        let params_equal = resumed.model.params() == straight.model.params();
        let moments_equal = resumed.optimizer == straight.optimizer && resumed.optimizer.moments() == straight.optimizer.moments();
        let strip = |r: &crate::train::EpochRecord| (r.epoch, r.lr.to_bits(), r.train_loss.to_bits(), r.val.clone());
        let records_equal = tail.iter().map(strip).eq(full[3..].iter().map(strip));

        let reloaded = decode_checkpoint(&encode_checkpoint(&Checkpoint::from_model(&straight.model))?)?.to_model()?;
        let probe: Vec<AtomicStructure> = data.select(&val).into_iter().cloned().collect();
        let forward_equal = reloaded.predict_batch(&probe)? == straight.model.predict_batch(&probe)?;

        let mut rng = ChaCha8Rng::seed_from_u64(909);
        let frames = (0..50).map(|_| random_frame(&mut rng)).collect::<Result<Vec<_>>>()?;
        let text = format_extxyz(&frames)?;
        let back = parse_extxyz_str(&text)?;
        let extxyz_equal = back == frames && format_extxyz(&back)? == text;

        let all = params_equal && moments_equal && records_equal && forward_equal && extxyz_equal;
        Ok((
            all,
            format!(
                "resume params {params_equal}, optimizer {moments_equal}, records {records_equal}; \
                 checkpoint forward {forward_equal}; extxyz 50 frames {extxyz_equal}"
            ),
        ))
    })
}

/// Every check at the given scale; the training-heavy ones only when
/// `with_training` is set.
pub fn run_suite(scale: &SuiteScale, toy: &[AtomicStructure], with_training: bool) -> Vec<CheckReport> {
    let mut out = vec![
        check_equivariance(scale.equivariance_structures, scale.equivariance_motions),
        check_gradcheck(),
        check_oracles(scale.neighbor_structures),
        check_bessel(),
    ];
    if with_training {
        out.push(check_overfit(toy, scale.overfit_epochs));
        out.push(check_learning_curve(&scale.curve_sizes, scale.curve_test, scale.curve_epochs));
        out.push(check_md(scale.md_steps, scale.nve_steps));
    }
    out.push(check_bench(&scale.bench_sides, scale.bench_repeat));
    out.push(check_persistence());
    out
}
