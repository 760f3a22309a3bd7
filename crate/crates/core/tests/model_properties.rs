use mlanet::graph::AtomicStructure;
use mlanet::irreps::IrrepsSpec;
use mlanet::model::{EdgeInputs, MlaNet, ModelConfig};
use mlanet::tensor::{Segments, Tape};
use mlanet::verify::{
    apply_motion, model_gradcheck, random_rotation, random_structure, rigid_motion_errors, RigidMotion, WignerSet,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn net(hidden: &str, seed: u64) -> MlaNet {
    MlaNet::new(ModelConfig::small(&[1, 6, 8], hidden).unwrap(), seed).unwrap()
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(1.0, f64::max);
    diff / scale
}

#[test]
fn energy_invariant_and_forces_equivariant() {
    let model = net("4x0e+2x1o+2x2e", 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..8 {
        let s = random_structure(&mut rng, 8, &[1, 6, 8], k % 2 == 1).unwrap();
        for _ in 0..4 {
            let motion = RigidMotion::random(&mut rng);
            let (e, f) = rigid_motion_errors(&model, &s, &motion).unwrap();
            assert!(e < 1e-8 && f < 1e-8, "energy {e:e} force {f:e}");
        }
    }
}

#[test]
fn permutation_relabels_forces() {
    let model = net("4x0e+2x1o", 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_structure(&mut rng, 7, &[1, 6, 8], false).unwrap();
    let perm: Vec<usize> = (0..s.len()).rev().collect();
    let a = model.predict(&s).unwrap();
    let b = model.predict(&s.permuted(&perm).unwrap()).unwrap();
    assert!((a.energy - b.energy).abs() <= 1e-12 * a.energy.abs().max(1.0));
    let (fa, fb) = (a.forces.unwrap(), b.forces.unwrap());
    for (k, &old) in perm.iter().enumerate() {
        assert!(relative(&fb[k], &fa[old]) < 1e-12);
    }
}

#[test]
fn force_stack_features_are_local() {
    let model = net("4x0e+2x1o", 9);
    let r_cut = model.config().r_cut;
    let hops = (model.config().n_layers_energy + model.config().n_layers_force) as f64;
    let mut s = AtomicStructure::new(
        vec![[0.0, 0.0, 0.0], [1.1, 0.0, 0.0], [0.3, 1.0, 0.2], [1.1 + r_cut * hops + 1.0, 0.0, 0.0], [
            1.1 + r_cut * hops + 2.0,
            0.4,
            0.0,
        ]],
        vec![6, 1, 8, 6, 1],
    )
    .unwrap();
    let features = |s: &AtomicStructure| {
        let g = model.graph(s).unwrap();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let out = model.forward(&mut tape, &g, &p).unwrap();
        tape.value(out.force_features.var).clone()
    };
    let before = features(&s);
    s.positions[4][1] += 0.3;
    let after = features(&s);
    for i in 0..3 {
        assert_eq!(before.row(i), after.row(i));
    }
    assert_ne!(before.row(4), after.row(4));
}

#[test]
fn homonuclear_dimer_forces_lie_on_the_bond() {
    let model = net("4x0e+2x1o+1x2e", 4);
    let d = [0.6, -0.8, 0.9];
    let s = AtomicStructure::new(vec![[0.0; 3], d], vec![6, 6]).unwrap();
    let f = model.predict(&s).unwrap().forces.unwrap();
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let u = [d[0] / n, d[1] / n, d[2] / n];
    for fi in &f {
        let along = fi[0] * u[0] + fi[1] * u[1] + fi[2] * u[2];
        let perp: f64 = (0..3).map(|k| (fi[k] - along * u[k]).powi(2)).sum::<f64>().sqrt();
        assert!(perp < 1e-10 * along.abs().max(1.0), "perpendicular {perp:e}");
    }
    // the two atoms are exchanged by inversion through the midpoint
    for k in 0..3 {
        assert!((f[0][k] + f[1][k]).abs() < 1e-10);
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    let mut cfg = ModelConfig::small(&[1, 8], "4x0e+2x1o").unwrap();
    cfg.l_max = 1;
    let model = MlaNet::new(cfg, 17).unwrap();
    let s = AtomicStructure::new(vec![[0.0, 0.0, 0.1], [0.95, 0.1, -0.3], [-0.5, 0.8, 0.2]], vec![8, 1, 1]).unwrap();
    let err = model_gradcheck(&model, &s, 1, 1e-5, 1e-6).unwrap();
    assert!(err < 1e-4, "gradcheck {err:e}");
}

struct Layer0 {
    model: MlaNet,
    s: AtomicStructure,
}

impl Layer0 {
    /// Logits and attention weights of the first trunk layer.
    fn attention(&self, s: &AtomicStructure) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let model = &self.model;
        let g = model.graph(s).unwrap();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let cfg = model.config();
        let rbf = mlanet::irreps::IrrepsTensor::new(IrrepsSpec::scalars(cfg.n_rbf), tape.constant(g.edge_rbf.clone()));
        let sh = mlanet::irreps::IrrepsTensor::new(
            IrrepsSpec::spherical_harmonics(cfg.l_max),
            tape.constant(g.edge_sh.clone()),
        );
        let seg = Segments::new(g.edge_dst.clone(), g.num_nodes()).unwrap();
        let edges = EdgeInputs {
            rbf: &rbf,
            sh: &sh,
            src: &g.edge_src,
            dst: &g.edge_dst,
            dst_segments: &seg,
            num_nodes: g.num_nodes(),
        };
        let layer = &model.trunk_layers()[0];
        let x = model.lift(&mut tape, &g, &p).unwrap();
        let e = layer.edge_features(&mut tape, &edges, &p).unwrap();
        let (q, k, _) = layer.qkv(&mut tape, &x, &e, &edges, &p).unwrap();
        let logits = layer.attention_logits(&mut tape, &q, &k, &p).unwrap();
        let alpha = tape.segment_softmax(logits, &seg).unwrap();
        (tape.value(logits).data().to_vec(), tape.value(alpha).data().to_vec(), g.edge_dst.clone())
    }
}

#[test]
fn attention_logits_are_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let probe = Layer0 {
        model: net("4x0e+2x1o+2x2e", 1),
        s: random_structure(&mut rng, 6, &[1, 6, 8], false).unwrap(),
    };
    let (base, _, _) = probe.attention(&probe.s);
    for seed in 0..5 {
        let moved = apply_motion(&probe.s, &random_rotation(seed)).unwrap();
        let (rot, _, _) = probe.attention(&moved);
        assert!(relative(&base, &rot) < 1e-9);
    }
}

#[test]
fn attention_weights_for_simple_neighborhoods() {
    // atom 0 sees 1 and 2 symmetrically; 1 and 2 see only 0
    let s = AtomicStructure::new(vec![[0.0; 3], [3.0, 0.0, 0.0], [-3.0, 0.0, 0.0]], vec![6, 1, 1]).unwrap();
    let probe = Layer0 {
        model: net("4x0e+2x1o", 6),
        s,
    };
    let (_, alpha, dst) = probe.attention(&probe.s);
    for (a, d) in alpha.iter().zip(&dst) {
        let want = if *d == 0 { 0.5 } else { 1.0 };
        assert!((a - want).abs() < 1e-14, "alpha {a} at node {d}");
    }
}

#[test]
fn lift_leaves_vector_channels_zero() {
    let model = net("4x0e+2x1o+1x2e", 0);
    let s = AtomicStructure::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![1, 8]).unwrap();
    let g = model.graph(&s).unwrap();
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, false);
    let x = model.lift(&mut tape, &g, &p).unwrap();
    let v = tape.value(x.var);
    for i in 0..2 {
        assert!(v.row(i)[4..].iter().all(|&c| c == 0.0));
        assert!(v.row(i)[..4].iter().any(|&c| c != 0.0));
    }
}

#[test]
fn edge_features_rotate_with_wigner_d() {
    let model = net("4x0e+2x1o+2x2e", 3);
    let s = AtomicStructure::new(vec![[0.0; 3], [1.2, 0.4, -0.3]], vec![6, 8]).unwrap();
    let hidden = model.config().hidden_irreps.clone();
    let edge = |s: &AtomicStructure| {
        let g = model.graph(s).unwrap();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let cfg = model.config();
        let rbf = mlanet::irreps::IrrepsTensor::new(IrrepsSpec::scalars(cfg.n_rbf), tape.constant(g.edge_rbf.clone()));
        let sh = mlanet::irreps::IrrepsTensor::new(
            IrrepsSpec::spherical_harmonics(cfg.l_max),
            tape.constant(g.edge_sh.clone()),
        );
        let seg = Segments::new(g.edge_dst.clone(), g.num_nodes()).unwrap();
        let edges = EdgeInputs {
            rbf: &rbf,
            sh: &sh,
            src: &g.edge_src,
            dst: &g.edge_dst,
            dst_segments: &seg,
            num_nodes: g.num_nodes(),
        };
        let e = model.trunk_layers()[0].edge_features(&mut tape, &edges, &p).unwrap();
        tape.value(e.var).row(0).to_vec()
    };
    let base = edge(&s);
    for seed in 0..5 {
        let motion = random_rotation(seed);
        let w = WignerSet::new(&motion.rotation, hidden.l_max()).unwrap();
        let rot = edge(&apply_motion(&s, &motion).unwrap());
        assert!(relative(&rot, &w.rotate(&hidden, &base)) < 1e-9);
        assert!(relative(&rot[..4], &base[..4]) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predictions_are_finite_and_deterministic(seed in 0u64..10_000, periodic in any::<bool>()) {
        let model = net("4x0e+2x1o", 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_structure(&mut rng, 6, &[1, 6, 8], periodic).unwrap();
        let a = model.predict(&s).unwrap();
        let b = model.predict(&s).unwrap();
        prop_assert!(a.energy.is_finite());
        prop_assert!(a.forces.as_ref().unwrap().iter().flatten().all(|v| v.is_finite()));
        prop_assert_eq!(a, b);
    }
}
