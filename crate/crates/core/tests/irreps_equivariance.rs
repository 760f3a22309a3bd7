use mlanet::irreps::{
    spherical_harmonics, EquivariantLinear, Gate, IrrepsSpec, IrrepsTensor, PathFilter, TensorProduct,
};
use mlanet::tensor::{Tape, Tensor};
use mlanet::verify::{direct_tensor_product, finite_diff_grad, random_rotation, rel_err, WignerSet};
use mlanet::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
    diff / scale
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[test]
fn spherical_harmonics_commute_with_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = IrrepsSpec::spherical_harmonics(3);
    for seed in 0..20 {
        let rot = random_rotation(seed);
        let w = WignerSet::new(&rot.rotation, 3).unwrap();
        let dirs: Vec<[f64; 3]> = (0..10)
            .map(|_| unit([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
            .collect();
        let rotated: Vec<[f64; 3]> = dirs.iter().map(|d| rot.rotate(*d)).collect();
        let y = spherical_harmonics(3, &dirs).unwrap();
        let yr = spherical_harmonics(3, &rotated).unwrap();
        let dy = w.rotate(&spec, y.data());
        assert!(relative(yr.data(), &dy) < 1e-10);
    }
}

#[test]
fn scalar_product_and_vector_dot_paths() {
    let s = IrrepsSpec::parse("1x0e").unwrap();
    let tp = TensorProduct::new(&s, &s, &s, &PathFilter::default()).unwrap();
    let mut tape = Tape::new();
    let a = IrrepsTensor::new(s.clone(), tape.constant(Tensor::new(vec![1, 1], vec![1.5]).unwrap()));
    let b = IrrepsTensor::new(s.clone(), tape.constant(Tensor::new(vec![1, 1], vec![-2.0]).unwrap()));
    let w = tape.constant(Tensor::full(&[tp.num_weights()], 1.0));
    let out = tp.apply(&mut tape, &a, &b, w).unwrap();
    assert_eq!(tape.value(out.var).data(), &[-3.0]);

    let v = IrrepsSpec::parse("1x1o").unwrap();
    let tp = TensorProduct::new(&v, &v, &s, &PathFilter::default()).unwrap();
    let av = [0.3, -1.2, 0.7];
    let bv = [2.0, 0.5, -0.4];
    let a = IrrepsTensor::new(v.clone(), tape.constant(Tensor::new(vec![1, 3], av.to_vec()).unwrap()));
    let b = IrrepsTensor::new(v.clone(), tape.constant(Tensor::new(vec![1, 3], bv.to_vec()).unwrap()));
    let w = tape.constant(Tensor::full(&[1], 1.0));
    let out = tp.apply(&mut tape, &a, &b, w).unwrap();
    let dot: f64 = av.iter().zip(&bv).map(|(x, y)| x * y).sum();
    assert!((tape.value(out.var).data()[0] - dot / 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn unreachable_output_names_the_irrep() {
    let v = IrrepsSpec::parse("1x1o").unwrap();
    let out = IrrepsSpec::parse("1x1e+1x3o").unwrap();
    match TensorProduct::new(&v, &v, &out, &PathFilter::default()) {
        Err(Error::Config(msg)) => assert!(msg.contains("3o"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn odd_times_odd_is_even() {
    let a = IrrepsSpec::parse("2x1o+2x3o").unwrap();
    let out = TensorProduct::reachable_outputs(&a, &a, &PathFilter::default());
    assert!(out.entries().iter().all(|e| e.irrep.parity == mlanet::irreps::Parity::Even));
    assert!(out.contains(mlanet::irreps::Irrep::SCALAR));
}

fn mixed_specs() -> (IrrepsSpec, IrrepsSpec, IrrepsSpec) {
    let a = IrrepsSpec::parse("3x0e+2x1o+2x2e+2x3o").unwrap();
    let b = IrrepsSpec::parse("3x0e+2x1o+2x2e+2x3o").unwrap();
    let out = IrrepsSpec::parse("3x0e+2x1o+2x1e+2x2e+2x3o+2x0e").unwrap();
    (a, b, out)
}

#[test]
fn tensor_product_matches_direct_cg_summation() {
    let (a, b, out) = mixed_specs();
    let tp = TensorProduct::new(&a, &b, &out, &PathFilter { max_l_out: Some(3), diagonal: false }).unwrap();
    let paths: Vec<(usize, usize, usize)> = tp.paths().iter().map(|p| (p.a, p.b, p.out)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xa = random_rows(6, a.dim(), &mut rng);
    let xb = random_rows(6, b.dim(), &mut rng);
    let w: Vec<f64> = (0..tp.num_weights()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut tape = Tape::new();
    let ta = IrrepsTensor::new(a.clone(), tape.constant(xa.clone()));
    let tb = IrrepsTensor::new(b.clone(), tape.constant(xb.clone()));
    let tw = tape.constant(Tensor::new(vec![w.len()], w.clone()).unwrap());
    let got = tp.apply(&mut tape, &ta, &tb, tw).unwrap();
    let want = direct_tensor_product(&a, &b, &out, &paths, &w, xa.data(), xb.data()).unwrap();
    let diff = tape
        .value(got.var)
        .data()
        .iter()
        .zip(&want)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12, "max diff {diff}");
}

#[test]
fn tensor_product_is_equivariant() {
    let (a, b, out) = mixed_specs();
    let tp = TensorProduct::new(&a, &b, &out, &PathFilter::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w: Vec<f64> = (0..tp.num_weights()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for seed in 0..20 {
        let wig = WignerSet::new(&random_rotation(100 + seed).rotation, 3).unwrap();
        let xa = random_rows(3, a.dim(), &mut rng);
        let xb = random_rows(3, b.dim(), &mut rng);
        let eval = |da: Vec<f64>, db: Vec<f64>| {
            let mut tape = Tape::new();
            let ta = IrrepsTensor::new(a.clone(), tape.constant(Tensor::new(vec![3, a.dim()], da).unwrap()));
            let tb = IrrepsTensor::new(b.clone(), tape.constant(Tensor::new(vec![3, b.dim()], db).unwrap()));
            let tw = tape.constant(Tensor::new(vec![w.len()], w.clone()).unwrap());
            let o = tp.apply(&mut tape, &ta, &tb, tw).unwrap();
            tape.value(o.var).data().to_vec()
        };
        let rotated_out = eval(wig.rotate(&a, xa.data()), wig.rotate(&b, xb.data()));
        let out_rotated = wig.rotate(&out, &eval(xa.data().to_vec(), xb.data().to_vec()));
        assert!(relative(&rotated_out, &out_rotated) < 1e-9);
    }
}

#[test]
fn linear_identity_and_scalar_mix() {
    let spec = IrrepsSpec::parse("2x0e+3x1o+1x2e").unwrap();
    let lin = EquivariantLinear::new(&spec, &spec, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_rows(4, spec.dim(), &mut rng);
    let mut tape = Tape::new();
    let xv = IrrepsTensor::new(spec.clone(), tape.constant(x.clone()));
    let w = tape.constant(lin.identity_weights().unwrap());
    let y = lin.apply(&mut tape, &xv, w, None).unwrap();
    assert_eq!(tape.value(y.var), &x);

    let s2 = IrrepsSpec::parse("2x0e").unwrap();
    let s1 = IrrepsSpec::parse("1x0e").unwrap();
    let lin = EquivariantLinear::new(&s2, &s1, false).unwrap();
    let xv = IrrepsTensor::new(s2, tape.constant(Tensor::new(vec![1, 2], vec![3.0, -1.0]).unwrap()));
    let w = tape.constant(Tensor::new(vec![2], vec![0.5, 2.0]).unwrap());
    let y = lin.apply(&mut tape, &xv, w, None).unwrap();
    assert_eq!(tape.value(y.var).data(), &[0.5 * 3.0 - 2.0]);
}

#[test]
fn linear_rejects_missing_irrep() {
    let a = IrrepsSpec::parse("4x0e").unwrap();
    let b = IrrepsSpec::parse("4x0e+1x1o").unwrap();
    assert!(matches!(EquivariantLinear::new(&a, &b, true), Err(Error::Config(_))));
    assert!(EquivariantLinear::new_partial(&a, &b, true).is_ok());
}

#[test]
fn linear_and_gate_are_equivariant() {
    let input = IrrepsSpec::parse("3x0e+2x1o+2x2e+1x3o+1x1o").unwrap();
    let hidden = IrrepsSpec::parse("4x0e+3x1o+2x2e+1x3o").unwrap();
    let gate = Gate::new(&hidden);
    let lin = EquivariantLinear::new_partial(&input, gate.input_spec(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = lin.init_weights(&mut rng);
    let bias = Tensor::new(vec![lin.num_bias()], (0..lin.num_bias()).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
    for seed in 0..20 {
        let wig = WignerSet::new(&random_rotation(200 + seed).rotation, 3).unwrap();
        let x = random_rows(5, input.dim(), &mut rng);
        let eval = |data: Vec<f64>| {
            let mut tape = Tape::new();
            let xv = IrrepsTensor::new(input.clone(), tape.constant(Tensor::new(vec![5, input.dim()], data).unwrap()));
            let wv = tape.constant(w.clone());
            let bv = tape.constant(bias.clone());
            let y = lin.apply(&mut tape, &xv, wv, Some(bv)).unwrap();
            let lin_out = tape.value(y.var).data().to_vec();
            let g = gate.apply(&mut tape, &y).unwrap();
            (lin_out, tape.value(g.var).data().to_vec())
        };
        let (lin_rot, gate_rot) = eval(wig.rotate(&input, x.data()));
        let (lin_out, gate_out) = eval(x.data().to_vec());
        assert!(relative(&lin_rot, &wig.rotate(gate.input_spec(), &lin_out)) < 1e-10);
        assert!(relative(&gate_rot, &wig.rotate(&hidden, &gate_out)) < 1e-10);
    }
}

#[test]
fn gate_zero_cases_and_mismatch() {
    let hidden = IrrepsSpec::parse("2x0e+1x1o").unwrap();
    let gate = Gate::new(&hidden);
    assert_eq!(gate.input_spec().to_string(), "2x0e+1x1o+1x0e");
    let mut tape = Tape::new();
    let zeros = IrrepsTensor::new(gate.input_spec().clone(), tape.constant(Tensor::zeros(&[2, 6])));
    let y = gate.apply(&mut tape, &zeros).unwrap();
    assert!(tape.value(y.var).data().iter().all(|&v| v == 0.0));

    // gate scalar 0 zeroes the vector channel
    let x = Tensor::new(vec![1, 6], vec![1.0, -1.0, 0.5, 0.7, -0.2, 0.0]).unwrap();
    let xv = IrrepsTensor::new(gate.input_spec().clone(), tape.constant(x));
    let y = gate.apply(&mut tape, &xv).unwrap();
    let out = tape.value(y.var).data();
    assert_eq!(&out[2..5], &[0.0, 0.0, 0.0]);
    assert!((out[0] - mlanet::tensor::silu(1.0)).abs() < 1e-15);

    let wrong = IrrepsTensor::new(hidden.clone(), tape.constant(Tensor::zeros(&[1, hidden.dim()])));
    assert!(matches!(gate.apply(&mut tape, &wrong), Err(Error::Config(_))));
}

#[test]
fn tensor_product_and_linear_gradcheck() {
    let a = IrrepsSpec::parse("2x0e+2x1o+1x2e").unwrap();
    let out = IrrepsSpec::parse("2x0e+2x1e+1x2e").unwrap();
    let tp = TensorProduct::new(&a, &a, &out, &PathFilter { max_l_out: None, diagonal: true }).unwrap();
    let lin = EquivariantLinear::new_partial(&out, &a, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xa = random_rows(2, a.dim(), &mut rng);
    let xb = random_rows(2, a.dim(), &mut rng);
    let n_tp = tp.num_weights();
    let n_lin = lin.num_weights();
    let n_b = lin.num_bias();
    let params: Vec<f64> = (0..n_tp + n_lin + n_b).map(|_| rng.random_range(-1.0..1.0)).collect();

    let build = |tape: &mut Tape, p: &[f64], grad: bool| {
        let tw = tape.leaf(Tensor::new(vec![n_tp], p[..n_tp].to_vec()).unwrap(), grad);
        let lw = tape.leaf(Tensor::new(vec![n_lin], p[n_tp..n_tp + n_lin].to_vec()).unwrap(), grad);
        let lb = tape.leaf(Tensor::new(vec![n_b], p[n_tp + n_lin..].to_vec()).unwrap(), grad);
        let va = IrrepsTensor::new(a.clone(), tape.leaf(xa.clone(), grad));
        let vb = IrrepsTensor::new(a.clone(), tape.constant(xb.clone()));
        let t = tp.apply(tape, &va, &vb, tw).unwrap();
        let y = lin.apply(tape, &t, lw, Some(lb)).unwrap();
        let y2 = tape.mul(y.var, y.var).unwrap();
        let loss = tape.sum(y2);
        (loss, [tw, lw, lb, va.var])
    };
    let mut tape = Tape::new();
    let (loss, vars) = build(&mut tape, &params, true);
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = vars[..3].iter().flat_map(|v| tape.grad(*v).unwrap().data().to_vec()).collect();
    let numeric = finite_diff_grad(
        |p| {
            let mut t = Tape::new();
            let (l, _) = build(&mut t, p, false);
            t.value(l).data()[0]
        },
        &params,
        1e-5,
    );
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!(rel_err(*a, *n, 1e-8) < 1e-5, "{a} vs {n}");
    }
}
