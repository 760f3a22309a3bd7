use rand::Rng;

use super::fd::{finite_diff_grad, rel_err};
use super::rotation::RigidMotion;
use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::model::MlaNet;
use crate::tensor::{Tape, Tensor};

/// Random structure with `2..=max_atoms` atoms, pairwise distances of at
/// least 0.9 Å, and optionally a random skewed periodic cell.
pub fn random_structure(rng: &mut impl Rng, max_atoms: usize, species: &[u32], periodic: bool) -> Result<AtomicStructure> {
    if max_atoms < 2 || species.is_empty() {
        return Err(Error::Oracle("need at least two atoms and one species".into()));
    }
    let n = rng.random_range(2..=max_atoms);
    let box_len = 1.6 * (n as f64).cbrt() + 1.5;
    let cell = [
        [box_len + rng.random_range(0.0..1.0), 0.0, 0.0],
        [rng.random_range(-0.5..0.5), box_len + rng.random_range(0.0..1.0), 0.0],
        [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), box_len + rng.random_range(0.0..1.0)],
    ];
    for _attempt in 0..100 {
        let mut pos: Vec<[f64; 3]> = Vec::with_capacity(n);
        for _ in 0..20 * n {
            if pos.len() == n {
                break;
            }
            let f: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            let p: [f64; 3] = std::array::from_fn(|k| (0..3).map(|a| f[a] * cell[a][k]).sum());
            if pos.iter().all(|q| min_distance(p, *q, periodic.then_some(&cell)) >= 0.9) {
                pos.push(p);
            }
        }
        if pos.len() == n {
            let z = (0..n).map(|_| species[rng.random_range(0..species.len())]).collect();
            let s = AtomicStructure::new(pos, z)?;
            return if periodic { s.with_cell(cell, [true; 3]) } else { Ok(s) };
        }
    }
    Err(Error::Oracle("could not place atoms".into()))
}

fn min_distance(a: [f64; 3], b: [f64; 3], cell: Option<&[[f64; 3]; 3]>) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let range = if cell.is_some() { 1 } else { 0 };
    let mut best = f64::INFINITY;
    for i in -range..=range {
        for j in -range..=range {
            for k in -range..=range {
                let s = [i as f64, j as f64, k as f64];
                let v: [f64; 3] = std::array::from_fn(|c| {
                    d[c] + cell.map_or(0.0, |m| s[0] * m[0][c] + s[1] * m[1][c] + s[2] * m[2][c])
                });
                best = best.min((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt());
            }
        }
    }
    best
}

/// Moves atoms (and the cell) rigidly.
pub fn apply_motion(s: &AtomicStructure, motion: &RigidMotion) -> Result<AtomicStructure> {
    let mut out = s.clone();
    out.positions = s.positions.iter().map(|p| motion.apply(*p)).collect();
    out.cell = s.cell.map(|c| motion.rotate_cell(&c));
    out.validate()?;
    Ok(out)
}

/// `(|E' − E| / max(|E|, 1), max_i ‖f'_i − R f_i‖ / max(max_i ‖f_i‖, 1))`
/// for the moved structure.
pub fn rigid_motion_errors(model: &MlaNet, s: &AtomicStructure, motion: &RigidMotion) -> Result<(f64, f64)> {
    let a = model.predict(s)?;
    let b = model.predict(&apply_motion(s, motion)?)?;
    let e_err = (b.energy - a.energy).abs() / a.energy.abs().max(1.0);
    let f_err = match (a.forces, b.forces) {
        (Some(fa), Some(fb)) => {
            let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let scale = fa.iter().map(|f| norm(*f)).fold(1.0, f64::max);
            let worst = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| {
                    let r = motion.rotate(*x);
                    norm([y[0] - r[0], y[1] - r[1], y[2] - r[2]])
                })
                .fold(0.0, f64::max);
            worst / scale
        }
        _ => 0.0,
    };
    Ok((e_err, f_err))
}

/// Worst per-parameter relative error between tape gradients and central
/// differences of `E + Σ_i c_i·f_i` with fixed random `c`.
///
/// The denominator is `max(|analytic|, |numeric|, floor)`.
pub fn model_gradcheck(model: &MlaNet, s: &AtomicStructure, seed: u64, h: f64, floor: f64) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = model.graph(s)?;
    let coeff = Tensor::new(vec![s.len(), 3], (0..3 * s.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let objective = |net: &MlaNet, tape: &mut Tape, grad: bool| -> Result<(f64, Vec<crate::tensor::Var>)> {
        let p = net.params().bind(tape, grad);
        let out = net.forward(tape, &g, &p)?;
        let mut total = tape.sum(out.energy);
        if let Some(f) = out.forces {
            let c = tape.constant(coeff.clone());
            let w = tape.mul(f, c)?;
            let fs = tape.sum(w);
            total = tape.add(total, fs)?;
        }
        if grad {
            tape.backward(total)?;
        }
        Ok((tape.value(total).data()[0], p))
    };
    let mut tape = Tape::new();
    let (_, p) = objective(model, &mut tape, true)?;
    let mut analytic = Vec::with_capacity(model.params().num_scalars());
    for (i, v) in p.iter().enumerate() {
        match tape.grad(*v) {
            Some(gr) => analytic.extend_from_slice(gr.data()),
            None => analytic.extend(std::iter::repeat_n(0.0, model.params().get(i).numel())),
        }
    }
    let manifest = model.params().manifest();
    let mut probe = model.clone();
    let mut failure = None;
    let numeric = finite_diff_grad(
        |flat| {
            if let Err(e) = probe.params_mut().load_flat(&manifest, flat) {
                failure = Some(e);
                return f64::NAN;
            }
            let mut t = Tape::new();
            match objective(&probe, &mut t, false) {
                Ok((v, _)) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        &model.params().flatten(),
        h,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(analytic.iter().zip(&numeric).map(|(a, n)| rel_err(*a, *n, floor)).fold(0.0, f64::max))
}
