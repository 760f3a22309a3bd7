use rand::Rng;
use rand_distr::StandardNormal;

use super::{checked_forces, ForceProvider, MdState, ACCEL_UNIT, BOLTZMANN_EV};
use crate::error::{Error, Result};

/// `Σ ½ m v²` in eV.
pub fn kinetic_energy(masses: &[f64], v: &[[f64; 3]]) -> f64 {
    masses
        .iter()
        .zip(v)
        .map(|(m, v)| 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum::<f64>()
        / ACCEL_UNIT
}

/// Kinetic temperature over `3N` degrees of freedom, K.
pub fn temperature(masses: &[f64], v: &[[f64; 3]]) -> f64 {
    if masses.is_empty() {
        return 0.0;
    }
    2.0 * kinetic_energy(masses, v) / (3.0 * masses.len() as f64 * BOLTZMANN_EV)
}

/// Maxwell–Boltzmann velocities at `t_kelvin` with the center-of-mass
/// momentum removed (for more than one atom).
pub fn maxwell_boltzmann(masses: &[f64], t_kelvin: f64, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let mut v: Vec<[f64; 3]> = masses
        .iter()
        .map(|m| {
            let s = (BOLTZMANN_EV * t_kelvin * ACCEL_UNIT / m).sqrt();
            std::array::from_fn(|_| {
                let z: f64 = rng.sample(StandardNormal);
                s * z
            })
        })
        .collect();
    if masses.len() > 1 {
        let total: f64 = masses.iter().sum();
        let p: [f64; 3] = std::array::from_fn(|c| masses.iter().zip(&v).map(|(m, vi)| m * vi[c]).sum::<f64>() / total);
        for vi in &mut v {
            for c in 0..3 {
                vi[c] -= p[c];
            }
        }
    }
    v
}

fn kick(state: &mut MdState, half_dt: f64) {
    for ((v, f), m) in state.velocities.iter_mut().zip(&state.forces).zip(&state.masses) {
        let a = ACCEL_UNIT / m;
        for c in 0..3 {
            v[c] += half_dt * a * f[c];
        }
    }
}

fn drift(state: &mut MdState, dt: f64) {
    for (x, v) in state.structure.positions.iter_mut().zip(&state.velocities) {
        for c in 0..3 {
            x[c] += dt * v[c];
        }
    }
}

fn refresh_forces(state: &mut MdState, provider: &dyn ForceProvider) -> Result<()> {
    let (e, f) = checked_forces(provider, &state.structure)?;
    state.forces = f;
    state.potential_energy = e;
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Md(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Kick–drift–kick velocity Verlet, which equals
/// `x ← x + v·dt + ½(f/m)dt²`, `v ← v + ½(f + f')/m·dt`.
pub fn velocity_verlet_step(state: &mut MdState, provider: &dyn ForceProvider, dt: f64) -> Result<()> {
    check_dt(dt)?;
    kick(state, 0.5 * dt);
    drift(state, dt);
    refresh_forces(state, provider)?;
    kick(state, 0.5 * dt);
    state.time += dt;
    state.step += 1;
    Ok(())
}

/// BAOAB Langevin splitting. With zero friction the O step is the
/// identity and the update is exactly [`velocity_verlet_step`] (no random
/// numbers are drawn).
pub fn baoab_step(
    state: &mut MdState,
    provider: &dyn ForceProvider,
    dt: f64,
    t_kelvin: f64,
    friction: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    check_dt(dt)?;
    if !(t_kelvin >= 0.0) || !(friction >= 0.0) {
        return Err(Error::Md("temperature and friction must be non-negative".into()));
    }
    if friction == 0.0 {
        return velocity_verlet_step(state, provider, dt);
    }
    kick(state, 0.5 * dt);
    drift(state, 0.5 * dt);
    let c1 = (-friction * dt).exp();
    let c2 = (1.0 - c1 * c1).sqrt();
    for (v, m) in state.velocities.iter_mut().zip(&state.masses) {
        let sigma = (BOLTZMANN_EV * t_kelvin * ACCEL_UNIT / m).sqrt();
        for vc in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *vc = c1 * *vc + c2 * sigma * z;
        }
    }
    drift(state, 0.5 * dt);
    refresh_forces(state, provider)?;
    kick(state, 0.5 * dt);
    state.time += dt;
    state.step += 1;
    Ok(())
}
