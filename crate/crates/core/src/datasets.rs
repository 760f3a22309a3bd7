//! Labelled toy data from analytic potentials: random Morse clusters,
//! trajectory-sampled molecules and cubic lattices for latency runs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::md::potentials::{MorseParams, MorsePairs};
use crate::md::{baoab_step, maxwell_boltzmann, ForceProvider, MdState};

/// Morse chemistry over H, C and O with isolated-atom reference energies.
pub fn hco_morse() -> MorsePairs {
    let p = |depth, width, r0| MorseParams { depth, width, r0 };
    let pairs = BTreeMap::from([
        ((1, 1), p(4.5, 1.9, 0.74)),
        ((1, 6), p(4.3, 1.8, 1.09)),
        ((1, 8), p(4.6, 2.2, 0.96)),
        ((6, 6), p(3.6, 2.0, 1.54)),
        ((6, 8), p(3.7, 2.1, 1.43)),
        ((8, 8), p(1.5, 2.7, 1.48)),
    ]);
    MorsePairs {
        pairs,
        reference: BTreeMap::from([(1, -13.6), (6, -1029.8), (8, -2041.3)]),
        r_cut: 5.0,
    }
}

/// Water potential: strong O–H bonds and a weak H–H term that sets the angle.
pub fn water_morse() -> MorsePairs {
    let pairs = BTreeMap::from([
        (
            (1, 1),
            MorseParams {
                depth: 0.6,
                width: 1.6,
                r0: 1.52,
            },
        ),
        (
            (1, 8),
            MorseParams {
                depth: 4.6,
                width: 2.2,
                r0: 0.96,
            },
        ),
        (
            (8, 8),
            MorseParams {
                depth: 0.2,
                width: 1.5,
                r0: 3.0,
            },
        ),
    ]);
    MorsePairs {
        pairs,
        reference: BTreeMap::from([(1, -13.6), (8, -2041.3)]),
        r_cut: 5.0,
    }
}

pub fn water() -> AtomicStructure {
    AtomicStructure::new(vec![[0.0; 3], [0.96, 0.0, 0.0], [-0.24, 0.93, 0.0]], vec![8, 1, 1]).expect("valid water")
}

/// Ten labelled Morse clusters shipped with the crate.
pub fn bundled_toy_set() -> Result<Vec<AtomicStructure>> {
    crate::io::parse_extxyz_str(include_str!("../data/toy_clusters.extxyz"))
}

/// Labels `s` with energy and forces from `provider`.
pub fn label(mut s: AtomicStructure, provider: &dyn ForceProvider) -> Result<AtomicStructure> {
    let (e, f) = provider.energy_forces(&s)?;
    s.energy = Some(e.ok_or_else(|| Error::Data("labelling potential reports no energy".into()))?);
    s.forces = Some(f);
    Ok(s)
}

/// A connected random cluster: each atom lands 0.95–1.6 Å from a random
/// earlier atom and at least 0.95 Å from all of them.
pub fn random_cluster(rng: &mut impl Rng, n_atoms: usize, species: &[u32]) -> Result<AtomicStructure> {
    if n_atoms == 0 || species.is_empty() {
        return Err(Error::Contract("a cluster needs atoms and species".into()));
    }
    let mut pos: Vec<[f64; 3]> = vec![[0.0; 3]];
    'place: while pos.len() < n_atoms {
        for _ in 0..1000 {
            let anchor = pos[rng.random_range(0..pos.len())];
            let dir = loop {
                let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 0.1 && n <= 1.0 {
                    break v.map(|c| c / n);
                }
            };
            let r = rng.random_range(0.95..1.6);
            let x: [f64; 3] = std::array::from_fn(|c| anchor[c] + r * dir[c]);
            let ok = pos.iter().all(|p| {
                let d2: f64 = (0..3).map(|c| (p[c] - x[c]).powi(2)).sum();
                d2 >= 0.95 * 0.95
            });
            if ok {
                pos.push(x);
                continue 'place;
            }
        }
        return Err(Error::Geometry("could not place cluster atom".into()));
    }
    let z = (0..n_atoms).map(|_| species[rng.random_range(0..species.len())]).collect();
    AtomicStructure::new(pos, z)
}

/// `n` labelled Morse clusters of 3–8 atoms over H, C and O.
pub fn synthetic_clusters(n: usize, seed: u64) -> Result<Vec<AtomicStructure>> {
    let pot = hco_morse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let atoms = rng.random_range(3..=8);
            let mut s = label(random_cluster(&mut rng, atoms, &[1, 6, 8])?, &pot)?;
            s.info.insert("config_type".into(), format!("morse_cluster_{k}"));
            Ok(s)
        })
        .collect()
}

/// Frames from a Langevin trajectory on `provider`, one every `stride`
/// steps after `stride` steps of equilibration, labelled by `provider`.
pub fn sample_trajectory(
    start: &AtomicStructure,
    provider: &dyn ForceProvider,
    frames: usize,
    stride: usize,
    dt: f64,
    t_kelvin: f64,
    seed: u64,
) -> Result<Vec<AtomicStructure>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = MdState::new(start.clone(), provider)?;
    state.velocities = maxwell_boltzmann(&state.masses, t_kelvin, &mut rng);
    let mut out = Vec::with_capacity(frames);
    for _ in 0..stride {
        baoab_step(&mut state, provider, dt, t_kelvin, 0.02, &mut rng)?;
    }
    while out.len() < frames {
        for _ in 0..stride {
            baoab_step(&mut state, provider, dt, t_kelvin, 0.02, &mut rng)?;
        }
        let mut s = state.structure.clone();
        s.energy = state.potential_energy;
        s.forces = Some(state.forces.clone());
        s.info.insert("time_fs".into(), format!("{}", state.time));
        out.push(s);
    }
    Ok(out)
}

/// Water frames sampled at 500 K.
pub fn water_trajectory(frames: usize, seed: u64) -> Result<Vec<AtomicStructure>> {
    sample_trajectory(&water(), &water_morse(), frames, 40, 0.5, 500.0, seed)
}

/// `n³` atoms of species `z` on a periodic simple cubic lattice.
pub fn cubic_lattice(n: usize, spacing: f64, z: u32) -> Result<AtomicStructure> {
    if n == 0 || !(spacing > 0.0) {
        return Err(Error::Contract("lattice needs n ≥ 1 and a positive spacing".into()));
    }
    let mut pos = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pos.push([i as f64 * spacing, j as f64 * spacing, k as f64 * spacing]);
            }
        }
    }
    let l = n as f64 * spacing;
    AtomicStructure::new(pos, vec![z; n * n * n])?.with_cell([[l, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]], [true; 3])
}

/// Carbon at diamond number density (≈0.176 Å⁻³), 27, 64 or 216 atoms for
/// `n` = 3, 4, 6.
pub fn carbon_lattice(n: usize) -> Result<AtomicStructure> {
    cubic_lattice(n, 1.78, 6)
}
