//! Conservative analytic force fields: integrator oracles and label
//! generators for synthetic datasets.

use std::collections::BTreeMap;

use super::ForceProvider;
use crate::error::{Error, Result};
use crate::graph::{build_neighbor_list, AtomicStructure};

/// No forces at all.
#[derive(Clone, Copy, Debug, Default)]
pub struct FreeParticles;

impl ForceProvider for FreeParticles {
    fn energy_forces(&self, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
        Ok((Some(0.0), vec![[0.0; 3]; s.len()]))
    }
}

/// Each atom tethered to its own anchor: `E = ½k Σ|x_i − a_i|²`.
#[derive(Clone, Debug)]
pub struct HarmonicTether {
    pub k: f64,
    pub anchors: Vec<[f64; 3]>,
}

impl ForceProvider for HarmonicTether {
    fn energy_forces(&self, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
        if s.len() != self.anchors.len() {
            return Err(Error::Contract(format!("{} anchors for {} atoms", self.anchors.len(), s.len())));
        }
        let mut e = 0.0;
        let f = s
            .positions
            .iter()
            .zip(&self.anchors)
            .map(|(x, a)| {
                let d: [f64; 3] = std::array::from_fn(|k| x[k] - a[k]);
                e += 0.5 * self.k * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                [-self.k * d[0], -self.k * d[1], -self.k * d[2]]
            })
            .collect();
        Ok((Some(e), f))
    }
}

/// Sums a radial pair term over the neighbor list (periodic images
/// included). `pair(z_i, z_j, r)` returns `(φ, dφ/dr)`.
fn pair_sum(
    s: &AtomicStructure,
    r_cut: f64,
    pair: impl Fn(u32, u32, f64) -> (f64, f64),
) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
    let nl = build_neighbor_list(s, r_cut)?;
    let mut e = 0.0;
    let mut f = vec![[0.0; 3]; s.len()];
    for k in 0..nl.num_edges() {
        let (i, j, r) = (nl.dst[k], nl.src[k], nl.len[k]);
        let (phi, dphi) = pair(s.species[i], s.species[j], r);
        // every pair appears once per direction
        e += 0.5 * phi;
        let v = nl.vec[k];
        for c in 0..3 {
            // force on i from moving i: −dφ/dr · ∂r/∂x_i, with r = |x_j − x_i|
            f[i][c] += dphi * v[c] / r;
        }
    }
    Ok((Some(e), f))
}

/// Truncated and shifted Lennard-Jones: `4ε[(σ/r)¹² − (σ/r)⁶] − φ(r_cut)`.
#[derive(Clone, Copy, Debug)]
pub struct LennardJones {
    pub epsilon: f64,
    pub sigma: f64,
    pub r_cut: f64,
}

impl LennardJones {
    /// Argon-like parameters (eV, Å).
    pub fn argon() -> Self {
        LennardJones {
            epsilon: 0.0104,
            sigma: 3.40,
            r_cut: 8.5,
        }
    }

    fn raw(&self, r: f64) -> (f64, f64) {
        let sr6 = (self.sigma / r).powi(6);
        let e = 4.0 * self.epsilon * (sr6 * sr6 - sr6);
        let de = 4.0 * self.epsilon * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r;
        (e, de)
    }
}

impl ForceProvider for LennardJones {
    fn energy_forces(&self, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
        let shift = self.raw(self.r_cut).0;
        pair_sum(s, self.r_cut, |_, _, r| {
            let (e, de) = self.raw(r);
            (e - shift, de)
        })
    }
}

/// Morse parameters for one species pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorseParams {
    pub depth: f64,
    pub width: f64,
    pub r0: f64,
}

/// Pairwise Morse potential `D[(1 − e^{−a(r−r0)})² − 1]` times a smooth
/// cosine cutoff, with per-species reference energies added.
#[derive(Clone, Debug)]
pub struct MorsePairs {
    pub pairs: BTreeMap<(u32, u32), MorseParams>,
    pub reference: BTreeMap<u32, f64>,
    pub r_cut: f64,
}

impl MorsePairs {
    fn params(&self, a: u32, b: u32) -> Result<MorseParams> {
        let key = (a.min(b), a.max(b));
        self.pairs
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Data(format!("no Morse parameters for species pair {key:?}")))
    }
}

impl ForceProvider for MorsePairs {
    fn energy_forces(&self, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
        for &a in &s.species {
            for &b in &s.species {
                self.params(a, b)?;
            }
        }
        let rc = self.r_cut;
        let (e, f) = pair_sum(s, rc, |a, b, r| {
            let p = self.params(a, b).expect("checked");
            let x = (-p.width * (r - p.r0)).exp();
            let phi = p.depth * ((1.0 - x).powi(2) - 1.0);
            let dphi = 2.0 * p.depth * (1.0 - x) * p.width * x;
            let fc = 0.5 * (1.0 + (std::f64::consts::PI * r / rc).cos());
            let dfc = -0.5 * std::f64::consts::PI / rc * (std::f64::consts::PI * r / rc).sin();
            (phi * fc, dphi * fc + phi * dfc)
        })?;
        let mut e0 = 0.0;
        for z in &s.species {
            e0 += self.reference.get(z).copied().unwrap_or(0.0);
        }
        Ok((e.map(|v| v + e0), f))
    }
}
