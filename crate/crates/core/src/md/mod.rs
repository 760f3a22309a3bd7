//! Molecular dynamics in eV, Å, fs and amu: velocity Verlet, BAOAB
//! Langevin, a stability monitor, and a trajectory driver.

mod integrate;
mod monitor;
pub mod potentials;
mod run;

pub use integrate::{baoab_step, kinetic_energy, maxwell_boltzmann, temperature, velocity_verlet_step};
pub use monitor::{BoundMonitor, StabilityMonitor, Violation};
pub use run::{run_md, MdConfig, MdReport, MdRun};

use crate::error::{Error, Result};
use crate::graph::{elements, AtomicStructure};
use crate::model::MlaNet;

/// (eV/Å)/amu in Å/fs².
pub const ACCEL_UNIT: f64 = 9.648_533_212e-3;
/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617_333_262e-5;

/// Anything that returns forces (and optionally an energy) for a structure.
pub trait ForceProvider {
    fn energy_forces(&self, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)>;
}

impl ForceProvider for MlaNet {
    fn energy_forces(&self, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
        let p = self.predict(s)?;
        let f = p
            .forces
            .ok_or_else(|| Error::Md("model has no force head (hidden irreps lack 1o)".into()))?;
        Ok((Some(p.energy), f))
    }
}

/// Positions, velocities and the forces at the current positions.
#[derive(Clone, Debug, PartialEq)]
pub struct MdState {
    /// Source structure; its positions are kept current.
    pub structure: AtomicStructure,
    /// Å/fs.
    pub velocities: Vec<[f64; 3]>,
    /// amu.
    pub masses: Vec<f64>,
    /// eV/Å at the current positions.
    pub forces: Vec<[f64; 3]>,
    /// eV, when the provider reports one.
    pub potential_energy: Option<f64>,
    /// fs.
    pub time: f64,
    pub step: usize,
}

impl MdState {
    /// Element masses, zero velocities and initial forces.
    pub fn new(structure: AtomicStructure, provider: &dyn ForceProvider) -> Result<Self> {
        let masses = structure.species.iter().map(|&z| elements::mass(z)).collect::<Result<Vec<_>>>()?;
        Self::with_masses(structure, masses, provider)
    }

    pub fn with_masses(structure: AtomicStructure, masses: Vec<f64>, provider: &dyn ForceProvider) -> Result<Self> {
        if masses.len() != structure.len() || masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Md("one positive mass per atom required".into()));
        }
        let (potential_energy, forces) = checked_forces(provider, &structure)?;
        Ok(MdState {
            velocities: vec![[0.0; 3]; structure.len()],
            structure,
            masses,
            forces,
            potential_energy,
            time: 0.0,
            step: 0,
        })
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.structure.positions
    }

    /// Potential plus kinetic energy, eV.
    pub fn total_energy(&self) -> Option<f64> {
        self.potential_energy.map(|e| e + kinetic_energy(&self.masses, &self.velocities))
    }
}

pub(crate) fn checked_forces(provider: &dyn ForceProvider, s: &AtomicStructure) -> Result<(Option<f64>, Vec<[f64; 3]>)> {
    let (e, f) = provider.energy_forces(s)?;
    if f.len() != s.len() {
        return Err(Error::Md(format!("force provider returned {} rows for {} atoms", f.len(), s.len())));
    }
    if let Some(i) = f.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(Error::Md(format!("non-finite force on atom {i}")));
    }
    Ok((e, f))
}
