use std::collections::BTreeMap;

use super::structure::{inverse3, AtomicStructure};
use crate::error::{Error, Result};
use crate::irreps::{IrrepsSpec, IrrepsTensor};
use crate::tensor::{Tape, Var};

/// Maps atomic numbers to embedding-table rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpeciesIndex {
    species: Vec<u32>,
    rows: BTreeMap<u32, usize>,
}

impl SpeciesIndex {
    pub fn new(species: &[u32]) -> Result<Self> {
        let mut sorted = species.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() || sorted[0] == 0 {
            return Err(Error::Config("species list must hold positive atomic numbers".into()));
        }
        let rows = sorted.iter().enumerate().map(|(i, &z)| (z, i)).collect();
        Ok(SpeciesIndex { species: sorted, rows })
    }

    pub fn species(&self) -> &[u32] {
        &self.species
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn row(&self, z: u32) -> Result<usize> {
        self.rows
            .get(&z)
            .copied()
            .ok_or_else(|| Error::Data(format!("species with atomic number {z} is not covered by the model")))
    }

    pub fn rows_of(&self, z: &[u32]) -> Result<Vec<usize>> {
        z.iter().map(|&z| self.row(z)).collect()
    }
}

/// Row lookup into a learnable `[n_species, dim]` table.
pub fn embed_species(tape: &mut Tape, z: &[u32], index: &SpeciesIndex, table: Var) -> Result<IrrepsTensor> {
    let rows = index.rows_of(z)?;
    let t = tape.value(table);
    if t.shape().len() != 2 || t.rows() != index.len() {
        return Err(Error::Dimension {
            op: "embed_species",
            lhs: t.shape().to_vec(),
            rhs: vec![index.len()],
        });
    }
    let dim = t.cols();
    let var = tape.index_select(table, &rows)?;
    Ok(IrrepsTensor::new(IrrepsSpec::scalars(dim), var))
}

/// Mean minimum-image distance from each atom to every other atom.
pub fn long_range_feature(s: &AtomicStructure) -> Result<Vec<f64>> {
    let n = s.len();
    if n < 2 {
        return Ok(vec![0.0; n]);
    }
    let inv = match (&s.cell, s.is_periodic()) {
        (Some(c), true) => Some((c, inverse3(c)?)),
        _ => None,
    };
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut total = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d: [f64; 3] = std::array::from_fn(|k| s.positions[j][k] - s.positions[i][k]);
            total += match &inv {
                None => (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt(),
                Some((c, inv)) => minimum_image(d, c, inv, s.pbc),
            };
        }
        out[i] = total / (n - 1) as f64;
    }
    Ok(out)
}

fn minimum_image(d: [f64; 3], c: &[[f64; 3]; 3], inv: &[[f64; 3]; 3], pbc: [bool; 3]) -> f64 {
    let mut f: [f64; 3] = std::array::from_fn(|k| (0..3).map(|m| d[m] * inv[m][k]).sum());
    for k in 0..3 {
        if pbc[k] {
            f[k] -= f[k].round();
        }
    }
    // reduced coordinates are within half a cell; a ±1 search settles skewed cells
    let r = |k: usize| if pbc[k] { -1..=1 } else { 0..=0 };
    let mut best = f64::INFINITY;
    for a in r(0) {
        for b in r(1) {
            for cc in r(2) {
                let g = [f[0] + a as f64, f[1] + b as f64, f[2] + cc as f64];
                let v: [f64; 3] = std::array::from_fn(|m| (0..3).map(|k| g[k] * c[k][m]).sum());
                best = best.min((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt());
            }
        }
    }
    best
}

/// Total charge (0 when absent) repeated on every atom.
pub fn charge_feature(s: &AtomicStructure) -> Vec<f64> {
    vec![s.total_charge.unwrap_or(0) as f64; s.len()]
}
