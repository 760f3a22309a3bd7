use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub fn det3(c: &Mat3) -> f64 {
    c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
        + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0])
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Inverse of a cell whose rows are lattice vectors.
pub fn inverse3(c: &Mat3) -> Result<Mat3> {
    let d = det3(c);
    if d.abs() <= 1e-10 {
        return Err(Error::Geometry(format!("cell is degenerate (det = {d:e} Å³)")));
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (c[r0][c0] * c[r1][c1] - c[r0][c1] * c[r1][c0]) / d;
        }
    }
    Ok(inv)
}

/// Distance between opposite faces of the cell along each lattice direction.
pub fn perpendicular_heights(c: &Mat3) -> Result<[f64; 3]> {
    let vol = det3(c).abs();
    if vol <= 1e-10 {
        return Err(Error::Geometry(format!("cell is degenerate (|det| = {vol:e} Å³)")));
    }
    Ok(std::array::from_fn(|k| vol / norm3(cross(c[(k + 1) % 3], c[(k + 2) % 3]))))
}

/// An atomic configuration with optional labels, in Å / eV.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicStructure {
    pub positions: Vec<[f64; 3]>,
    pub species: Vec<u32>,
    /// Lattice vectors as rows.
    pub cell: Option<Mat3>,
    pub pbc: [bool; 3],
    pub total_charge: Option<i32>,
    pub energy: Option<f64>,
    pub forces: Option<Vec<[f64; 3]>>,
    /// Voigt order xx, yy, zz, yz, xz, xy.
    pub stress: Option<[f64; 6]>,
    /// Extra comment-line keys, kept verbatim for round trips.
    pub info: BTreeMap<String, String>,
}

impl AtomicStructure {
    pub fn new(positions: Vec<[f64; 3]>, species: Vec<u32>) -> Result<Self> {
        let s = AtomicStructure {
            positions,
            species,
            cell: None,
            pbc: [false; 3],
            total_charge: None,
            energy: None,
            forces: None,
            stress: None,
            info: BTreeMap::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_cell(mut self, cell: Mat3, pbc: [bool; 3]) -> Result<Self> {
        self.cell = Some(cell);
        self.pbc = pbc;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.pbc.iter().any(|&p| p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::Data("structure has no atoms".into()));
        }
        if self.species.len() != self.positions.len() {
            return Err(Error::Data(format!(
                "{} species for {} positions",
                self.species.len(),
                self.positions.len()
            )));
        }
        if let Some(&z) = self.species.iter().find(|&&z| z == 0) {
            return Err(Error::Data(format!("invalid atomic number {z}")));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite position".into()));
        }
        if let Some(f) = &self.forces {
            if f.len() != self.positions.len() {
                return Err(Error::Data(format!("{} force rows for {} atoms", f.len(), self.positions.len())));
            }
        }
        if self.is_periodic() {
            match &self.cell {
                None => return Err(Error::Geometry("periodic structure without a cell".into())),
                Some(c) => {
                    let d = det3(c);
                    if d.abs() <= 1e-10 {
                        return Err(Error::Geometry(format!("cell is degenerate (det = {d:e} Å³)")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Atoms reordered so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract("not a permutation of the atoms".into()));
        }
        let mut s = self.clone();
        s.positions = perm.iter().map(|&p| self.positions[p]).collect();
        s.species = perm.iter().map(|&p| self.species[p]).collect();
        s.forces = self.forces.as_ref().map(|f| perm.iter().map(|&p| f[p]).collect());
        Ok(s)
    }

    /// Periodic replication `na × nb × nc` of the structure along its cell.
    pub fn supercell(&self, reps: [usize; 3]) -> Result<Self> {
        let cell = self
            .cell
            .ok_or_else(|| Error::Geometry("supercell requires a cell".into()))?;
        if reps.contains(&0) {
            return Err(Error::Contract("replication counts must be positive".into()));
        }
        let mut s = self.clone();
        s.positions.clear();
        s.species.clear();
        s.energy = None;
        s.forces = None;
        s.stress = None;
        for a in 0..reps[0] {
            for b in 0..reps[1] {
                for c in 0..reps[2] {
                    let shift: [f64; 3] =
                        std::array::from_fn(|k| a as f64 * cell[0][k] + b as f64 * cell[1][k] + c as f64 * cell[2][k]);
                    for (p, &z) in self.positions.iter().zip(&self.species) {
                        s.positions.push([p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]);
                        s.species.push(z);
                    }
                }
            }
        }
        s.cell = Some(std::array::from_fn(|k| cell[k].map(|v| v * reps[k] as f64)));
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(AtomicStructure::new(vec![], vec![]).is_err());
        assert!(AtomicStructure::new(vec![[0.0; 3]], vec![0]).is_err());
        let s = AtomicStructure::new(vec![[0.0; 3]], vec![1]).unwrap();
        let flat = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(s.clone().with_cell(flat, [true; 3]), Err(Error::Geometry(_))));
        // a degenerate cell is tolerated when no axis is periodic
        assert!(s.clone().with_cell(flat, [false; 3]).is_ok());
        let mut bad = s.clone();
        bad.forces = Some(vec![[0.0; 3]; 2]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cell_helpers() {
        let c = [[2.0, 0.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.5, 4.0]];
        let inv = inverse3(&c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let p: f64 = (0..3).map(|k| c[i][k] * inv[k][j]).sum();
                assert!((p - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let h = perpendicular_heights(&[[3.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 5.0]]).unwrap();
        assert_eq!(h, [3.0, 4.0, 5.0]);
    }

    #[test]
    fn supercell_counts() {
        let s = AtomicStructure::new(vec![[0.0; 3]], vec![6])
            .unwrap()
            .with_cell([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]], [true; 3])
            .unwrap();
        let big = s.supercell([2, 3, 1]).unwrap();
        assert_eq!(big.len(), 6);
        assert_eq!(big.cell.unwrap()[1][1], 6.0);
    }
}
