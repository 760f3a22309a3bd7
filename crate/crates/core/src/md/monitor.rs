use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_neighbor_list, AtomicStructure};

fn default_min_distance() -> f64 {
    0.5
}
fn default_bond_factor() -> Option<f64> {
    Some(2.0)
}
fn default_bond_cutoff() -> f64 {
    1.7
}
fn default_drift_factor() -> f64 {
    10.0
}

/// Instability criteria. Bond and drift checks apply to molecules
/// (structures without periodic axes) only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityMonitor {
    /// Smallest allowed pair distance, Å.
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
    /// A pair closer than `bond_cutoff` at the start counts as a bond and
    /// must stay shorter than this factor times its initial length.
    #[serde(default = "default_bond_factor")]
    pub max_bond_factor: Option<f64>,
    #[serde(default = "default_bond_cutoff")]
    pub bond_cutoff: f64,
    /// Atoms must stay within this factor times the initial bounding-box
    /// diagonal (at least 1 Å) of the current centroid, so rigid diffusion
    /// of the whole molecule under a thermostat is not flagged.
    #[serde(default = "default_drift_factor")]
    pub drift_factor: f64,
}

impl Default for StabilityMonitor {
    fn default() -> Self {
        StabilityMonitor {
            min_distance: default_min_distance(),
            max_bond_factor: default_bond_factor(),
            bond_cutoff: default_bond_cutoff(),
            drift_factor: default_drift_factor(),
        }
    }
}

/// The first failed criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooClose { i: usize, j: usize, distance: f64 },
    BondBroken { i: usize, j: usize, length: f64, initial: f64 },
    Drift { atom: usize, distance: f64, limit: f64 },
    NonFinite { message: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TooClose { i, j, distance } => write!(f, "atoms {i} and {j} at {distance:.3} Å"),
            Violation::BondBroken { i, j, length, initial } => {
                write!(f, "bond {i}-{j} stretched to {length:.3} Å from {initial:.3} Å")
            }
            Violation::Drift { atom, distance, limit } => {
                write!(f, "atom {atom} drifted {distance:.2} Å (limit {limit:.2} Å)")
            }
            Violation::NonFinite { message } => write!(f, "{message}"),
        }
    }
}

/// A monitor bound to the initial structure.
#[derive(Clone, Debug)]
pub struct BoundMonitor {
    settings: StabilityMonitor,
    bonds: Vec<(usize, usize, f64)>,
    drift_limit: f64,
    molecular: bool,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl StabilityMonitor {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_distance >= 0.0) || !(self.bond_cutoff > 0.0) || !(self.drift_factor > 0.0) {
            return Err(Error::Config("stability thresholds must be positive".into()));
        }
        if self.max_bond_factor.is_some_and(|f| !(f > 1.0)) {
            return Err(Error::Config("max_bond_factor must exceed 1".into()));
        }
        Ok(())
    }

    pub fn bind(&self, initial: &AtomicStructure) -> Result<BoundMonitor> {
        self.validate()?;
        let molecular = !initial.is_periodic();
        let mut bonds = Vec::new();
        let n = initial.len();
        let p = &initial.positions;
        if molecular && self.max_bond_factor.is_some() {
            for i in 0..n {
                for j in i + 1..n {
                    let d = dist(p[i], p[j]);
                    if d < self.bond_cutoff {
                        bonds.push((i, j, d));
                    }
                }
            }
        }
        let lo: [f64; 3] = std::array::from_fn(|c| p.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min));
        let hi: [f64; 3] = std::array::from_fn(|c| p.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max));
        let diag = if n > 0 { dist(lo, hi).max(1.0) } else { 1.0 };
        Ok(BoundMonitor {
            settings: self.clone(),
            bonds,
            drift_limit: self.drift_factor * diag,
            molecular,
        })
    }
}

impl BoundMonitor {
    pub fn check(&self, s: &AtomicStructure) -> Option<Violation> {
        if let Some(i) = s.positions.iter().position(|x| x.iter().any(|c| !c.is_finite())) {
            return Some(Violation::NonFinite {
                message: format!("non-finite position of atom {i}"),
            });
        }
        if self.settings.min_distance > 0.0 {
            match build_neighbor_list(s, self.settings.min_distance) {
                Ok(nl) => {
                    if let Some(k) = (0..nl.num_edges()).min_by(|&a, &b| nl.len[a].total_cmp(&nl.len[b])) {
                        return Some(Violation::TooClose {
                            i: nl.dst[k],
                            j: nl.src[k],
                            distance: nl.len[k],
                        });
                    }
                }
                Err(_) => {
                    return Some(Violation::TooClose {
                        i: 0,
                        j: 0,
                        distance: 0.0,
                    })
                }
            }
        }
        if !self.molecular {
            return None;
        }
        if let Some(factor) = self.settings.max_bond_factor {
            for &(i, j, d0) in &self.bonds {
                let d = dist(s.positions[i], s.positions[j]);
                if d > factor * d0 {
                    return Some(Violation::BondBroken {
                        i,
                        j,
                        length: d,
                        initial: d0,
                    });
                }
            }
        }
        let n = s.len().max(1) as f64;
        let centroid: [f64; 3] = std::array::from_fn(|c| s.positions.iter().map(|x| x[c]).sum::<f64>() / n);
        for (atom, x) in s.positions.iter().enumerate() {
            let d = dist(*x, centroid);
            if d > self.drift_limit {
                return Some(Violation::Drift {
                    atom,
                    distance: d,
                    limit: self.drift_limit,
                });
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn water() -> AtomicStructure {
        AtomicStructure::new(vec![[0.0; 3], [0.96, 0.0, 0.0], [-0.24, 0.93, 0.0]], vec![8, 1, 1]).unwrap()
    }

    #[test]
    fn each_criterion() {
        let m = StabilityMonitor::default().bind(&water()).unwrap();
        assert_eq!(m.check(&water()), None);
        let mut s = water();
        s.positions[1] = [0.3, 0.0, 0.0];
        assert!(matches!(m.check(&s), Some(Violation::TooClose { distance, .. }) if (distance - 0.3).abs() < 1e-12));
        let mut s = water();
        s.positions[1] = [2.5, 0.0, 0.0];
        assert!(matches!(m.check(&s), Some(Violation::BondBroken { i: 0, j: 1, .. })));
        let mut s = water();
        for p in &mut s.positions {
            p[2] += 100.0;
        }
        assert_eq!(m.check(&s), None);
        let loose = StabilityMonitor {
            max_bond_factor: None,
            ..StabilityMonitor::default()
        }
        .bind(&water())
        .unwrap();
        let mut s = water();
        s.positions[2] = [0.0, 60.0, 0.0];
        assert!(matches!(loose.check(&s), Some(Violation::Drift { .. })));
        let mut s = water();
        s.positions[2][0] = f64::NAN;
        assert!(matches!(m.check(&s), Some(Violation::NonFinite { .. })));
    }

    #[test]
    fn periodic_structures_skip_molecular_checks() {
        let s = water().with_cell([[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]], [true; 3]).unwrap();
        let m = StabilityMonitor::default().bind(&s).unwrap();
        let mut moved = s.clone();
        moved.positions[1] = [3.0, 0.0, 50.0];
        assert_eq!(m.check(&moved), None);
    }
}
