use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::graph::AtomicStructure;

/// One directed edge `(center, neighbor, image shift)` with its length.
pub type BruteEdge = (usize, usize, [i32; 3], f64);

/// Exhaustive `O(N²·(2s+1)³)` search over images `n ∈ [−s, s]³` on the
/// periodic axes, using the raw (unwrapped) positions.
pub fn brute_force_neighbors(s: &AtomicStructure, r_cut: f64, shift_range: i32) -> Result<Vec<BruteEdge>> {
    let periodic = s.pbc.iter().any(|&p| p);
    let cell = match (s.cell, periodic) {
        (Some(c), true) => Matrix3::from_fn(|i, j| c[i][j]),
        (None, true) => return Err(Error::Oracle("periodic structure without a cell".into())),
        _ => Matrix3::zeros(),
    };
    let mut range = [0i32; 3];
    if periodic {
        let inv = cell
            .try_inverse()
            .ok_or_else(|| Error::Oracle("singular cell".into()))?;
        let vol = cell.determinant().abs();
        for k in 0..3 {
            if !s.pbc[k] {
                continue;
            }
            let a = cell.row((k + 1) % 3).transpose();
            let b = cell.row((k + 2) % 3).transpose();
            let height = vol / a.cross(&b).norm();
            let fr: Vec<f64> = s
                .positions
                .iter()
                .map(|p| (Vector3::new(p[0], p[1], p[2]).transpose() * inv)[k])
                .collect();
            let span = fr.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - fr.iter().cloned().fold(f64::INFINITY, f64::min);
            let needed = (r_cut / height + span).ceil() as i32;
            if needed > shift_range {
                return Err(Error::Oracle(format!(
                    "shift range {shift_range} does not cover axis {k} (needs {needed})"
                )));
            }
            range[k] = shift_range;
        }
    }
    let mut edges = Vec::new();
    for i in 0..s.len() {
        for j in 0..s.len() {
            for a in -range[0]..=range[0] {
                for b in -range[1]..=range[1] {
                    for c in -range[2]..=range[2] {
                        let n = Vector3::new(a as f64, b as f64, c as f64);
                        let t = cell.transpose() * n;
                        let ri = Vector3::from(s.positions[i]);
                        let rj = Vector3::from(s.positions[j]);
                        let d = (rj + t - ri).norm();
                        if d > 0.0 && d <= r_cut && !(i == j && a == 0 && b == 0 && c == 0) {
                            edges.push((i, j, [a, b, c], d));
                        }
                    }
                }
            }
        }
    }
    edges.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_cell_counts() {
        let s = AtomicStructure::new(vec![[0.0; 3]], vec![1])
            .unwrap()
            .with_cell([[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]], [true; 3])
            .unwrap();
        assert_eq!(brute_force_neighbors(&s, 3.0, 3).unwrap().len(), 6);
        assert_eq!(brute_force_neighbors(&s, 2.9, 3).unwrap().len(), 0);
        assert!(brute_force_neighbors(&s, 12.0, 3).is_err());
    }
}
