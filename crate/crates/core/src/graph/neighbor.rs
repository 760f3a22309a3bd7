use rayon::prelude::*;

use super::structure::{inverse3, perpendicular_heights, AtomicStructure};
use crate::error::{Error, Result};

/// Directed edges of a structure. Edge `e` points from center `dst[e]` to
/// neighbor `src[e]` seen through lattice image `shift[e]`:
/// `vec[e] = r[src] + shift·C − r[dst]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborList {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub shift: Vec<[i32; 3]>,
    pub vec: Vec<[f64; 3]>,
    pub len: Vec<f64>,
}

impl NeighborList {
    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Distinct-atom pairs closer than this are rejected as overlapping.
const COINCIDENT: f64 = 1e-8;

/// All pairs with `0 < |r_j + n·C − r_i| ≤ r_cut`, sorted by `(i, j, n)`.
pub fn build_neighbor_list(s: &AtomicStructure, r_cut: f64) -> Result<NeighborList> {
    if !(r_cut > 0.0 && r_cut.is_finite()) {
        return Err(Error::Contract(format!("cutoff must be positive, got {r_cut}")));
    }
    s.validate()?;
    let n = s.len();
    let periodic = s.is_periodic();
    let cell = s.cell.unwrap_or([[0.0; 3]; 3]);

    // Wrap periodic coordinates into [0, 1) and remember the integer offset,
    // so the image search range only has to cover one cell of slack.
    let mut wrapped = s.positions.clone();
    let mut offset = vec![[0i32; 3]; n];
    let mut range = [0i32; 3];
    if periodic {
        let inv = inverse3(&cell)?;
        let heights = perpendicular_heights(&cell)?;
        for k in 0..3 {
            if s.pbc[k] {
                range[k] = (r_cut / heights[k]).ceil() as i32 + 1;
            }
        }
        for (a, p) in s.positions.iter().enumerate() {
            let frac: [f64; 3] = std::array::from_fn(|k| (0..3).map(|m| p[m] * inv[m][k]).sum());
            for k in 0..3 {
                if s.pbc[k] {
                    offset[a][k] = frac[k].floor() as i32;
                }
            }
            let shift: [f64; 3] = std::array::from_fn(|m| (0..3).map(|k| offset[a][k] as f64 * cell[k][m]).sum());
            wrapped[a] = [p[0] - shift[0], p[1] - shift[1], p[2] - shift[2]];
        }
    }

    let mut images = Vec::new();
    for a in -range[0]..=range[0] {
        for b in -range[1]..=range[1] {
            for c in -range[2]..=range[2] {
                let t: [f64; 3] =
                    std::array::from_fn(|m| a as f64 * cell[0][m] + b as f64 * cell[1][m] + c as f64 * cell[2][m]);
                images.push(([a, b, c], t));
            }
        }
    }

    let r2 = r_cut * r_cut;
    let per_center: Vec<Result<Vec<(usize, [i32; 3], [f64; 3], f64)>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut found = Vec::new();
            let ri = wrapped[i];
            for j in 0..n {
                let rj = wrapped[j];
                for (img, t) in &images {
                    let v = [rj[0] + t[0] - ri[0], rj[1] + t[1] - ri[1], rj[2] + t[2] - ri[2]];
                    let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                    if d2 > r2 {
                        continue;
                    }
                    let d = d2.sqrt();
                    if d < COINCIDENT {
                        if i == j && *img == [0, 0, 0] {
                            continue;
                        }
                        return Err(Error::Geometry(format!("atoms {i} and {j} overlap (image {img:?})")));
                    }
                    let shift: [i32; 3] = std::array::from_fn(|k| img[k] - offset[j][k] + offset[i][k]);
                    found.push((j, shift, v, d));
                }
            }
            found.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
            Ok(found)
        })
        .collect();

    let mut nl = NeighborList::default();
    for (i, edges) in per_center.into_iter().enumerate() {
        for (j, shift, v, d) in edges? {
            nl.dst.push(i);
            nl.src.push(j);
            nl.shift.push(shift);
            nl.vec.push(v);
            nl.len.push(d);
        }
    }
    Ok(nl)
}
