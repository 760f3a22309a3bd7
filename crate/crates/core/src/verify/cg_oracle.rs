use nalgebra::DMatrix;

use super::rotation::random_rotation;
use super::wigner::wigner_d;
use crate::error::{Error, Result};
use crate::irreps::IrrepsSpec;

/// Clebsch–Gordan block obtained as the null space of the intertwining
/// condition `C·(D1 ⊗ D2) = D3·C` over several random rotations, normalized so
/// each output component has unit norm and sign-fixed like the production
/// table. Dense, indexed `(m1*d2 + m2)*d3 + m3`.
pub fn null_space_cg(l1: u32, l2: u32, l3: u32) -> Result<Vec<f64>> {
    if l3 < l1.abs_diff(l2) || l3 > l1 + l2 {
        return Err(Error::Oracle(format!("{l1}⊗{l2}→{l3} violates the triangle rule")));
    }
    let (d1, d2, d3) = (2 * l1 as usize + 1, 2 * l2 as usize + 1, 2 * l3 as usize + 1);
    let n = d1 * d2 * d3;
    let col = |a: usize, b: usize, c: usize| (a * d2 + b) * d3 + c;
    let rotations = 3;
    let mut m = DMatrix::<f64>::zeros(rotations * n, n);
    for r in 0..rotations {
        let rot = random_rotation(1000 + r as u64).rotation;
        let (w1, w2, w3) = (wigner_d(l1, &rot)?, wigner_d(l2, &rot)?, wigner_d(l3, &rot)?);
        for m1 in 0..d1 {
            for m2 in 0..d2 {
                for m3 in 0..d3 {
                    let row = r * n + col(m1, m2, m3);
                    for a in 0..d1 {
                        for b in 0..d2 {
                            m[(row, col(a, b, m3))] += w1[a * d1 + m1] * w2[b * d2 + m2];
                        }
                    }
                    for c in 0..d3 {
                        m[(row, col(m1, m2, c))] -= w3[m3 * d3 + c];
                    }
                }
            }
        }
    }
    let svd = (m.transpose() * &m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.eigenvalues[a].total_cmp(&svd.eigenvalues[b]));
    let lo = svd.eigenvalues[order[0]];
    let next = order.get(1).map_or(f64::INFINITY, |&i| svd.eigenvalues[i]);
    if lo.abs() > 1e-10 || next < 1e-6 {
        return Err(Error::Oracle(format!(
            "null space of {l1}⊗{l2}→{l3} not one-dimensional ({lo:e}, {next:e})"
        )));
    }
    let v = svd.eigenvectors.column(order[0]);
    let norm = v.norm();
    let scale = (d3 as f64).sqrt() / norm;
    let mut out: Vec<f64> = v.iter().map(|x| x * scale).collect();
    for x in out.iter_mut() {
        if x.abs() < 1e-13 {
            *x = 0.0;
        }
    }
    if let Some(first) = out.iter().find(|x| x.abs() > 1e-10) {
        if *first < 0.0 {
            out.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(out)
}

/// Naive evaluation of a channelwise weighted tensor product for an explicit
/// path list (same weight layout: per path, one weight per output channel).
pub fn direct_tensor_product(
    a: &IrrepsSpec,
    b: &IrrepsSpec,
    out: &IrrepsSpec,
    paths: &[(usize, usize, usize)],
    weights: &[f64],
    a_rows: &[f64],
    b_rows: &[f64],
) -> Result<Vec<f64>> {
    let rows = a_rows.len() / a.dim().max(1);
    let mut counts = vec![0usize; out.len()];
    for &(_, _, k) in paths {
        counts[k] += 1;
    }
    let blocks: Vec<Vec<f64>> = paths
        .iter()
        .map(|&(i, j, k)| null_space_cg(a.entries()[i].irrep.l, b.entries()[j].irrep.l, out.entries()[k].irrep.l))
        .collect::<Result<_>>()?;
    let (ao, bo, oo) = (a.offsets(), b.offsets(), out.offsets());
    let mut res = vec![0.0; rows * out.dim()];
    for r in 0..rows {
        let mut woff = 0;
        for (p, &(i, j, k)) in paths.iter().enumerate() {
            let mult = out.entries()[k].mult;
            let (d1, d2, d3) = (
                a.entries()[i].irrep.dim(),
                b.entries()[j].irrep.dim(),
                out.entries()[k].irrep.dim(),
            );
            for u in 0..mult {
                let w = weights[woff + u] / (counts[k] as f64).sqrt();
                for m3 in 0..d3 {
                    let mut s = 0.0;
                    for m1 in 0..d1 {
                        for m2 in 0..d2 {
                            s += blocks[p][(m1 * d2 + m2) * d3 + m3]
                                * a_rows[r * a.dim() + ao[i] + u * d1 + m1]
                                * b_rows[r * b.dim() + bo[j] + u * d2 + m2];
                        }
                    }
                    res[r * out.dim() + oo[k] + u * d3 + m3] += w * s;
                }
            }
            woff += mult;
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::CGTable;

    #[test]
    fn null_space_matches_racah_table() {
        let table = CGTable::global();
        for l1 in 0..=3u32 {
            for l2 in 0..=3u32 {
                for l3 in l1.abs_diff(l2)..=(l1 + l2).min(3) {
                    let oracle = null_space_cg(l1, l2, l3).unwrap();
                    let block = table.block(l1, l2, l3).unwrap();
                    let (d2, d3) = (2 * l2 as usize + 1, 2 * l3 as usize + 1);
                    for m1 in 0..(2 * l1 as usize + 1) {
                        for m2 in 0..d2 {
                            for m3 in 0..d3 {
                                let o = oracle[(m1 * d2 + m2) * d3 + m3];
                                assert!((o - block.get(m1, m2, m3)).abs() < 1e-12, "({l1},{l2},{l3})");
                            }
                        }
                    }
                }
            }
        }
    }
}
