use nalgebra::DMatrix;

use super::rotation::{mat_vec, Mat3};
use crate::error::{Error, Result};
use crate::irreps::{spherical_harmonics_of, IrrepsSpec};

/// Quasi-uniform Fibonacci points on the unit sphere.
fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Wigner-D matrix of order `l` for rotation `r`, fitted by least squares so
/// that `Y_l(R·û) = D·Y_l(û)` over sampled directions. Returned row-major.
pub fn wigner_d(l: u32, r: &Mat3) -> Result<Vec<f64>> {
    let d = 2 * l as usize + 1;
    let k = (2 * d * d).max(16);
    let dirs = fibonacci_sphere(k);
    let block = |v: [f64; 3]| {
        let y = spherical_harmonics_of(l, v);
        y[(l * l) as usize..].to_vec()
    };
    let mut a = DMatrix::<f64>::zeros(k, d);
    let mut b = DMatrix::<f64>::zeros(k, d);
    for (row, u) in dirs.iter().enumerate() {
        let y0 = block(*u);
        let y1 = block(mat_vec(r, *u));
        for c in 0..d {
            a[(row, c)] = y0[c];
            b[(row, c)] = y1[c];
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin < 1e-6 * smax {
        return Err(Error::Oracle(format!("ill-conditioned sample set for l={l}: {smin}/{smax}")));
    }
    let dt = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::Oracle(format!("least squares failed: {e}")))?;
    let residual = (&a * &dt - &b).amax();
    if residual > 1e-10 {
        return Err(Error::Oracle(format!("Wigner-D fit residual {residual} for l={l}")));
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = dt[(j, i)];
        }
    }
    Ok(out)
}

/// Cached Wigner-D blocks for one rotation, used to rotate irreps features.
pub struct WignerSet {
    blocks: Vec<Vec<f64>>,
    det: f64,
}

impl WignerSet {
    pub fn new(r: &Mat3, l_max: u32) -> Result<Self> {
        let blocks = (0..=l_max).map(|l| wigner_d(l, r)).collect::<Result<_>>()?;
        Ok(WignerSet {
            blocks,
            det: super::rotation::det(r),
        })
    }

    pub fn block(&self, l: u32) -> &[f64] {
        &self.blocks[l as usize]
    }

    /// Applies `D(R)` (times `det(R)` for odd-parity entries) to every row of
    /// a `[rows, spec.dim()]` buffer.
    pub fn rotate(&self, spec: &IrrepsSpec, data: &[f64]) -> Vec<f64> {
        let dim = spec.dim();
        let mut out = vec![0.0; data.len()];
        for (row_in, row_out) in data.chunks(dim).zip(out.chunks_mut(dim)) {
            for (e, off) in spec.entries().iter().zip(spec.offsets()) {
                let d = e.irrep.dim();
                let mat = &self.blocks[e.irrep.l as usize];
                let sign = if e.irrep.parity == crate::irreps::Parity::Odd && e.irrep.l % 2 == 0 {
                    self.det
                } else if e.irrep.parity == crate::irreps::Parity::Even && e.irrep.l % 2 == 1 {
                    self.det
                } else {
                    1.0
                };
                for u in 0..e.mult {
                    let base = off + u * d;
                    for i in 0..d {
                        let s: f64 = (0..d).map(|j| mat[i * d + j] * row_in[base + j]).sum();
                        row_out[base + i] = sign * s;
                    }
                }
            }
        }
        out
    }
}
