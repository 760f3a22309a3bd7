//! Real spherical harmonics with component normalization.
//!
//! Block `l` holds components `m = -l..=l`; for `l = 1` this is `√3·(y, z, x)`.
//! Every block has Euclidean norm `√(2l+1)` on a unit vector, so block 0 is
//! identically 1. No Condon–Shortley phase is applied.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::IrrepsSpec;

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Per-(l, |m|) prefactors `√((2l+1)(l−|m|)!/(l+|m|)!)`, times √2 for m ≠ 0.
struct Norms {
    l_max: u32,
    values: Vec<f64>,
}

impl Norms {
    fn new(l_max: u32) -> Self {
        let mut values = Vec::new();
        for l in 0..=l_max {
            for m in 0..=l {
                let mut v = ((2 * l + 1) as f64 * factorial(l - m) / factorial(l + m)).sqrt();
                if m > 0 {
                    v *= std::f64::consts::SQRT_2;
                }
                values.push(v);
            }
        }
        Norms { l_max, values }
    }

    fn get(&self, l: u32, m: u32) -> f64 {
        self.values[(l * (l + 1) / 2 + m) as usize]
    }
}

/// Writes all blocks `0..=l_max` for one unit direction into `out`.
fn eval_into(l_max: u32, norms: &Norms, d: [f64; 3], out: &mut [f64]) {
    debug_assert!(norms.l_max >= l_max);
    let [x, y, z] = d;
    let lm = l_max as usize;
    // cos/sin parts of (x + iy)^m
    let mut cm = vec![0.0; lm + 1];
    let mut sm = vec![0.0; lm + 1];
    cm[0] = 1.0;
    for m in 1..=lm {
        cm[m] = x * cm[m - 1] - y * sm[m - 1];
        sm[m] = x * sm[m - 1] + y * cm[m - 1];
    }
    // reduced associated Legendre P_l^m(z) / (1 - z²)^{m/2}, no phase
    let mut p = vec![0.0; (lm + 1) * (lm + 1)];
    let idx = |l: usize, m: usize| l * (lm + 1) + m;
    let mut dfact = 1.0;
    for m in 0..=lm {
        if m > 0 {
            dfact *= (2 * m - 1) as f64;
        }
        p[idx(m, m)] = dfact;
        if m < lm {
            p[idx(m + 1, m)] = z * (2 * m + 1) as f64 * dfact;
        }
        for l in m + 2..=lm {
            p[idx(l, m)] = ((2 * l - 1) as f64 * z * p[idx(l - 1, m)]
                - (l + m - 1) as f64 * p[idx(l - 2, m)])
                / (l - m) as f64;
        }
    }
    for l in 0..=lm {
        let base = l * l + l; // column of m = 0
        out[base] = norms.get(l as u32, 0) * p[idx(l, 0)];
        for m in 1..=l {
            let n = norms.get(l as u32, m as u32) * p[idx(l, m)];
            out[base + m] = n * cm[m];
            out[base - m] = n * sm[m];
        }
    }
}

/// Spherical harmonics of one direction, flattened over `l = 0..=l_max`.
pub fn spherical_harmonics_of(l_max: u32, d: [f64; 3]) -> Vec<f64> {
    let norms = Norms::new(l_max);
    let mut out = vec![0.0; ((l_max + 1) * (l_max + 1)) as usize];
    eval_into(l_max, &norms, d, &mut out);
    out
}

/// Evaluates `Y_0..Y_{l_max}` on each row of `directions`, returning an
/// `[E, (l_max+1)²]` tensor laid out as [`IrrepsSpec::spherical_harmonics`].
pub fn spherical_harmonics(l_max: u32, directions: &[[f64; 3]]) -> Result<Tensor> {
    let norms = Norms::new(l_max);
    let dim = IrrepsSpec::spherical_harmonics(l_max).dim();
    let mut data = vec![0.0; directions.len() * dim];
    for (k, d) in directions.iter().enumerate() {
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if (n - 1.0).abs() > 1e-8 {
            return Err(Error::Contract(format!(
                "direction {k} has norm {n}, expected a unit vector"
            )));
        }
        eval_into(l_max, &norms, *d, &mut data[k * dim..(k + 1) * dim]);
    }
    Tensor::new(vec![directions.len(), dim], data)
}
