use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Order-0 spherical Bessel basis `√(2/r_c)·sin(mπx/r_c)/x`, `m = 1..=n_rbf`,
/// orthonormal on `[0, r_c]` under the `x²dx` measure and zero at `x = r_c`.
pub fn bessel_rbf(x: &[f64], r_cut: f64, n_rbf: usize) -> Result<Tensor> {
    if !(r_cut > 0.0) {
        return Err(Error::Contract(format!("cutoff must be positive, got {r_cut}")));
    }
    let pref = (2.0 / r_cut).sqrt();
    let mut out = Vec::with_capacity(x.len() * n_rbf);
    for &d in x {
        if !(d > 0.0) {
            return Err(Error::Contract(format!("radial basis needs x > 0, got {d}")));
        }
        if d > r_cut * (1.0 + 1e-12) {
            return Err(Error::Contract(format!("radial basis needs x ≤ {r_cut}, got {d}")));
        }
        for m in 1..=n_rbf {
            // sin(mπ) evaluates to ~1e-16 in floating point, so pin the root
            let v = if d == r_cut { 0.0 } else { (m as f64 * PI * d / r_cut).sin() };
            out.push(pref * v / d);
        }
    }
    Tensor::new(vec![x.len(), n_rbf], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_value() {
        let t = bessel_rbf(&[2.5], 5.0, 1).unwrap();
        let want = (2.0f64 / 5.0).sqrt() / 2.5;
        assert!((t.data()[0] - want).abs() < 1e-15);
        assert!((t.data()[0] - 0.252_982_212_813_470_3).abs() < 1e-15);
    }

    #[test]
    fn zero_at_cutoff() {
        let t = bessel_rbf(&[5.0], 5.0, 8).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        let near = bessel_rbf(&[5.0 - 1e-9], 5.0, 8).unwrap();
        assert!(near.data().iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(bessel_rbf(&[0.0], 5.0, 4).is_err());
        assert!(bessel_rbf(&[-1.0], 5.0, 4).is_err());
        assert!(bessel_rbf(&[5.5], 5.0, 4).is_err());
    }
}
