//! Real-basis Clebsch–Gordan coefficients.
//!
//! Complex coefficients come from the Racah formula and are rotated into the
//! real spherical-harmonic basis of [`super::sh`]. Each `(l1, l2, l3)` block is
//! then sign-fixed so that its first nonzero entry in `(m1, m2, m3)` order is
//! positive.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Complex;

/// Highest rotation order stored in the shared table.
pub const CG_L_MAX: u32 = 4;

fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).map(|k| k as f64).product()
}

/// `<l1 m1 l2 m2 | l3 m3>` in the Condon–Shortley convention.
pub fn complex_cg(l1: i64, m1: i64, l2: i64, m2: i64, l3: i64, m3: i64) -> f64 {
    if m1 + m2 != m3 || l3 < (l1 - l2).abs() || l3 > l1 + l2 {
        return 0.0;
    }
    if m1.abs() > l1 || m2.abs() > l2 || m3.abs() > l3 {
        return 0.0;
    }
    let pre = ((2 * l3 + 1) as f64 * factorial(l3 + l1 - l2) * factorial(l3 - l1 + l2) * factorial(l1 + l2 - l3)
        / factorial(l1 + l2 + l3 + 1))
    .sqrt();
    let pre2 = (factorial(l3 + m3)
        * factorial(l3 - m3)
        * factorial(l1 - m1)
        * factorial(l1 + m1)
        * factorial(l2 - m2)
        * factorial(l2 + m2))
    .sqrt();
    let mut sum = 0.0;
    for k in 0..=(l1 + l2 + l3) {
        let args = [
            k,
            l1 + l2 - l3 - k,
            l1 - m1 - k,
            l2 + m2 - k,
            l3 - l2 + m1 + k,
            l3 - l1 - m2 + k,
        ];
        if args.iter().any(|&a| a < 0) {
            continue;
        }
        let denom: f64 = args.iter().map(|&a| factorial(a)).product();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    pre * pre2 * sum
}

/// Nonzero entries of the complex→real change of basis for row `m` of order
/// `l`: pairs `(complex m', coefficient)`.
fn real_basis_row(m: i64) -> Vec<(i64, Complex<f64>)> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if m.abs() % 2 == 0 { 1.0 } else { -1.0 };
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => vec![(0, Complex::new(1.0, 0.0))],
        std::cmp::Ordering::Greater => vec![(m, Complex::new(sign * h, 0.0)), (-m, Complex::new(h, 0.0))],
        std::cmp::Ordering::Less => vec![(m, Complex::new(0.0, h)), (-m, Complex::new(0.0, -sign * h))],
    }
}

/// One coupling block `l1 ⊗ l2 → l3`, dense over `(2l1+1)(2l2+1)(2l3+1)`
/// with sparse nonzeros kept alongside.
#[derive(Clone, Debug)]
pub struct CGBlock {
    pub l1: u32,
    pub l2: u32,
    pub l3: u32,
    dense: Vec<f64>,
    /// `(m1, m2, m3, value)` with indices into `0..2l+1`.
    pub nonzeros: Vec<(usize, usize, usize, f64)>,
}

impl CGBlock {
    fn build(l1: u32, l2: u32, l3: u32) -> Self {
        let (d1, d2, d3) = (2 * l1 as usize + 1, 2 * l2 as usize + 1, 2 * l3 as usize + 1);
        let (a1, a2, a3) = (l1 as i64, l2 as i64, l3 as i64);
        let mut re = vec![0.0; d1 * d2 * d3];
        let mut im = vec![0.0; d1 * d2 * d3];
        for i1 in 0..d1 {
            let r1 = real_basis_row(i1 as i64 - a1);
            for i2 in 0..d2 {
                let r2 = real_basis_row(i2 as i64 - a2);
                for i3 in 0..d3 {
                    let r3 = real_basis_row(i3 as i64 - a3);
                    let mut acc = Complex::new(0.0, 0.0);
                    for &(c1, u1) in &r1 {
                        for &(c2, u2) in &r2 {
                            for &(c3, u3) in &r3 {
                                let c = complex_cg(a1, c1, a2, c2, a3, c3);
                                if c != 0.0 {
                                    acc += u3 * u1.conj() * u2.conj() * c;
                                }
                            }
                        }
                    }
                    let k = (i1 * d2 + i2) * d3 + i3;
                    re[k] = acc.re;
                    im[k] = acc.im;
                }
            }
        }
        // the block is either purely real or purely imaginary
        let re_n: f64 = re.iter().map(|v| v * v).sum();
        let im_n: f64 = im.iter().map(|v| v * v).sum();
        let mut dense = if re_n >= im_n { re } else { im };
        for v in dense.iter_mut() {
            if v.abs() < 1e-14 {
                *v = 0.0;
            }
        }
        if let Some(first) = dense.iter().find(|v| v.abs() > 1e-10) {
            if *first < 0.0 {
                dense.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let mut nonzeros = Vec::new();
        for i1 in 0..d1 {
            for i2 in 0..d2 {
                for i3 in 0..d3 {
                    let v = dense[(i1 * d2 + i2) * d3 + i3];
                    if v != 0.0 {
                        nonzeros.push((i1, i2, i3, v));
                    }
                }
            }
        }
        CGBlock {
            l1,
            l2,
            l3,
            dense,
            nonzeros,
        }
    }

    pub fn get(&self, m1: usize, m2: usize, m3: usize) -> f64 {
        let (d2, d3) = (2 * self.l2 as usize + 1, 2 * self.l3 as usize + 1);
        self.dense[(m1 * d2 + m2) * d3 + m3]
    }
}

/// All blocks with `l1, l2, l3 ≤ l_max` obeying `|l1−l2| ≤ l3 ≤ l1+l2`.
#[derive(Debug)]
pub struct CGTable {
    l_max: u32,
    blocks: HashMap<(u32, u32, u32), CGBlock>,
}

impl CGTable {
    pub fn new(l_max: u32) -> Self {
        let mut blocks = HashMap::new();
        for l1 in 0..=l_max {
            for l2 in 0..=l_max {
                for l3 in l1.abs_diff(l2)..=(l1 + l2).min(l_max) {
                    blocks.insert((l1, l2, l3), CGBlock::build(l1, l2, l3));
                }
            }
        }
        CGTable { l_max, blocks }
    }

    /// Shared table up to [`CG_L_MAX`].
    pub fn global() -> &'static CGTable {
        static TABLE: OnceLock<CGTable> = OnceLock::new();
        TABLE.get_or_init(|| CGTable::new(CG_L_MAX))
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn block(&self, l1: u32, l2: u32, l3: u32) -> Option<&CGBlock> {
        self.blocks.get(&(l1, l2, l3))
    }

    pub fn blocks(&self) -> impl Iterator<Item = &CGBlock> {
        self.blocks.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_complex_values() {
        // <1 1 1 -1 | 0 0> = 1/√3, <1/2...> not representable; use integer cases
        assert!((complex_cg(1, 1, 1, -1, 0, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((complex_cg(1, 0, 1, 0, 2, 0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((complex_cg(1, 1, 1, -1, 1, 0) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(complex_cg(1, 0, 1, 0, 1, 0), 0.0);
    }

    #[test]
    fn selection_rules_hold() {
        let t = CGTable::global();
        for b in t.blocks() {
            assert!(b.l1.abs_diff(b.l2) <= b.l3 && b.l3 <= b.l1 + b.l2);
            assert!(!b.nonzeros.is_empty());
        }
        assert!(t.block(1, 1, 3).is_none());
        assert!(t.block(3, 0, 2).is_none());
    }

    #[test]
    fn orthogonality_to_1e12() {
        let t = CGTable::new(3);
        for l1 in 0..=3u32 {
            for l2 in 0..=3u32 {
                let (d1, d2) = (2 * l1 as usize + 1, 2 * l2 as usize + 1);
                let outs: Vec<&CGBlock> = (0..=3).filter_map(|l3| t.block(l1, l2, l3)).collect();
                for a in &outs {
                    for b in &outs {
                        for m3 in 0..(2 * a.l3 as usize + 1) {
                            for n3 in 0..(2 * b.l3 as usize + 1) {
                                let mut s = 0.0;
                                for m1 in 0..d1 {
                                    for m2 in 0..d2 {
                                        s += a.get(m1, m2, m3) * b.get(m1, m2, n3);
                                    }
                                }
                                let want = if a.l3 == b.l3 && m3 == n3 { 1.0 } else { 0.0 };
                                assert!((s - want).abs() < 1e-12, "({l1},{l2}) {} {} : {s}", a.l3, b.l3);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn vector_dot_block_is_identity_over_root_three() {
        let b = CGTable::global().block(1, 1, 0).unwrap();
        for m1 in 0..3 {
            for m2 in 0..3 {
                let want = if m1 == m2 { 1.0 / 3f64.sqrt() } else { 0.0 };
                assert!((b.get(m1, m2, 0) - want).abs() < 1e-15);
            }
        }
    }
}
