use crate::error::{Error, Result};

const SYMBOLS: [&str; 94] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu",
];

// Standard atomic weights in amu (most stable isotope for radioactive elements).
const MASSES: [f64; 94] = [
    1.008, 4.0026, 6.94, 9.0122, 10.81, 12.011, 14.007, 15.999, 18.998, 20.180, 22.990, 24.305, 26.982, 28.085,
    30.974, 32.06, 35.45, 39.948, 39.098, 40.078, 44.956, 47.867, 50.942, 51.996, 54.938, 55.845, 58.933, 58.693,
    63.546, 65.38, 69.723, 72.630, 74.922, 78.971, 79.904, 83.798, 85.468, 87.62, 88.906, 91.224, 92.906, 95.95,
    98.0, 101.07, 102.91, 106.42, 107.87, 112.41, 114.82, 118.71, 121.76, 127.60, 126.90, 131.29, 132.91, 137.33,
    138.91, 140.12, 140.91, 144.24, 145.0, 150.36, 151.96, 157.25, 158.93, 162.50, 164.93, 167.26, 168.93, 173.05,
    174.97, 178.49, 180.95, 183.84, 186.21, 190.23, 192.22, 195.08, 196.97, 200.59, 204.38, 207.2, 208.98, 209.0,
    210.0, 222.0, 223.0, 226.0, 227.0, 232.04, 231.04, 238.03, 237.0, 244.0,
];

pub const MAX_Z: u32 = SYMBOLS.len() as u32;

pub fn symbol(z: u32) -> Result<&'static str> {
    SYMBOLS
        .get((z as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::Data(format!("unknown atomic number {z}")))
}

pub fn atomic_number(symbol: &str) -> Result<u32> {
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(symbol))
        .map(|i| i as u32 + 1)
        .ok_or_else(|| Error::Data(format!("unknown element symbol {symbol:?}")))
}

pub fn mass(z: u32) -> Result<f64> {
    MASSES
        .get((z as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::Data(format!("no mass for atomic number {z}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        assert_eq!(symbol(6).unwrap(), "C");
        assert_eq!(atomic_number("Ag").unwrap(), 47);
        assert_eq!(atomic_number("cl").unwrap(), 17);
        assert!((mass(1).unwrap() - 1.008).abs() < 1e-12);
        assert!(symbol(0).is_err());
        assert!(atomic_number("Xx").is_err());
        for z in 1..=MAX_Z {
            assert_eq!(atomic_number(symbol(z).unwrap()).unwrap(), z);
        }
        assert!(MASSES.windows(2).filter(|w| w[1] < w[0]).count() < 6);
    }
}
