use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> i32 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }

    pub fn of_l(l: u32) -> Parity {
        if l % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl std::ops::Mul for Parity {
    type Output = Parity;

    fn mul(self, rhs: Parity) -> Parity {
        if self == rhs {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// One irreducible representation of O(3): rotation order `l` and parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Irrep {
    pub l: u32,
    pub parity: Parity,
}

impl Irrep {
    pub const SCALAR: Irrep = Irrep {
        l: 0,
        parity: Parity::Even,
    };
    pub const VECTOR: Irrep = Irrep {
        l: 1,
        parity: Parity::Odd,
    };

    pub fn new(l: u32, parity: Parity) -> Self {
        Irrep { l, parity }
    }

    pub fn dim(self) -> usize {
        2 * self.l as usize + 1
    }

    pub fn is_scalar(self) -> bool {
        self == Irrep::SCALAR
    }
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.parity {
            Parity::Even => 'e',
            Parity::Odd => 'o',
        };
        write!(f, "{}{}", self.l, p)
    }
}

impl FromStr for Irrep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid irrep {s:?}"));
        let (digits, p) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
        let parity = match p {
            "e" => Parity::Even,
            "o" => Parity::Odd,
            _ => return Err(bad()),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let l = digits.parse().map_err(|_| bad())?;
        Ok(Irrep { l, parity })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IrrepsEntry {
    pub mult: usize,
    pub irrep: Irrep,
}

impl IrrepsEntry {
    pub fn dim(&self) -> usize {
        self.mult * self.irrep.dim()
    }
}

/// Ordered channel layout `"128x0e+64x1o+..."`.
///
/// Each entry occupies a contiguous block of `mult * (2l+1)` columns, laid
/// out channel-major: column `offset + u*(2l+1) + m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct IrrepsSpec {
    entries: Vec<IrrepsEntry>,
}

impl IrrepsSpec {
    pub fn new(entries: Vec<(usize, Irrep)>) -> Result<Self> {
        let entries = entries
            .into_iter()
            .map(|(mult, irrep)| {
                if mult == 0 {
                    Err(Error::Config(format!("zero multiplicity for {irrep}")))
                } else {
                    Ok(IrrepsEntry { mult, irrep })
                }
            })
            .collect::<Result<_>>()?;
        Ok(IrrepsSpec { entries })
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.parse()
    }

    pub fn scalars(mult: usize) -> Self {
        IrrepsSpec {
            entries: if mult == 0 {
                vec![]
            } else {
                vec![IrrepsEntry {
                    mult,
                    irrep: Irrep::SCALAR,
                }]
            },
        }
    }

    /// Layout of the spherical harmonics up to `l_max`: `1x0e+1x1o+1x2e+...`.
    pub fn spherical_harmonics(l_max: u32) -> Self {
        IrrepsSpec {
            entries: (0..=l_max)
                .map(|l| IrrepsEntry {
                    mult: 1,
                    irrep: Irrep::new(l, Parity::of_l(l)),
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[IrrepsEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.iter().map(IrrepsEntry::dim).sum()
    }

    /// Total number of channels Σ mult.
    pub fn num_channels(&self) -> usize {
        self.entries.iter().map(|e| e.mult).sum()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.irrep.is_scalar())
            .map(|e| e.mult)
            .sum()
    }

    /// Number of channels with `l > 0`.
    pub fn num_nonscalar_channels(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.irrep.l > 0)
            .map(|e| e.mult)
            .sum()
    }

    pub fn l_max(&self) -> u32 {
        self.entries.iter().map(|e| e.irrep.l).max().unwrap_or(0)
    }

    pub fn contains(&self, irrep: Irrep) -> bool {
        self.entries.iter().any(|e| e.irrep == irrep)
    }

    /// Column offset of each entry.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.entries
            .iter()
            .map(|e| {
                let o = off;
                off += e.dim();
                o
            })
            .collect()
    }

    pub fn entry_range(&self, index: usize) -> std::ops::Range<usize> {
        let start = self.offsets()[index];
        start..start + self.entries[index].dim()
    }

    /// Column indices of all `0e` components.
    pub fn scalar_columns(&self) -> Vec<usize> {
        self.columns_where(|ir| ir.is_scalar())
    }

    /// Column indices of all components with `l > 0`.
    pub fn nonscalar_columns(&self) -> Vec<usize> {
        self.columns_where(|ir| ir.l > 0)
    }

    fn columns_where(&self, pred: impl Fn(Irrep) -> bool) -> Vec<usize> {
        self.entries
            .iter()
            .zip(self.offsets())
            .filter(|(e, _)| pred(e.irrep))
            .flat_map(|(e, o)| o..o + e.dim())
            .collect()
    }

    /// For every column, the global channel index it belongs to.
    pub fn column_channels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim());
        let mut channel = 0;
        for e in &self.entries {
            for _ in 0..e.mult {
                out.extend(std::iter::repeat_n(channel, e.irrep.dim()));
                channel += 1;
            }
        }
        out
    }

    /// Appends the entries of `other`.
    pub fn concat(&self, other: &IrrepsSpec) -> IrrepsSpec {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        IrrepsSpec { entries }
    }

    /// Keeps only entries whose irrep satisfies `pred`.
    pub fn filter(&self, pred: impl Fn(Irrep) -> bool) -> IrrepsSpec {
        IrrepsSpec {
            entries: self.entries.iter().copied().filter(|e| pred(e.irrep)).collect(),
        }
    }
}

impl fmt::Display for IrrepsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{}x{}", e.mult, e.irrep)?;
        }
        Ok(())
    }
}

impl FromStr for IrrepsSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(IrrepsSpec::default());
        }
        let mut entries = Vec::new();
        for term in s.split('+') {
            let (mult, irrep) = term
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("irreps term {term:?} lacks 'x' in {s:?}")))?;
            if mult.is_empty() || !mult.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::Config(format!("bad multiplicity in {term:?}")));
            }
            let mult: usize = mult
                .parse()
                .map_err(|_| Error::Config(format!("bad multiplicity in {term:?}")))?;
            entries.push((mult, irrep.parse()?));
        }
        IrrepsSpec::new(entries)
    }
}

impl Serialize for IrrepsSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for IrrepsSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
