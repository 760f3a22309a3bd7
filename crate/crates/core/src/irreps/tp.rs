use std::sync::Arc;

use super::cg::{CGBlock, CGTable};
use super::{IrrepsSpec, IrrepsTensor};
use crate::error::{Error, Result};
use crate::tensor::{Backward, Tape, Tensor, Var};

/// Restricts which coupling paths a [`TensorProduct`] instantiates.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFilter {
    /// Drop paths whose output order exceeds this value.
    #[serde(default)]
    pub max_l_out: Option<u32>,
    /// Only couple entry `i` of the first input with entry `i` of the second.
    #[serde(default)]
    pub diagonal: bool,
}

/// One coupling `a[i] ⊗ b[j] → out[k]`, applied channel by channel.
#[derive(Clone, Debug)]
pub struct TpPath {
    pub a: usize,
    pub b: usize,
    pub out: usize,
    pub mult: usize,
    weight_offset: usize,
    norm: f64,
    block: CGBlock,
}

#[derive(Debug)]
struct Layout {
    a_offsets: Vec<usize>,
    b_offsets: Vec<usize>,
    out_offsets: Vec<usize>,
    a_dim: usize,
    b_dim: usize,
    out_dim: usize,
    paths: Vec<TpPath>,
}

/// Channelwise weighted Clebsch–Gordan tensor product.
///
/// A path couples channel `u` of `a[i]` with channel `u` of `b[j]` into
/// channel `u` of `out[k]`, so the three entries share one multiplicity. Each
/// path carries one weight per output channel, and each output channel is
/// divided by √(number of paths feeding its entry).
#[derive(Clone, Debug)]
pub struct TensorProduct {
    a: IrrepsSpec,
    b: IrrepsSpec,
    out: IrrepsSpec,
    layout: Arc<Layout>,
    n_weights: usize,
}

fn path_allowed(a: &IrrepsSpec, b: &IrrepsSpec, out: &IrrepsSpec, i: usize, j: usize, k: usize) -> bool {
    let (ea, eb, eo) = (a.entries()[i], b.entries()[j], out.entries()[k]);
    let (l1, l2, l3) = (ea.irrep.l, eb.irrep.l, eo.irrep.l);
    ea.mult == eb.mult
        && ea.mult == eo.mult
        && l1.abs_diff(l2) <= l3
        && l3 <= l1 + l2
        && ea.irrep.parity * eb.irrep.parity == eo.irrep.parity
}

impl TensorProduct {
    /// Instantiates every admissible path subject to `filter`; each output
    /// entry must be reachable.
    pub fn new(a: &IrrepsSpec, b: &IrrepsSpec, out: &IrrepsSpec, filter: &PathFilter) -> Result<Self> {
        let mut paths = Vec::new();
        for k in 0..out.len() {
            let l3 = out.entries()[k].irrep.l;
            if filter.max_l_out.is_some_and(|m| l3 > m) {
                continue;
            }
            for i in 0..a.len() {
                for j in 0..b.len() {
                    if filter.diagonal && i != j {
                        continue;
                    }
                    if path_allowed(a, b, out, i, j, k) {
                        paths.push((i, j, k));
                    }
                }
            }
        }
        Self::from_paths(a, b, out, &paths)
    }

    /// Builds a product from an explicit `(i, j, k)` path list.
    pub fn from_paths(a: &IrrepsSpec, b: &IrrepsSpec, out: &IrrepsSpec, paths: &[(usize, usize, usize)]) -> Result<Self> {
        let table = CGTable::global();
        for &(i, j, k) in paths {
            if i >= a.len() || j >= b.len() || k >= out.len() {
                return Err(Error::Config(format!("tensor-product path ({i},{j},{k}) out of range")));
            }
            if !path_allowed(a, b, out, i, j, k) {
                return Err(Error::Config(format!(
                    "path {}x{} ⊗ {}x{} → {}x{} violates selection, parity or multiplicity rules",
                    a.entries()[i].mult,
                    a.entries()[i].irrep,
                    b.entries()[j].mult,
                    b.entries()[j].irrep,
                    out.entries()[k].mult,
                    out.entries()[k].irrep
                )));
            }
        }
        let mut per_out = vec![0usize; out.len()];
        for &(_, _, k) in paths {
            per_out[k] += 1;
        }
        if let Some(k) = per_out.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!(
                "output irrep {} (entry {k}) is unreachable from {} ⊗ {}",
                out.entries()[k].irrep,
                a,
                b
            )));
        }
        let mut built = Vec::with_capacity(paths.len());
        let mut offset = 0;
        for &(i, j, k) in paths {
            let (l1, l2, l3) = (a.entries()[i].irrep.l, b.entries()[j].irrep.l, out.entries()[k].irrep.l);
            let block = table
                .block(l1, l2, l3)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "coupling {l1}⊗{l2}→{l3} exceeds the tabulated order {}",
                        table.l_max()
                    ))
                })?
                .clone();
            let mult = out.entries()[k].mult;
            built.push(TpPath {
                a: i,
                b: j,
                out: k,
                mult,
                weight_offset: offset,
                norm: 1.0 / (per_out[k] as f64).sqrt(),
                block,
            });
            offset += mult;
        }
        let layout = Layout {
            a_offsets: a.offsets(),
            b_offsets: b.offsets(),
            out_offsets: out.offsets(),
            a_dim: a.dim(),
            b_dim: b.dim(),
            out_dim: out.dim(),
            paths: built,
        };
        Ok(TensorProduct {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
            layout: Arc::new(layout),
            n_weights: offset,
        })
    }

    /// All irreps reachable from `a ⊗ b` under channelwise pairing.
    pub fn reachable_outputs(a: &IrrepsSpec, b: &IrrepsSpec, filter: &PathFilter) -> IrrepsSpec {
        let mut entries = Vec::new();
        for (i, ea) in a.entries().iter().enumerate() {
            for (j, eb) in b.entries().iter().enumerate() {
                if (filter.diagonal && i != j) || ea.mult != eb.mult {
                    continue;
                }
                let (l1, l2) = (ea.irrep.l, eb.irrep.l);
                for l3 in l1.abs_diff(l2)..=l1 + l2 {
                    if filter.max_l_out.is_some_and(|m| l3 > m) {
                        continue;
                    }
                    let ir = super::Irrep::new(l3, ea.irrep.parity * eb.irrep.parity);
                    entries.push((ea.mult, ir));
                }
            }
        }
        IrrepsSpec::new(entries).expect("multiplicities are positive")
    }

    pub fn paths(&self) -> &[TpPath] {
        &self.layout.paths
    }

    pub fn num_weights(&self) -> usize {
        self.n_weights
    }

    pub fn out_spec(&self) -> &IrrepsSpec {
        &self.out
    }

    /// Applies the product row by row; `weights` has [`Self::num_weights`]
    /// elements.
    pub fn apply(&self, tape: &mut Tape, a: &IrrepsTensor, b: &IrrepsTensor, weights: Var) -> Result<IrrepsTensor> {
        if a.spec != self.a || b.spec != self.b {
            return Err(Error::Config(format!(
                "tensor product built for {} ⊗ {}, got {} ⊗ {}",
                self.a, self.b, a.spec, b.spec
            )));
        }
        let (ta, tb, tw) = (tape.value(a.var), tape.value(b.var), tape.value(weights));
        if ta.shape().len() != 2 || ta.cols() != self.layout.a_dim || tb.shape() != [ta.rows(), self.layout.b_dim] {
            return Err(Error::Dimension {
                op: "tensor_product",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        if tw.numel() != self.n_weights {
            return Err(Error::Dimension {
                op: "tensor_product weights",
                lhs: vec![self.n_weights],
                rhs: tw.shape().to_vec(),
            });
        }
        let rows = ta.rows();
        let l = &self.layout;
        let mut out = vec![0.0; rows * l.out_dim];
        for r in 0..rows {
            let ar = &ta.data()[r * l.a_dim..(r + 1) * l.a_dim];
            let br = &tb.data()[r * l.b_dim..(r + 1) * l.b_dim];
            let or = &mut out[r * l.out_dim..(r + 1) * l.out_dim];
            for p in &l.paths {
                let (d1, d2, d3) = (p.block.l1 as usize * 2 + 1, p.block.l2 as usize * 2 + 1, p.block.l3 as usize * 2 + 1);
                for u in 0..p.mult {
                    let coef = p.norm * tw.data()[p.weight_offset + u];
                    let (ba, bb, bo) = (l.a_offsets[p.a] + u * d1, l.b_offsets[p.b] + u * d2, l.out_offsets[p.out] + u * d3);
                    for &(m1, m2, m3, c) in &p.block.nonzeros {
                        or[bo + m3] += coef * c * ar[ba + m1] * br[bb + m2];
                    }
                }
            }
        }
        let value = Tensor::new(vec![rows, l.out_dim], out)?;
        let var = tape.push_op(
            value,
            &[a.var, b.var, weights],
            Box::new(TpBackward {
                layout: Arc::clone(&self.layout),
            }),
        );
        Ok(IrrepsTensor {
            spec: self.out.clone(),
            var,
        })
    }
}

struct TpBackward {
    layout: Arc<Layout>,
}

impl Backward for TpBackward {
    fn name(&self) -> &'static str {
        "tensor_product"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let l = &self.layout;
        let (ta, tb, tw) = (x[0], x[1], x[2]);
        let rows = ta.rows();
        let mut da = needs[0].then(|| vec![0.0; ta.numel()]);
        let mut db = needs[1].then(|| vec![0.0; tb.numel()]);
        let mut dw = needs[2].then(|| vec![0.0; tw.numel()]);
        for r in 0..rows {
            let ar = &ta.data()[r * l.a_dim..(r + 1) * l.a_dim];
            let br = &tb.data()[r * l.b_dim..(r + 1) * l.b_dim];
            let gr = &g.data()[r * l.out_dim..(r + 1) * l.out_dim];
            for p in &l.paths {
                let (d1, d2, d3) = (p.block.l1 as usize * 2 + 1, p.block.l2 as usize * 2 + 1, p.block.l3 as usize * 2 + 1);
                for u in 0..p.mult {
                    let w = tw.data()[p.weight_offset + u];
                    let (ba, bb, bo) = (l.a_offsets[p.a] + u * d1, l.b_offsets[p.b] + u * d2, l.out_offsets[p.out] + u * d3);
                    let mut wsum = 0.0;
                    for &(m1, m2, m3, c) in &p.block.nonzeros {
                        let gc = gr[bo + m3] * c * p.norm;
                        if let Some(da) = da.as_mut() {
                            da[r * l.a_dim + ba + m1] += gc * w * br[bb + m2];
                        }
                        if let Some(db) = db.as_mut() {
                            db[r * l.b_dim + bb + m2] += gc * w * ar[ba + m1];
                        }
                        wsum += gc * ar[ba + m1] * br[bb + m2];
                    }
                    if let Some(dw) = dw.as_mut() {
                        dw[p.weight_offset + u] += wsum;
                    }
                }
            }
        }
        let wrap = |d: Option<Vec<f64>>, like: &Tensor| d.map(|d| Tensor::new(like.shape().to_vec(), d).expect("shape"));
        vec![wrap(da, ta), wrap(db, tb), wrap(dw, tw)]
    }
}
