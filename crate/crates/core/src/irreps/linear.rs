use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{IrrepsSpec, IrrepsTensor};
use crate::error::{Error, Result};
use crate::tensor::{Backward, Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct LinPath {
    input: usize,
    output: usize,
    mult_in: usize,
    mult_out: usize,
    comp: usize,
    weight_offset: usize,
}

#[derive(Debug)]
struct Layout {
    in_offsets: Vec<usize>,
    out_offsets: Vec<usize>,
    in_dim: usize,
    out_dim: usize,
    paths: Vec<LinPath>,
    /// `(output entry, bias offset)` for every biased 0e output entry.
    biases: Vec<(usize, usize)>,
}

/// Block-diagonal linear map between irreps layouts.
///
/// Only entries with identical `(l, parity)` are mixed, and the same weight
/// matrix acts on every component `m` of a channel. Weights are stored per
/// path as row-major `[mult_in, mult_out]` matrices; the forward pass applies
/// them unscaled, so normalization lives entirely in the initialization.
#[derive(Clone, Debug)]
pub struct EquivariantLinear {
    input: IrrepsSpec,
    output: IrrepsSpec,
    layout: Arc<Layout>,
    n_weights: usize,
    n_bias: usize,
}

impl EquivariantLinear {
    /// Every output irrep must appear in the input.
    pub fn new(input: &IrrepsSpec, output: &IrrepsSpec, bias: bool) -> Result<Self> {
        Self::build(input, output, bias, false)
    }

    /// Like [`Self::new`], but output entries with no matching input stay zero.
    pub fn new_partial(input: &IrrepsSpec, output: &IrrepsSpec, bias: bool) -> Result<Self> {
        Self::build(input, output, bias, true)
    }

    fn build(input: &IrrepsSpec, output: &IrrepsSpec, bias: bool, partial: bool) -> Result<Self> {
        let mut paths = Vec::new();
        let mut offset = 0;
        let mut biases = Vec::new();
        let mut n_bias = 0;
        for (o, eo) in output.entries().iter().enumerate() {
            let mut found = false;
            for (i, ei) in input.entries().iter().enumerate() {
                if ei.irrep == eo.irrep {
                    found = true;
                    paths.push(LinPath {
                        input: i,
                        output: o,
                        mult_in: ei.mult,
                        mult_out: eo.mult,
                        comp: eo.irrep.dim(),
                        weight_offset: offset,
                    });
                    offset += ei.mult * eo.mult;
                }
            }
            if !found && !partial {
                return Err(Error::Config(format!(
                    "output irrep {} has no counterpart in input {}",
                    eo.irrep, input
                )));
            }
            if bias && eo.irrep.is_scalar() {
                biases.push((o, n_bias));
                n_bias += eo.mult;
            }
        }
        Ok(EquivariantLinear {
            input: input.clone(),
            output: output.clone(),
            layout: Arc::new(Layout {
                in_offsets: input.offsets(),
                out_offsets: output.offsets(),
                in_dim: input.dim(),
                out_dim: output.dim(),
                paths,
                biases,
            }),
            n_weights: offset,
            n_bias,
        })
    }

    pub fn input_spec(&self) -> &IrrepsSpec {
        &self.input
    }

    pub fn output_spec(&self) -> &IrrepsSpec {
        &self.output
    }

    pub fn num_weights(&self) -> usize {
        self.n_weights
    }

    pub fn num_bias(&self) -> usize {
        self.n_bias
    }

    /// Sum of input multiplicities feeding each output entry.
    fn fan_in(&self) -> Vec<usize> {
        let mut fan = vec![0; self.output.len()];
        for p in &self.layout.paths {
            fan[p.output] += p.mult_in;
        }
        fan
    }

    /// Normal weights scaled by `1/√fan_in` so unit-variance inputs map to
    /// unit-variance outputs.
    pub fn init_weights(&self, rng: &mut impl Rng) -> Tensor {
        let fan = self.fan_in();
        let mut data = vec![0.0; self.n_weights];
        for p in &self.layout.paths {
            let s = 1.0 / (fan[p.output] as f64).sqrt();
            for w in &mut data[p.weight_offset..p.weight_offset + p.mult_in * p.mult_out] {
                let z: f64 = StandardNormal.sample(rng);
                *w = z * s;
            }
        }
        Tensor::new(vec![self.n_weights], data).expect("shape")
    }

    /// Weights reproducing the input when both layouts are identical.
    pub fn identity_weights(&self) -> Result<Tensor> {
        if self.input != self.output {
            return Err(Error::Config("identity weights require equal layouts".into()));
        }
        let mut data = vec![0.0; self.n_weights];
        for p in &self.layout.paths {
            if p.input == p.output {
                for u in 0..p.mult_in {
                    data[p.weight_offset + u * p.mult_out + u] = 1.0;
                }
            }
        }
        Tensor::new(vec![self.n_weights], data)
    }

    pub fn apply(&self, tape: &mut Tape, x: &IrrepsTensor, weights: Var, bias: Option<Var>) -> Result<IrrepsTensor> {
        if x.spec != self.input {
            return Err(Error::Config(format!(
                "linear built for input {}, got {}",
                self.input, x.spec
            )));
        }
        let l = &self.layout;
        let tx = tape.value(x.var);
        if tx.shape().len() != 2 || tx.cols() != l.in_dim {
            return Err(Error::Dimension {
                op: "equivariant_linear",
                lhs: tx.shape().to_vec(),
                rhs: vec![l.in_dim],
            });
        }
        let tw = tape.value(weights);
        if tw.numel() != self.n_weights {
            return Err(Error::Dimension {
                op: "equivariant_linear weights",
                lhs: vec![self.n_weights],
                rhs: tw.shape().to_vec(),
            });
        }
        let tb = match bias {
            Some(b) => {
                let tb = tape.value(b);
                if tb.numel() != self.n_bias {
                    return Err(Error::Dimension {
                        op: "equivariant_linear bias",
                        lhs: vec![self.n_bias],
                        rhs: tb.shape().to_vec(),
                    });
                }
                Some(tb)
            }
            None => None,
        };
        let rows = tx.rows();
        let mut out = vec![0.0; rows * l.out_dim];
        for r in 0..rows {
            let xr = &tx.data()[r * l.in_dim..(r + 1) * l.in_dim];
            let or = &mut out[r * l.out_dim..(r + 1) * l.out_dim];
            for p in &l.paths {
                let (ib, ob) = (l.in_offsets[p.input], l.out_offsets[p.output]);
                for u in 0..p.mult_in {
                    let wrow = &tw.data()[p.weight_offset + u * p.mult_out..p.weight_offset + (u + 1) * p.mult_out];
                    for m in 0..p.comp {
                        let xv = xr[ib + u * p.comp + m];
                        if xv == 0.0 {
                            continue;
                        }
                        for (w, &wv) in wrow.iter().enumerate() {
                            or[ob + w * p.comp + m] += wv * xv;
                        }
                    }
                }
            }
            if let Some(tb) = tb {
                for &(o, boff) in &l.biases {
                    let ob = l.out_offsets[o];
                    let mult = self.output.entries()[o].mult;
                    for w in 0..mult {
                        or[ob + w] += tb.data()[boff + w];
                    }
                }
            }
        }
        let value = Tensor::new(vec![rows, l.out_dim], out)?;
        let mut inputs = vec![x.var, weights];
        if let Some(b) = bias {
            inputs.push(b);
        }
        let var = tape.push_op(
            value,
            &inputs,
            Box::new(LinearBackward {
                layout: Arc::clone(&self.layout),
                out_mults: self.output.entries().iter().map(|e| e.mult).collect(),
            }),
        );
        Ok(IrrepsTensor {
            spec: self.output.clone(),
            var,
        })
    }
}

struct LinearBackward {
    layout: Arc<Layout>,
    out_mults: Vec<usize>,
}

impl Backward for LinearBackward {
    fn name(&self) -> &'static str {
        "equivariant_linear"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let l = &self.layout;
        let (tx, tw) = (x[0], x[1]);
        let rows = tx.rows();
        let mut dx = needs[0].then(|| vec![0.0; tx.numel()]);
        let mut dw = needs[1].then(|| vec![0.0; tw.numel()]);
        for r in 0..rows {
            let xr = &tx.data()[r * l.in_dim..(r + 1) * l.in_dim];
            let gr = &g.data()[r * l.out_dim..(r + 1) * l.out_dim];
            for p in &l.paths {
                let (ib, ob) = (l.in_offsets[p.input], l.out_offsets[p.output]);
                for u in 0..p.mult_in {
                    let woff = p.weight_offset + u * p.mult_out;
                    for m in 0..p.comp {
                        let xv = xr[ib + u * p.comp + m];
                        let mut acc = 0.0;
                        for w in 0..p.mult_out {
                            let gv = gr[ob + w * p.comp + m];
                            acc += tw.data()[woff + w] * gv;
                            if let Some(dw) = dw.as_mut() {
                                dw[woff + w] += xv * gv;
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            dx[r * l.in_dim + ib + u * p.comp + m] += acc;
                        }
                    }
                }
            }
        }
        let mut res = vec![
            dx.map(|d| Tensor::new(tx.shape().to_vec(), d).expect("shape")),
            dw.map(|d| Tensor::new(tw.shape().to_vec(), d).expect("shape")),
        ];
        if x.len() == 3 {
            let tb = x[2];
            res.push(needs[2].then(|| {
                let mut db = vec![0.0; tb.numel()];
                for r in 0..rows {
                    let gr = &g.data()[r * l.out_dim..(r + 1) * l.out_dim];
                    for &(o, boff) in &l.biases {
                        let ob = l.out_offsets[o];
                        for w in 0..self.out_mults[o] {
                            db[boff + w] += gr[ob + w];
                        }
                    }
                }
                Tensor::new(tb.shape().to_vec(), db).expect("shape")
            }));
        }
        res
    }
}
