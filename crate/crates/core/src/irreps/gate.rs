use super::{IrrepsSpec, IrrepsTensor};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Gate nonlinearity: SiLU on scalar channels, and every `l > 0` channel
/// scaled by SiLU of its own gate scalar.
///
/// The input layout is the output layout followed by one `0e` gate channel
/// per `l > 0` channel, in channel order.
#[derive(Clone, Debug)]
pub struct Gate {
    input: IrrepsSpec,
    output: IrrepsSpec,
    act_cols: Vec<usize>,
    mul_cols: Vec<usize>,
}

impl Gate {
    pub fn new(output: &IrrepsSpec) -> Self {
        let gates = output.num_nonscalar_channels();
        let input = output.concat(&IrrepsSpec::scalars(gates));
        let base = output.dim();
        let one_col = input.dim();
        let mut act_cols = Vec::with_capacity(base);
        let mut mul_cols = Vec::with_capacity(base);
        let mut rank = 0;
        let mut col = 0;
        for e in output.entries() {
            for _ in 0..e.mult {
                for _ in 0..e.irrep.dim() {
                    if e.irrep.l == 0 {
                        act_cols.push(col);
                        mul_cols.push(one_col);
                    } else {
                        act_cols.push(base + rank);
                        mul_cols.push(col);
                    }
                    col += 1;
                }
                if e.irrep.l > 0 {
                    rank += 1;
                }
            }
        }
        Gate {
            input,
            output: output.clone(),
            act_cols,
            mul_cols,
        }
    }

    pub fn input_spec(&self) -> &IrrepsSpec {
        &self.input
    }

    pub fn output_spec(&self) -> &IrrepsSpec {
        &self.output
    }

    pub fn apply(&self, tape: &mut Tape, x: &IrrepsTensor) -> Result<IrrepsTensor> {
        if x.spec != self.input {
            return Err(Error::Config(format!(
                "gate expects {} ({} gate channels), got {}",
                self.input,
                self.output.num_nonscalar_channels(),
                x.spec
            )));
        }
        let rows = tape.value(x.var).rows();
        let pre = tape.gather_cols(x.var, &self.act_cols)?;
        let act = tape.silu(pre);
        let ones = tape.constant(Tensor::full(&[rows, 1], 1.0));
        let padded = tape.concat(&[x.var, ones], 1)?;
        let mul = tape.gather_cols(padded, &self.mul_cols)?;
        let var = tape.mul(act, mul)?;
        Ok(IrrepsTensor {
            spec: self.output.clone(),
            var,
        })
    }
}
