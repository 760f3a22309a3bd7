use rand::Rng;

use super::params::ParamStore;
use crate::error::Result;
use crate::irreps::{EquivariantLinear, Gate, IrrepsSpec, IrrepsTensor};
use crate::tensor::{Tape, Tensor, Var};

/// Gated equivariant layers ending in a single `1x1o` output per node.
#[derive(Clone, Debug)]
pub struct ForceHead {
    input: IrrepsSpec,
    layers: Vec<(EquivariantLinear, Gate, usize, usize)>,
    out: EquivariantLinear,
    out_slot: usize,
}

impl ForceHead {
    /// `input` is the node layout followed by the broadcast pooled scalars.
    pub fn new(
        store: &mut ParamStore,
        input: &IrrepsSpec,
        hidden: &IrrepsSpec,
        depth: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(depth);
        let mut cur = input.clone();
        for k in 0..depth {
            let gate = Gate::new(hidden);
            let lin = EquivariantLinear::new_partial(&cur, gate.input_spec(), true)?;
            let w = store.add(format!("force_head.{k}.weight"), lin.init_weights(rng));
            let b = store.add(format!("force_head.{k}.bias"), Tensor::zeros(&[lin.num_bias()]));
            layers.push((lin, gate, w, b));
            cur = hidden.clone();
        }
        let out = EquivariantLinear::new(&cur, &IrrepsSpec::parse("1x1o")?, false)?;
        let out_slot = store.add("force_head.out.weight", out.init_weights(rng));
        Ok(ForceHead {
            input: input.clone(),
            layers,
            out,
            out_slot,
        })
    }

    pub fn input_spec(&self) -> &IrrepsSpec {
        &self.input
    }

    /// Cartesian `[N, 3]` vectors.
    pub fn apply(&self, tape: &mut Tape, x: &IrrepsTensor, p: &[Var]) -> Result<Var> {
        let mut h = x.clone();
        for (lin, gate, w, b) in &self.layers {
            let u = lin.apply(tape, &h, p[*w], Some(p[*b]))?;
            h = gate.apply(tape, &u)?;
        }
        let o = self.out.apply(tape, &h, p[self.out_slot], None)?;
        // the l=1 block is ordered (y, z, x)
        tape.gather_cols(o.var, &[2, 0, 1])
    }
}
