use crate::error::Result;
use crate::irreps::{Irrep, IrrepsSpec, IrrepsTensor};
use crate::tensor::{Segments, Tape, Tensor, Var};

/// Per-graph readouts of node features.
#[derive(Clone, Debug)]
pub struct Pooled {
    /// Sum over nodes, all channels.
    pub add: IrrepsTensor,
    /// Mean over nodes, all channels.
    pub mean: IrrepsTensor,
    /// Max over nodes of each 0e channel, then of each non-scalar channel norm.
    pub max: Var,
}

/// Column bookkeeping for pooling one irreps layout.
#[derive(Clone, Debug)]
pub struct PoolLayout {
    scalar_cols: Vec<usize>,
    other_cols: Vec<usize>,
    /// `[other_cols.len(), n_other_channels]` sums squared components per channel.
    channel_sum: Tensor,
}

impl PoolLayout {
    pub fn new(spec: &IrrepsSpec) -> Self {
        let mut scalar_cols = Vec::new();
        let mut other_cols = Vec::new();
        let mut owner = Vec::new();
        let mut channels = 0;
        for (e, off) in spec.entries().iter().zip(spec.offsets()) {
            let d = e.irrep.dim();
            if e.irrep == Irrep::SCALAR {
                scalar_cols.extend(off..off + e.mult);
                continue;
            }
            for u in 0..e.mult {
                other_cols.extend(off + u * d..off + (u + 1) * d);
                owner.extend(std::iter::repeat_n(channels, d));
                channels += 1;
            }
        }
        let mut channel_sum = Tensor::zeros(&[other_cols.len(), channels]);
        for (r, &c) in owner.iter().enumerate() {
            channel_sum.data_mut()[r * channels + c] = 1.0;
        }
        PoolLayout {
            scalar_cols,
            other_cols,
            channel_sum,
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.scalar_cols.len()
    }

    pub fn num_other_channels(&self) -> usize {
        self.channel_sum.cols()
    }

    /// Width of [`Self::invariants`]: scalar sum, mean and max plus channel-norm max.
    pub fn invariant_dim(&self) -> usize {
        3 * self.num_scalars() + self.num_other_channels()
    }

    pub fn pool(&self, tape: &mut Tape, x: &IrrepsTensor, graphs: &Segments) -> Result<Pooled> {
        let add = tape.segment_sum(x.var, graphs)?;
        let mean = tape.segment_mean(x.var, graphs)?;
        let s = tape.gather_cols(x.var, &self.scalar_cols)?;
        let mut parts = vec![tape.segment_max(s, graphs)?];
        if !self.other_cols.is_empty() {
            let o = tape.gather_cols(x.var, &self.other_cols)?;
            let sq = tape.mul(o, o)?;
            let m = tape.constant(self.channel_sum.clone());
            let sums = tape.matmul(sq, m)?;
            let norms = tape.sqrt(sums);
            parts.push(tape.segment_max(norms, graphs)?);
        }
        let max = tape.concat(&parts, 1)?;
        Ok(Pooled {
            add: IrrepsTensor::new(x.spec.clone(), add),
            mean: IrrepsTensor::new(x.spec.clone(), mean),
            max,
        })
    }

    /// Rotation-invariant part of the pooled vector `[B, invariant_dim]`.
    pub fn invariants(&self, tape: &mut Tape, pooled: &Pooled) -> Result<Var> {
        let a = tape.gather_cols(pooled.add.var, &self.scalar_cols)?;
        let m = tape.gather_cols(pooled.mean.var, &self.scalar_cols)?;
        tape.concat(&[a, m, pooled.max], 1)
    }
}
