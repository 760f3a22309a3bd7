use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::ParamStore;
use crate::error::Result;
use crate::irreps::{EquivariantLinear, Gate, Irrep, IrrepsSpec, IrrepsTensor, PathFilter, TensorProduct};
use crate::tensor::{Segments, Tape, Tensor, Var};

/// Per-edge inputs shared by every layer of one forward pass.
pub struct EdgeInputs<'a> {
    pub rbf: &'a IrrepsTensor,
    pub sh: &'a IrrepsTensor,
    pub src: &'a [usize],
    pub dst: &'a [usize],
    pub dst_segments: &'a Segments,
    pub num_nodes: usize,
}

#[derive(Clone, Debug)]
struct Slots {
    q: usize,
    k: usize,
    v: usize,
    edge_raw: usize,
    edge_sh: usize,
    tp_att: usize,
    tp_beta: usize,
    trans_w: usize,
    trans_b: usize,
}

/// One dual-path dynamic attention message-passing layer.
///
/// With `e = W_raw·rbf + W_sh·Y(r̂)`, `q = W_q x_dst + e`, `k = W_k x_src + e`
/// and `v = W_v x_src`, attention weights are a per-destination softmax of
/// the head-averaged scalar channels of `TP(q, k)` over `τ`; the gate
/// `β = σ(TP(q, v))` holds one scalar per channel; the message
/// `Σ α·(β·v + (1−β)·q)` goes through `W_trans`, the gate nonlinearity and a
/// residual connection.
#[derive(Clone, Debug)]
pub struct MessagePassingLayer {
    hidden: IrrepsSpec,
    lin_q: EquivariantLinear,
    lin_k: EquivariantLinear,
    lin_v: EquivariantLinear,
    edge_raw: EquivariantLinear,
    edge_sh: EquivariantLinear,
    tp_att: TensorProduct,
    tp_beta: TensorProduct,
    lin_trans: EquivariantLinear,
    gate: Gate,
    n_heads: usize,
    temperature: f64,
    /// `[C, n_heads]` averaging matrix from scalar attention channels to heads.
    head_mean: Tensor,
    /// Hidden column → head.
    col_head: Vec<usize>,
    /// Hidden column → channel.
    col_channel: Vec<usize>,
    slots: Slots,
}

/// One `mult×0e` entry per hidden entry: the per-channel scalar outputs of
/// the attention and gating products.
pub fn channel_scalars(hidden: &IrrepsSpec) -> IrrepsSpec {
    IrrepsSpec::new(hidden.entries().iter().map(|e| (e.mult, Irrep::SCALAR)).collect()).expect("positive mults")
}

fn normal_tensor(n: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect();
    Tensor::new(vec![n], data).expect("shape")
}

impl MessagePassingLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        hidden: &IrrepsSpec,
        sh_spec: &IrrepsSpec,
        n_rbf: usize,
        n_heads: usize,
        temperature: Option<f64>,
        filter: &PathFilter,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let lin_q = EquivariantLinear::new(hidden, hidden, false)?;
        let lin_k = EquivariantLinear::new(hidden, hidden, false)?;
        let lin_v = EquivariantLinear::new(hidden, hidden, false)?;
        let edge_raw = EquivariantLinear::new_partial(&IrrepsSpec::scalars(n_rbf), hidden, false)?;
        let edge_sh = EquivariantLinear::new_partial(sh_spec, hidden, false)?;
        let scalars = channel_scalars(hidden);
        let tp_att = TensorProduct::new(hidden, hidden, &scalars, filter)?;
        let tp_beta = TensorProduct::new(hidden, hidden, &scalars, filter)?;
        let gate = Gate::new(hidden);
        let lin_trans = EquivariantLinear::new(hidden, gate.input_spec(), true)?;

        let c = scalars.dim();
        let per_head = c / n_heads;
        let mut channel_head = Vec::with_capacity(c);
        for e in hidden.entries() {
            let group = e.mult / n_heads;
            channel_head.extend((0..e.mult).map(|u| u / group));
        }
        let mut head_mean = Tensor::zeros(&[c, n_heads]);
        for (ch, &h) in channel_head.iter().enumerate() {
            head_mean.data_mut()[ch * n_heads + h] = 1.0 / per_head as f64;
        }
        let col_channel = hidden.column_channels();
        let col_head = col_channel.iter().map(|&ch| channel_head[ch]).collect();

        let slots = Slots {
            q: store.add(format!("{prefix}.w_q"), lin_q.init_weights(rng)),
            k: store.add(format!("{prefix}.w_k"), lin_k.init_weights(rng)),
            v: store.add(format!("{prefix}.w_v"), lin_v.init_weights(rng)),
            edge_raw: store.add(format!("{prefix}.w_edge_raw"), edge_raw.init_weights(rng)),
            edge_sh: store.add(format!("{prefix}.w_edge_sh"), edge_sh.init_weights(rng)),
            tp_att: store.add(format!("{prefix}.tp_att"), normal_tensor(tp_att.num_weights(), rng)),
            tp_beta: store.add(format!("{prefix}.tp_beta"), normal_tensor(tp_beta.num_weights(), rng)),
            trans_w: store.add(format!("{prefix}.w_trans"), lin_trans.init_weights(rng)),
            trans_b: store.add(format!("{prefix}.b_trans"), Tensor::zeros(&[lin_trans.num_bias()])),
        };
        Ok(MessagePassingLayer {
            hidden: hidden.clone(),
            lin_q,
            lin_k,
            lin_v,
            edge_raw,
            edge_sh,
            tp_att,
            tp_beta,
            lin_trans,
            gate,
            n_heads,
            temperature: temperature.unwrap_or((per_head as f64).sqrt()),
            head_mean,
            col_head,
            col_channel,
            slots,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    /// `e_ij`, in hidden layout.
    pub fn edge_features(&self, tape: &mut Tape, edges: &EdgeInputs, p: &[Var]) -> Result<IrrepsTensor> {
        let raw = self.edge_raw.apply(tape, edges.rbf, p[self.slots.edge_raw], None)?;
        let sh = self.edge_sh.apply(tape, edges.sh, p[self.slots.edge_sh], None)?;
        let var = tape.add(raw.var, sh.var)?;
        Ok(IrrepsTensor::new(self.hidden.clone(), var))
    }

    /// Per-edge queries, keys and values.
    pub fn qkv(
        &self,
        tape: &mut Tape,
        x: &IrrepsTensor,
        e: &IrrepsTensor,
        edges: &EdgeInputs,
        p: &[Var],
    ) -> Result<(IrrepsTensor, IrrepsTensor, IrrepsTensor)> {
        let wq = self.lin_q.apply(tape, x, p[self.slots.q], None)?;
        let wk = self.lin_k.apply(tape, x, p[self.slots.k], None)?;
        let wv = self.lin_v.apply(tape, x, p[self.slots.v], None)?;
        let q_dst = tape.index_select(wq.var, edges.dst)?;
        let k_src = tape.index_select(wk.var, edges.src)?;
        let v_src = tape.index_select(wv.var, edges.src)?;
        let q = tape.add(q_dst, e.var)?;
        let k = tape.add(k_src, e.var)?;
        let h = &self.hidden;
        Ok((
            IrrepsTensor::new(h.clone(), q),
            IrrepsTensor::new(h.clone(), k),
            IrrepsTensor::new(h.clone(), v_src),
        ))
    }

    /// Per-head logits `[E, n_heads]` before the softmax.
    pub fn attention_logits(&self, tape: &mut Tape, q: &IrrepsTensor, k: &IrrepsTensor, p: &[Var]) -> Result<Var> {
        let t = self.tp_att.apply(tape, q, k, p[self.slots.tp_att])?;
        let m = tape.constant(self.head_mean.clone());
        let heads = tape.matmul(t.var, m)?;
        Ok(tape.scale(heads, 1.0 / self.temperature))
    }

    /// Aggregated message `m_i` `[N, hidden]` given attention weights `α`.
    pub fn message(
        &self,
        tape: &mut Tape,
        q: &IrrepsTensor,
        v: &IrrepsTensor,
        alpha: Var,
        edges: &EdgeInputs,
        p: &[Var],
    ) -> Result<IrrepsTensor> {
        let t = self.tp_beta.apply(tape, q, v, p[self.slots.tp_beta])?;
        let beta = tape.sigmoid(t.var);
        let beta = tape.gather_cols(beta, &self.col_channel)?;
        let diff = tape.sub(v.var, q.var)?;
        let mixed = tape.mul(beta, diff)?;
        let m_ij = tape.add(q.var, mixed)?;
        let a = tape.gather_cols(alpha, &self.col_head)?;
        let weighted = tape.mul(a, m_ij)?;
        let m = tape.scatter_add(weighted, edges.dst, edges.num_nodes)?;
        Ok(IrrepsTensor::new(self.hidden.clone(), m))
    }

    /// `Gate(W_trans·m) + x`.
    pub fn update(&self, tape: &mut Tape, x: &IrrepsTensor, m: &IrrepsTensor, p: &[Var]) -> Result<IrrepsTensor> {
        let u = self.lin_trans.apply(tape, m, p[self.slots.trans_w], Some(p[self.slots.trans_b]))?;
        let g = self.gate.apply(tape, &u)?;
        let var = tape.add(g.var, x.var)?;
        Ok(IrrepsTensor::new(self.hidden.clone(), var))
    }

    pub fn forward(&self, tape: &mut Tape, x: &IrrepsTensor, edges: &EdgeInputs, p: &[Var]) -> Result<IrrepsTensor> {
        let e = self.edge_features(tape, edges, p)?;
        let (q, k, v) = self.qkv(tape, x, &e, edges, p)?;
        let logits = self.attention_logits(tape, &q, &k, p)?;
        let alpha = tape.segment_softmax(logits, edges.dst_segments)?;
        let m = self.message(tape, &q, &v, alpha, edges, p)?;
        self.update(tape, x, &m, p)
    }
}
