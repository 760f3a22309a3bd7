use std::sync::Arc;

use super::{Backward, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Row-to-segment assignment, e.g. edge → destination node or node → graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    index: Arc<Vec<usize>>,
    count: usize,
}

impl Segments {
    pub fn new(index: Vec<usize>, count: usize) -> Result<Self> {
        if let Some(&bad) = index.iter().find(|&&i| i >= count) {
            return Err(Error::Index {
                op: "Segments::new",
                index: bad,
                len: count,
            });
        }
        Ok(Segments {
            index: Arc::new(index),
            count,
        })
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Number of rows assigned to each segment.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &i in self.index.iter() {
            sizes[i] += 1;
        }
        sizes
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

struct MatMul;

impl Backward for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (m, k) = (x[0].shape()[0], x[0].shape()[1]);
        let n = x[1].shape()[1];
        let da = needs[0].then(|| {
            let bt = transpose_raw(x[1].data(), k, n);
            Tensor {
                shape: vec![m, k],
                data: matmul_raw(g.data(), &bt, m, n, k),
            }
        });
        let db = needs[1].then(|| {
            let at = transpose_raw(x[0].data(), m, k);
            Tensor {
                shape: vec![k, n],
                data: matmul_raw(&at, g.data(), k, m, n),
            }
        });
        vec![da, db]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    Row,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.numel() == 1 {
        Ok(Broadcast::Scalar)
    } else if a.shape().len() == 2 && b.numel() == a.shape()[1] && b.shape().len() <= 2 && b.rows() == 1 {
        Ok(Broadcast::Row)
    } else {
        Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

#[inline]
fn b_index(kind: Broadcast, i: usize, cols: usize) -> usize {
    match kind {
        Broadcast::Same => i,
        Broadcast::Scalar => 0,
        Broadcast::Row => i % cols,
    }
}

/// Reduces a gradient shaped like `a` back onto the broadcast operand.
fn unbroadcast(kind: Broadcast, g: Vec<f64>, b: &Tensor, cols: usize) -> Tensor {
    match kind {
        Broadcast::Same => Tensor {
            shape: b.shape().to_vec(),
            data: g,
        },
        Broadcast::Scalar => Tensor {
            shape: b.shape().to_vec(),
            data: vec![g.iter().sum()],
        },
        Broadcast::Row => {
            let mut out = vec![0.0; cols];
            for (i, v) in g.iter().enumerate() {
                out[i % cols] += v;
            }
            Tensor {
                shape: b.shape().to_vec(),
                data: out,
            }
        }
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct Binary {
    kind: BinaryKind,
    bc: Broadcast,
}

impl Backward for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        }
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let cols = x[0].cols();
        let (a, b) = (x[0], x[1]);
        let da = needs[0].then(|| match self.kind {
            BinaryKind::Add | BinaryKind::Sub => g.clone(),
            BinaryKind::Mul => Tensor {
                shape: a.shape().to_vec(),
                data: g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| gv * b.data()[b_index(self.bc, i, cols)])
                    .collect(),
            },
        });
        let db = needs[1].then(|| {
            let raw: Vec<f64> = match self.kind {
                BinaryKind::Add => g.data().to_vec(),
                BinaryKind::Sub => g.data().iter().map(|v| -v).collect(),
                BinaryKind::Mul => g.data().iter().zip(a.data()).map(|(gv, av)| gv * av).collect(),
            };
            unbroadcast(self.bc, raw, b, cols)
        });
        vec![da, db]
    }
}

#[derive(Clone, Copy)]
enum UnaryKind {
    Silu,
    Sigmoid,
    Exp,
    Abs,
    Sqrt,
    Scale(f64),
    AddScalar,
}

struct Unary(UnaryKind);

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// x·σ(x).
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

impl Backward for Unary {
    fn name(&self) -> &'static str {
        match self.0 {
            UnaryKind::Silu => "silu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Exp => "exp",
            UnaryKind::Abs => "abs",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Scale(_) => "scale",
            UnaryKind::AddScalar => "add_scalar",
        }
    }

    fn backward(&self, x: &[&Tensor], out: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let xs = x[0].data();
        let ys = out.data();
        let data: Vec<f64> = g
            .data()
            .iter()
            .enumerate()
            .map(|(i, &gv)| {
                let d = match self.0 {
                    UnaryKind::Silu => {
                        let s = sigmoid(xs[i]);
                        s * (1.0 + xs[i] * (1.0 - s))
                    }
                    UnaryKind::Sigmoid => ys[i] * (1.0 - ys[i]),
                    UnaryKind::Exp => ys[i],
                    UnaryKind::Abs => {
                        if xs[i] > 0.0 {
                            1.0
                        } else if xs[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    // subgradient 0 at the origin keeps norms of zero vectors finite
                    UnaryKind::Sqrt => {
                        if ys[i] > 0.0 {
                            0.5 / ys[i]
                        } else {
                            0.0
                        }
                    }
                    UnaryKind::Scale(c) => c,
                    UnaryKind::AddScalar => 1.0,
                };
                gv * d
            })
            .collect();
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data,
        })]
    }
}

struct SumAll {
    scale: f64,
}

impl Backward for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(Tensor::full(x[0].shape(), g.data()[0] * self.scale))]
    }
}

struct AxisReduce {
    axis: usize,
    mean: bool,
}

impl Backward for AxisReduce {
    fn name(&self) -> &'static str {
        if self.mean {
            "mean_reduce"
        } else {
            "sum_reduce"
        }
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let (m, n) = (x[0].shape()[0], x[0].shape()[1]);
        let scale = if self.mean {
            1.0 / if self.axis == 0 { m } else { n } as f64
        } else {
            1.0
        };
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let gi = if self.axis == 0 { j } else { i };
                data[i * n + j] = g.data()[gi] * scale;
            }
        }
        vec![Some(Tensor {
            shape: vec![m, n],
            data,
        })]
    }
}

/// Routes the gradient to the recorded argmax positions.
struct Route {
    src_len: usize,
    argmax: Vec<Option<usize>>,
}

impl Backward for Route {
    fn name(&self) -> &'static str {
        "max_reduce"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let mut data = vec![0.0; self.src_len];
        for (o, src) in self.argmax.iter().enumerate() {
            if let Some(s) = src {
                data[*s] += g.data()[o];
            }
        }
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data,
        })]
    }
}

struct Concat {
    axis: usize,
    widths: Vec<usize>,
}

impl Backward for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, x: &[&Tensor], out: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let mut res = Vec::with_capacity(x.len());
        if self.axis == 0 {
            let mut offset = 0;
            for (k, t) in x.iter().enumerate() {
                let len = t.numel();
                res.push(needs[k].then(|| Tensor {
                    shape: t.shape().to_vec(),
                    data: g.data()[offset..offset + len].to_vec(),
                }));
                offset += len;
            }
        } else {
            let rows = out.shape()[0];
            let total = out.shape()[1];
            let mut offset = 0;
            for (k, t) in x.iter().enumerate() {
                let w = self.widths[k];
                res.push(needs[k].then(|| {
                    let mut data = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    Tensor {
                        shape: t.shape().to_vec(),
                        data,
                    }
                }));
                offset += w;
            }
        }
        res
    }
}

struct IndexSelect {
    index: Arc<Vec<usize>>,
}

impl Backward for IndexSelect {
    fn name(&self) -> &'static str {
        "index_select"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let d = x[0].cols();
        let mut data = vec![0.0; x[0].numel()];
        for (e, &src) in self.index.iter().enumerate() {
            let grow = &g.data()[e * d..(e + 1) * d];
            for (o, v) in data[src * d..(src + 1) * d].iter_mut().zip(grow) {
                *o += v;
            }
        }
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data,
        })]
    }
}

struct ScatterAdd {
    index: Arc<Vec<usize>>,
}

impl Backward for ScatterAdd {
    fn name(&self) -> &'static str {
        "scatter_add"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let d = x[0].cols();
        let mut data = Vec::with_capacity(x[0].numel());
        for &dst in self.index.iter() {
            data.extend_from_slice(&g.data()[dst * d..(dst + 1) * d]);
        }
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data,
        })]
    }
}

struct GatherCols {
    cols: Arc<Vec<usize>>,
}

impl Backward for GatherCols {
    fn name(&self) -> &'static str {
        "gather_cols"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let rows = x[0].rows();
        let d = x[0].cols();
        let w = self.cols.len();
        let mut data = vec![0.0; rows * d];
        for r in 0..rows {
            for (k, &c) in self.cols.iter().enumerate() {
                data[r * d + c] += g.data()[r * w + k];
            }
        }
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data,
        })]
    }
}

struct SegmentSoftmax {
    index: Arc<Vec<usize>>,
}

impl Backward for SegmentSoftmax {
    fn name(&self) -> &'static str {
        "segment_softmax"
    }

    fn backward(&self, x: &[&Tensor], out: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let h = x[0].cols();
        let count = self.index.iter().copied().max().map_or(0, |m| m + 1);
        // dot[s, k] = Σ_{e in s} y[e,k]·g[e,k]
        let mut dot = vec![0.0; count * h];
        for (e, &s) in self.index.iter().enumerate() {
            for k in 0..h {
                dot[s * h + k] += out.data()[e * h + k] * g.data()[e * h + k];
            }
        }
        let mut data = vec![0.0; x[0].numel()];
        for (e, &s) in self.index.iter().enumerate() {
            for k in 0..h {
                let y = out.data()[e * h + k];
                data[e * h + k] = y * (g.data()[e * h + k] - dot[s * h + k]);
            }
        }
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data,
        })]
    }
}

struct Reshape;

impl Backward for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(Tensor {
            shape: x[0].shape().to_vec(),
            data: g.data().to_vec(),
        })]
    }
}

fn require_2d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::Dimension {
            op,
            lhs: s.to_vec(),
            rhs: vec![0, 0],
        }),
    }
}

fn check_indices(op: &'static str, index: &[usize], len: usize) -> Result<()> {
    match index.iter().find(|&&i| i >= len) {
        Some(&bad) => Err(Error::Index { op, index: bad, len }),
        None => Ok(()),
    }
}

impl Tape {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = require_2d("matmul", ta)?;
        let (k2, n) = require_2d("matmul", tb)?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        Ok(self.push_op(
            Tensor {
                shape: vec![m, n],
                data,
            },
            &[a, b],
            Box::new(MatMul),
        ))
    }

    fn binary(&mut self, kind: BinaryKind, op: &'static str, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let bc = broadcast_kind(op, ta, tb)?;
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &av)| {
                let bv = tb.data()[b_index(bc, i, cols)];
                match kind {
                    BinaryKind::Add => av + bv,
                    BinaryKind::Sub => av - bv,
                    BinaryKind::Mul => av * bv,
                }
            })
            .collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        Ok(self.push_op(value, &[a, b], Box::new(Binary { kind, bc })))
    }

    /// `a + b`; `b` may be a scalar or a row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, "mul", a, b)
    }

    fn unary(&mut self, kind: UnaryKind, x: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        self.push_op(value, &[x], Box::new(Unary(kind)))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Silu, x, silu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, x, sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Exp, x, f64::exp)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Abs, x, f64::abs)
    }

    /// Square root of non-negative entries; the gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sqrt, x, |v| v.max(0.0).sqrt())
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::Scale(c), x, |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::AddScalar, x, |v| v + c)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push_op(Tensor::scalar(s), &[x], Box::new(SumAll { scale: 1.0 }))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.numel().max(1) as f64;
        let s = t.sum() / n;
        self.push_op(Tensor::scalar(s), &[x], Box::new(SumAll { scale: 1.0 / n }))
    }

    fn axis_reduce(&mut self, x: Var, axis: usize, mean: bool) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = require_2d("sum_reduce", t)?;
        let data = if axis == 0 {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for (o, v) in out.iter_mut().zip(t.row(i)) {
                    *o += v;
                }
            }
            if mean && m > 0 {
                out.iter_mut().for_each(|v| *v /= m as f64);
            }
            out
        } else {
            (0..m)
                .map(|i| {
                    let s: f64 = t.row(i).iter().sum();
                    if mean && n > 0 {
                        s / n as f64
                    } else {
                        s
                    }
                })
                .collect()
        };
        let shape = vec![if axis == 0 { n } else { m }];
        Ok(self.push_op(Tensor { shape, data }, &[x], Box::new(AxisReduce { axis, mean })))
    }

    /// Sums a 2-D tensor over `axis`, returning a vector.
    pub fn sum_reduce(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.axis_reduce(x, axis, false)
    }

    pub fn mean_reduce(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.axis_reduce(x, axis, true)
    }

    /// Elementwise maximum over the rows of a 2-D tensor; ties resolve to the
    /// first row.
    pub fn max_reduce(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, _) = require_2d("max_reduce", t)?;
        let seg = Segments::new(vec![0; m], 1)?;
        let pooled = self.segment_max(x, &seg)?;
        let n = self.shape(pooled)[1];
        self.reshape(pooled, &[n])
    }

    /// Per-segment elementwise maximum of rows. Empty segments yield 0.
    pub fn segment_max(&mut self, x: Var, seg: &Segments) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = require_2d("segment_max", t)?;
        if seg.len() != m {
            return Err(Error::Dimension {
                op: "segment_max",
                lhs: vec![m],
                rhs: vec![seg.len()],
            });
        }
        let mut best: Vec<Option<usize>> = vec![None; seg.count() * n];
        for (r, &s) in seg.index().iter().enumerate() {
            for c in 0..n {
                let slot = &mut best[s * n + c];
                let v = t.data()[r * n + c];
                match slot {
                    Some(prev) if t.data()[*prev] >= v => {}
                    _ => *slot = Some(r * n + c),
                }
            }
        }
        let data = best.iter().map(|b| b.map_or(0.0, |i| t.data()[i])).collect();
        let src_len = t.numel();
        Ok(self.push_op(
            Tensor {
                shape: vec![seg.count(), n],
                data,
            },
            &[x],
            Box::new(Route { src_len, argmax: best }),
        ))
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns), or
    /// 1-D tensors along axis 0.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let first = self.value(xs[0]).shape().to_vec();
        let value = if axis == 0 {
            let mut data = Vec::new();
            let mut rows = 0;
            for &v in xs {
                let t = self.value(v);
                if t.shape().len() != first.len() || t.shape()[1..] != first[1..] {
                    return Err(Error::Dimension {
                        op: "concat",
                        lhs: first,
                        rhs: t.shape().to_vec(),
                    });
                }
                rows += t.shape()[0];
                data.extend_from_slice(t.data());
            }
            let mut shape = first.clone();
            shape[0] = rows;
            Tensor { shape, data }
        } else {
            let rows = require_2d("concat", self.value(xs[0]))?.0;
            let mut widths = Vec::with_capacity(xs.len());
            for &v in xs {
                let t = self.value(v);
                let (m, n) = require_2d("concat", t)?;
                if m != rows {
                    return Err(Error::Dimension {
                        op: "concat",
                        lhs: first,
                        rhs: t.shape().to_vec(),
                    });
                }
                widths.push(n);
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for &v in xs {
                    data.extend_from_slice(self.value(v).row(r));
                }
            }
            Tensor {
                shape: vec![rows, total],
                data,
            }
        };
        let widths = xs.iter().map(|&v| self.value(v).cols()).collect();
        Ok(self.push_op(value, xs, Box::new(Concat { axis, widths })))
    }

    /// Gathers rows: `out[e] = x[index[e]]`.
    pub fn index_select(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (m, d) = require_2d("index_select", t)?;
        check_indices("index_select", index, m)?;
        let mut data = Vec::with_capacity(index.len() * d);
        for &i in index {
            data.extend_from_slice(t.row(i));
        }
        Ok(self.push_op(
            Tensor {
                shape: vec![index.len(), d],
                data,
            },
            &[x],
            Box::new(IndexSelect {
                index: Arc::new(index.to_vec()),
            }),
        ))
    }

    /// Sums rows into `count` slots: `out[index[e]] += x[e]`.
    pub fn scatter_add(&mut self, x: Var, index: &[usize], count: usize) -> Result<Var> {
        let t = self.value(x);
        let (m, d) = require_2d("scatter_add", t)?;
        if index.len() != m {
            return Err(Error::Dimension {
                op: "scatter_add",
                lhs: vec![m],
                rhs: vec![index.len()],
            });
        }
        check_indices("scatter_add", index, count)?;
        let mut data = vec![0.0; count * d];
        for (e, &dst) in index.iter().enumerate() {
            for (o, v) in data[dst * d..(dst + 1) * d].iter_mut().zip(t.row(e)) {
                *o += v;
            }
        }
        Ok(self.push_op(
            Tensor {
                shape: vec![count, d],
                data,
            },
            &[x],
            Box::new(ScatterAdd {
                index: Arc::new(index.to_vec()),
            }),
        ))
    }

    pub fn segment_sum(&mut self, x: Var, seg: &Segments) -> Result<Var> {
        self.scatter_add(x, seg.index(), seg.count())
    }

    /// Per-segment mean; empty segments are a contract error.
    pub fn segment_mean(&mut self, x: Var, seg: &Segments) -> Result<Var> {
        let sizes = seg.sizes();
        if sizes.contains(&0) {
            return Err(Error::Contract("segment_mean over an empty segment".into()));
        }
        let sum = self.segment_sum(x, seg)?;
        let d = self.shape(sum)[1];
        let mut inv = Vec::with_capacity(seg.count() * d);
        for s in sizes {
            inv.extend(std::iter::repeat_n(1.0 / s as f64, d));
        }
        let inv = self.constant(Tensor {
            shape: vec![seg.count(), d],
            data: inv,
        });
        self.mul(sum, inv)
    }

    /// Selects (and possibly repeats) columns: `out[:, k] = x[:, cols[k]]`.
    pub fn gather_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (m, d) = require_2d("gather_cols", t)?;
        check_indices("gather_cols", cols, d)?;
        let mut data = Vec::with_capacity(m * cols.len());
        for r in 0..m {
            let row = t.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(self.push_op(
            Tensor {
                shape: vec![m, cols.len()],
                data,
            },
            &[x],
            Box::new(GatherCols {
                cols: Arc::new(cols.to_vec()),
            }),
        ))
    }

    /// Softmax over the rows sharing a segment, independently per column.
    pub fn segment_softmax(&mut self, x: Var, seg: &Segments) -> Result<Var> {
        let t = self.value(x);
        let (m, h) = require_2d("segment_softmax", t)?;
        if seg.len() != m {
            return Err(Error::Dimension {
                op: "segment_softmax",
                lhs: vec![m],
                rhs: vec![seg.len()],
            });
        }
        let mut maxes = vec![f64::NEG_INFINITY; seg.count() * h];
        for (e, &s) in seg.index().iter().enumerate() {
            for k in 0..h {
                let v = t.data()[e * h + k];
                if v > maxes[s * h + k] {
                    maxes[s * h + k] = v;
                }
            }
        }
        let mut data = vec![0.0; m * h];
        let mut denom = vec![0.0; seg.count() * h];
        for (e, &s) in seg.index().iter().enumerate() {
            for k in 0..h {
                let v = (t.data()[e * h + k] - maxes[s * h + k]).exp();
                data[e * h + k] = v;
                denom[s * h + k] += v;
            }
        }
        for (e, &s) in seg.index().iter().enumerate() {
            for k in 0..h {
                data[e * h + k] /= denom[s * h + k];
            }
        }
        Ok(self.push_op(
            Tensor {
                shape: vec![m, h],
                data,
            },
            &[x],
            Box::new(SegmentSoftmax {
                index: Arc::clone(&seg.index),
            }),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push_op(value, &[x], Box::new(Reshape)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Central-difference gradcheck of `f` (a scalar function built on a fresh
    /// tape from one leaf) at `x0`.
    fn gradcheck(x0: Tensor, f: impl Fn(&mut Tape, Var) -> Var) -> f64 {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone(), true);
        let y = f(&mut tape, x);
        tape.backward(y).unwrap();
        let analytic = tape.grad(x).unwrap().clone();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..x0.numel() {
            let eval = |delta: f64| {
                let mut t = Tape::new();
                let mut p = x0.clone();
                p.data_mut()[i] += delta;
                let v = t.leaf(p, false);
                let out = f(&mut t, v);
                t.value(out).data()[0]
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
        }
        worst
    }

    fn sample(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let m = tape.constant(Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 7.0]]).unwrap());
        let out = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(out), tape.value(m));

        let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn matmul_gradcheck_against_central_differences() {
        let b = sample(&[4, 2], 2);
        let err = gradcheck(sample(&[3, 4], 1), |t, a| {
            let bv = t.constant(b.clone());
            let p = t.matmul(a, bv).unwrap();
            t.sum(p)
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn activation_fixed_points() {
        assert_eq!(silu(0.0), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn scatter_add_definition() {
        let mut tape = Tape::new();
        let rows = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let out = tape.scatter_add(rows, &[0, 0, 1], 2).unwrap();
        assert_eq!(tape.value(out).data(), &[4.0, 6.0, 5.0, 6.0]);
        assert!(matches!(tape.scatter_add(rows, &[0, 0, 2], 2), Err(Error::Index { .. })));
        assert!(matches!(tape.index_select(rows, &[3]), Err(Error::Index { .. })));
    }

    #[test]
    fn backward_polynomial_cases() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap(), true);
        let s = tape.sum(w);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        tape.zero_grad();
        let sq = tape.mul(w, w).unwrap();
        let l = tape.sum(sq);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[2.0, -4.0, 1.0]);

        // repeated backward accumulates
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[4.0, -8.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2]), true);
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn every_op_passes_gradcheck() {
        let tol = 1e-5;
        let cases: Vec<(&str, Box<dyn Fn(&mut Tape, Var) -> Var>)> = vec![
            ("silu", Box::new(|t: &mut Tape, x| { let y = t.silu(x); t.sum(y) })),
            ("sigmoid", Box::new(|t: &mut Tape, x| { let y = t.sigmoid(x); let y2 = t.mul(y, y).unwrap(); t.sum(y2) })),
            ("exp", Box::new(|t: &mut Tape, x| { let y = t.exp(x); t.mean(y) })),
            ("mul_row", Box::new(|t: &mut Tape, x| {
                let r = t.constant(Tensor::new(vec![4], vec![0.3, -1.2, 2.0, 0.7]).unwrap());
                let y = t.mul(x, r).unwrap();
                let y = t.silu(y);
                t.sum(y)
            })),
            ("add_sub", Box::new(|t: &mut Tape, x| {
                let s = t.scale(x, 2.0);
                let y = t.sub(s, x).unwrap();
                let y = t.add(y, x).unwrap();
                let y = t.mul(y, x).unwrap();
                t.sum(y)
            })),
            ("sum_reduce", Box::new(|t: &mut Tape, x| {
                let r = t.sum_reduce(x, 0).unwrap();
                let r = t.mul(r, r).unwrap();
                let c = t.mean_reduce(x, 1).unwrap();
                let c = t.exp(c);
                let a = t.sum(r);
                let b = t.sum(c);
                t.add(a, b).unwrap()
            })),
            ("max_reduce", Box::new(|t: &mut Tape, x| {
                let m = t.max_reduce(x).unwrap();
                let w = t.constant(Tensor::new(vec![4], vec![1.0, 2.0, -3.0, 0.5]).unwrap());
                let y = t.mul(m, w).unwrap();
                t.sum(y)
            })),
            ("concat", Box::new(|t: &mut Tape, x| {
                let s = t.silu(x);
                let c = t.concat(&[x, s], 1).unwrap();
                let c2 = t.concat(&[c, c], 0).unwrap();
                let y = t.mul(c2, c2).unwrap();
                t.sum(y)
            })),
            ("index_scatter", Box::new(|t: &mut Tape, x| {
                let sel = t.index_select(x, &[2, 0, 0, 1]).unwrap();
                let sq = t.mul(sel, sel).unwrap();
                let s = t.scatter_add(sq, &[1, 1, 0, 2], 3).unwrap();
                let s = t.silu(s);
                t.sum(s)
            })),
            ("gather_cols", Box::new(|t: &mut Tape, x| {
                let g = t.gather_cols(x, &[3, 3, 0, 1]).unwrap();
                let g = t.mul(g, g).unwrap();
                t.sum(g)
            })),
            ("segment_softmax", Box::new(|t: &mut Tape, x| {
                let seg = Segments::new(vec![0, 1, 0], 2).unwrap();
                let s = t.segment_softmax(x, &seg).unwrap();
                let w = t.constant(sample(&[3, 4], 9));
                let y = t.mul(s, w).unwrap();
                t.sum(y)
            })),
            ("segment_mean_max", Box::new(|t: &mut Tape, x| {
                let seg = Segments::new(vec![1, 0, 1], 2).unwrap();
                let a = t.segment_mean(x, &seg).unwrap();
                let b = t.segment_max(x, &seg).unwrap();
                let y = t.mul(a, b).unwrap();
                t.sum(y)
            })),
            ("abs", Box::new(|t: &mut Tape, x| { let y = t.abs(x); t.sum(y) })),
            ("sqrt", Box::new(|t: &mut Tape, x| {
                let sq = t.mul(x, x).unwrap();
                let y = t.add_scalar(sq, 0.1);
                let y = t.sqrt(y);
                t.sum(y)
            })),
        ];
        for (name, f) in cases {
            let err = gradcheck(sample(&[3, 4], 5), f);
            assert!(err < tol, "{name}: rel err {err}");
        }
    }

    #[test]
    fn sqrt_gradient_is_zero_at_origin() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![0.0, 4.0]).unwrap(), true);
        let y = tape.sqrt(x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.25]);
    }

    #[test]
    fn select_then_scatter_reproduces_segment_sums() {
        let mut tape = Tape::new();
        let x = tape.constant(sample(&[5, 3], 11));
        let index = [4, 0, 2, 2, 1, 4];
        let groups = [0, 1, 1, 0, 2, 2];
        let sel = tape.index_select(x, &index).unwrap();
        let sum = tape.scatter_add(sel, &groups, 3).unwrap();
        let xv = tape.value(x).clone();
        for g in 0..3 {
            for c in 0..3 {
                let expected: f64 = index
                    .iter()
                    .zip(&groups)
                    .filter(|(_, &gg)| gg == g)
                    .map(|(&i, _)| xv.get2(i, c))
                    .sum();
                assert_eq!(tape.value(sum).get2(g, c), expected);
            }
        }
    }
}
