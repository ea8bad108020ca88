//! Tape-based reverse-mode automatic differentiation.
//!
//! Every forward op appends a node holding its value and enough information
//! to propagate gradients back to its inputs. A tape lives for one forward /
//! backward pass; parameters are copied in from a [`ParamStore`] and their
//! gradients are accumulated back into it after [`Tape::backward`].

use std::collections::HashMap;

use super::tensor::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Backward rule for an op implemented outside the tape (losses, DP kernels).
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Accumulates `d output / d input_k * grad_out` into `grad_inputs[k]`.
    ///
    /// `grad_inputs[k]` is zero-initialised with the length of input `k`.
    fn backward(&self, inputs: &[&[f64]], output: &[f64], grad_out: &[f64], grad_inputs: &mut [Vec<f64>]);
}

enum Op {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, shared_rhs: bool },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    Transpose { a: Var },
    Reshape { a: Var },
    Softmax { a: Var, axis: usize },
    LayerNorm { a: Var, inv_std: Vec<f64> },
    Gelu { a: Var },
    Relu { a: Var },
    Sum { a: Var },
    Mean { a: Var },
    Slice { a: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Records forward ops for a single reverse pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<f64>>>,
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn is_suffix(long: &[usize], short: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// `c[m,n] += a[m,k] * b[k,n]`
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op_name: &'static str,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if cfg!(debug_assertions) && value.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape is consistent")
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Places a tensor on the tape. Gradients are tracked when `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var, TensorError> {
        self.push("leaf", t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad)
    }

    /// Constant input built from raw parts.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        self.push("constant", shape, data, Op::Leaf, false)
    }

    /// Copies parameter `id` onto the tape once; later calls reuse the node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var, TensorError> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let t = store.get(id);
        let v = self.push("param", t.shape().to_vec(), t.data().to_vec(), Op::Param, true)?;
        self.params.insert(id, v);
        Ok(v)
    }

    /// Matrix product over the trailing two axes.
    ///
    /// `a` is `[.., m, k]`; `b` is either a shared `[k, n]` matrix or has the
    /// same leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return Err(mismatch());
        }
        let shared_rhs = sb.len() == 2;
        if !shared_rhs && sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(mismatch());
        }
        let batch = sa[..sa.len() - 2].iter().product::<usize>();
        let mut out = vec![0.0; batch * m * n];
        {
            let av = self.value(a);
            let bv = self.value(b);
            for bi in 0..batch {
                let bs = if shared_rhs { 0 } else { bi * k * n };
                gemm_acc(
                    &av[bi * m * k..(bi + 1) * m * k],
                    &bv[bs..bs + k * n],
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([m, n]);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", shape, out, Op::MatMul { a, b, shared_rhs }, rg)
    }

    fn broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !is_suffix(sa, sb) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        self.broadcast_check(name, a, b)?;
        let av = self.value(a);
        let bv = self.value(b);
        let out: Vec<f64> = av.iter().zip(bv.iter().cycle()).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(name, shape, out, op, rg)
    }

    /// Element-wise `a + b`; `b` may broadcast over the leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push("scale", shape, out, Op::Scale { a, c }, rg)
    }

    /// Swaps the trailing two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        if sa.len() < 2 {
            return Err(TensorError::InvalidArgument {
                op: "transpose",
                msg: format!("rank {} < 2", sa.len()),
            });
        }
        let (r, c) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let nb: usize = sa[..sa.len() - 2].iter().product();
        let av = self.value(a);
        let mut out = vec![0.0; av.len()];
        for b in 0..nb {
            let src = &av[b * r * c..(b + 1) * r * c];
            let dst = &mut out[b * r * c..(b + 1) * r * c];
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([c, r]);
        let rg = self.rg(a);
        self.push("transpose", shape, out, Op::Transpose { a }, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(a);
        self.push("reshape", shape, out, Op::Reshape { a }, rg)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        if axis >= sa.len() {
            return Err(TensorError::InvalidArgument {
                op: "softmax",
                msg: format!("axis {axis} out of range for {sa:?}"),
            });
        }
        let (outer, len, inner) = split_axis(&sa, axis);
        let av = self.value(a);
        let mut out = vec![0.0; av.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for k in 0..len {
                    mx = mx.max(av[base + k * inner]);
                }
                let mut z = 0.0;
                for k in 0..len {
                    let e = (av[base + k * inner] - mx).exp();
                    out[base + k * inner] = e;
                    z += e;
                }
                for k in 0..len {
                    out[base + k * inner] /= z;
                }
            }
        }
        let rg = self.rg(a);
        self.push("softmax", sa, out, Op::Softmax { a, axis }, rg)
    }

    /// Normalises over the last axis (no affine transform).
    pub fn layer_norm(&mut self, a: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        let d = *sa.last().expect("tensor has rank >= 1");
        let av = self.value(a);
        let rows = av.len() / d;
        let mut out = vec![0.0; av.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let x = &av[r * d..(r + 1) * d];
            let mean = x.iter().sum::<f64>() / d as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in out[r * d..(r + 1) * d].iter_mut().zip(x) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(a);
        self.push("layer_norm", sa, out, Op::LayerNorm { a, inv_std }, rg)
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|&x| gelu(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push("gelu", shape, out, Op::Gelu { a }, rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push("relu", shape, out, Op::Relu { a }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push("sum", vec![1], vec![s], Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(a);
        self.push("mean", vec![1], vec![s], Op::Mean { a }, rg)
    }

    /// `len` entries of `a` along `axis`, starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        if axis >= sa.len() || len == 0 || start + len > sa[axis] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                msg: format!("[{start}, {}) on axis {axis} of {sa:?}", start + len),
            });
        }
        let (outer, full, inner) = split_axis(&sa, axis);
        let av = self.value(a);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            out.extend_from_slice(&av[base..base + len * inner]);
        }
        let mut shape = sa;
        shape[axis] = len;
        let rg = self.rg(a);
        self.push("slice", shape, out, Op::Slice { a, axis, start }, rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let s0 = self.shape(*first).to_vec();
        if axis >= s0.len() {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                msg: format!("axis {axis} out of range for {s0:?}"),
            });
        }
        let mut total = 0;
        for &p in parts {
            let sp = self.shape(p);
            let compatible =
                sp.len() == s0.len() && sp.iter().zip(&s0).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: s0.clone(),
                    rhs: sp.to_vec(),
                });
            }
            total += sp[axis];
        }
        let (outer, _, inner) = split_axis(&s0, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let l = self.shape(p)[axis];
                let v = self.value(p);
                out.extend_from_slice(&v[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = s0;
        shape[axis] = total;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            "concat",
            shape,
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Records an op whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Box<dyn CustomOp>,
    ) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != value.len() {
            return Err(TensorError::DataLength {
                shape,
                len: value.len(),
            });
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        let name = op.name();
        self.push(
            name,
            shape,
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Reverse pass from a scalar `loss`; afterwards [`Tape::grad`] is populated.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds the gradients of parameter nodes into `store`'s grad buffers.
    ///
    /// Calling this twice without zeroing accumulates.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&id, &v) in &self.params {
            let Some(g) = self.grad(v) else { continue };
            let t = store.get_mut(id);
            let buf = t.grad.get_or_insert_with(|| vec![0.0; g.len()]);
            for (b, x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        }
    }

    /// `backward` followed by `accumulate_param_grads`.
    pub fn backward_into(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        self.backward(loss)?;
        self.accumulate_param_grads(store);
        Ok(())
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, len: usize| -> Option<usize> {
            if !self.nodes[v.0].requires_grad {
                return None;
            }
            if grads[v.0].is_none() {
                grads[v.0] = Some(vec![0.0; len]);
            }
            Some(v.0)
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b, shared_rhs } => {
                let sa = self.shape(*a);
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = *node.shape.last().unwrap();
                let batch = self.value(*a).len() / (m * k);
                let av = self.value(*a);
                let bv = self.value(*b);
                if let Some(ai) = acc(grads, *a, av.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for bi in 0..batch {
                        let bs = if *shared_rhs { 0 } else { bi * k * n };
                        let bm = &bv[bs..bs + k * n];
                        for i in 0..m {
                            let grow = &g[bi * m * n + i * n..bi * m * n + (i + 1) * n];
                            let garow = &mut ga[bi * m * k + i * k..bi * m * k + (i + 1) * k];
                            for (p, gap) in garow.iter_mut().enumerate() {
                                let brow = &bm[p * n..(p + 1) * n];
                                *gap += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                }
                if let Some(bi_) = acc(grads, *b, bv.len()) {
                    let gb = grads[bi_].as_mut().unwrap();
                    for bi in 0..batch {
                        let bs = if *shared_rhs { 0 } else { bi * k * n };
                        for i in 0..m {
                            let grow = &g[bi * m * n + i * n..bi * m * n + (i + 1) * n];
                            for p in 0..k {
                                let aip = av[bi * m * k + i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                let gbrow = &mut gb[bs + p * n..bs + (p + 1) * n];
                                for (x, y) in gbrow.iter_mut().zip(grow) {
                                    *x += aip * y;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                let bl = self.value(*b).len();
                if let Some(bi) = acc(grads, *b, bl) {
                    let gb = grads[bi].as_mut().unwrap();
                    for chunk in g.chunks(bl) {
                        for (x, y) in gb.iter_mut().zip(chunk) {
                            *x += sign * y;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for ((x, y), bb) in ga.iter_mut().zip(g).zip(bv.iter().cycle()) {
                        *x += y * bb;
                    }
                }
                let bl = bv.len();
                if let Some(bi) = acc(grads, *b, bl) {
                    let gb = grads[bi].as_mut().unwrap();
                    for (gc, ac) in g.chunks(bl).zip(av.chunks(bl)) {
                        for ((x, y), aa) in gb.iter_mut().zip(gc).zip(ac) {
                            *x += y * aa;
                        }
                    }
                }
            }
            Op::Scale { a, c } => {
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += c * y;
                    }
                }
            }
            Op::Transpose { a } => {
                let sa = self.shape(*a);
                let (r, c) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    let nb = g.len() / (r * c);
                    for b in 0..nb {
                        let off = b * r * c;
                        for i in 0..r {
                            for j in 0..c {
                                ga[off + i * c + j] += g[off + j * r + i];
                            }
                        }
                    }
                }
            }
            Op::Reshape { a } => {
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            Op::Softmax { a, axis } => {
                let (outer, len, inner) = split_axis(&node.shape, *axis);
                let y = &node.value;
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let dot: f64 = (0..len).map(|k| g[base + k * inner] * y[base + k * inner]).sum();
                            for k in 0..len {
                                let p = base + k * inner;
                                ga[p] += y[p] * (g[p] - dot);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm { a, inv_std } => {
                let d = *node.shape.last().unwrap();
                let y = &node.value;
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for (r, is) in inv_std.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let yr = &y[r * d..(r + 1) * d];
                        let mg = gr.iter().sum::<f64>() / d as f64;
                        let mgy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / d as f64;
                        for ((x, gv), yv) in ga[r * d..(r + 1) * d].iter_mut().zip(gr).zip(yr) {
                            *x += is * (gv - mg - yv * mgy);
                        }
                    }
                }
            }
            Op::Gelu { a } => {
                let av = self.value(*a);
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(av) {
                        *x += y * gelu_grad(*v);
                    }
                }
            }
            Op::Relu { a } => {
                let av = self.value(*a);
                if let Some(ai) = acc(grads, *a, g.len()) {
                    let ga = grads[ai].as_mut().unwrap();
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(av) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                }
            }
            Op::Sum { a } | Op::Mean { a } => {
                let l = self.value(*a).len();
                let s = if matches!(node.op, Op::Mean { .. }) {
                    g[0] / l as f64
                } else {
                    g[0]
                };
                if let Some(ai) = acc(grads, *a, l) {
                    grads[ai].as_mut().unwrap().iter_mut().for_each(|x| *x += s);
                }
            }
            Op::Slice { a, axis, start } => {
                let sa = self.shape(*a);
                let (outer, full, inner) = split_axis(sa, *axis);
                let len = node.shape[*axis];
                if let Some(ai) = acc(grads, *a, outer * full * inner) {
                    let ga = grads[ai].as_mut().unwrap();
                    for o in 0..outer {
                        let base = o * full * inner + start * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (x, y) in ga[base..base + len * inner].iter_mut().zip(src) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let l = self.shape(p)[*axis];
                    if let Some(pi) = acc(grads, p, outer * l * inner) {
                        let gp = grads[pi].as_mut().unwrap();
                        for o in 0..outer {
                            let src = &g[o * total * inner + offset * inner..][..l * inner];
                            for (x, y) in gp[o * l * inner..(o + 1) * l * inner].iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    }
                    offset += l;
                }
            }
            Op::Custom { inputs, op } => {
                let vals: Vec<&[f64]> = inputs.iter().map(|&v| self.value(v)).collect();
                let mut local: Vec<Vec<f64>> = vals.iter().map(|v| vec![0.0; v.len()]).collect();
                op.backward(&vals, &node.value, g, &mut local);
                for (&v, lg) in inputs.iter().zip(local) {
                    if let Some(vi) = acc(grads, v, lg.len()) {
                        let gv = grads[vi].as_mut().unwrap();
                        for (x, y) in gv.iter_mut().zip(&lg) {
                            *x += y;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_singleton_is_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1], &[3.7])).unwrap();
        let y = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(y), &[1.0]);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 4], &[2.5; 4])).unwrap();
        let y = tape.layer_norm(x).unwrap();
        assert!(tape.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let b = tape.leaf(&t(&[2, 1], &[1.0, 1.0])).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(c), &[2, 1]);
        assert_eq!(tape.value(c), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_op_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.leaf(&Tensor::zeros(&[2, 3])).unwrap();
        match tape.matmul(a, b) {
            Err(TensorError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn add_rejects_non_suffix_broadcast() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.leaf(&Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            tape.add(a, b),
            Err(TensorError::ShapeMismatch { op: "add", .. })
        ));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(&t(&[3], &[0.3, -1.0, 2.0]).with_grad()).unwrap();
        let s = tape.sum(w).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut tape = Tape::new();
        let w = tape.leaf(&t(&[2], &[1.0, 2.0]).with_grad()).unwrap();
        let sq = tape.mul(w, w).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::zeros(&[2]).with_grad()).unwrap();
        assert!(matches!(tape.backward(w), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn param_grads_accumulate_until_zeroed() {
        let mut store = ParamStore::new();
        let id = store.insert("w", t(&[2], &[1.0, -1.0]));
        let mut tape = Tape::new();
        let w = tape.param(&store, id).unwrap();
        let s = tape.sum(w).unwrap();
        tape.backward_into(s, &mut store).unwrap();
        tape.backward_into(s, &mut store).unwrap();
        assert_eq!(store.get(id).grad.as_deref().unwrap(), &[2.0, 2.0]);
        store.zero_grad();
        assert_eq!(store.get(id).grad.as_deref().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_values_are_rejected_in_debug() {
        if !cfg!(debug_assertions) {
            return;
        }
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1], &[1e300])).unwrap();
        assert!(matches!(
            tape.scale(x, 1e300),
            Err(TensorError::NonFinite { op: "scale" })
        ));
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = tape.leaf(&t(&[2, 3, 4], &data)).unwrap();
        let a = tape.slice(x, 2, 0, 1).unwrap();
        let b = tape.slice(x, 2, 1, 3).unwrap();
        let y = tape.concat(&[a, b], 2).unwrap();
        assert_eq!(tape.value(y), &data[..]);
        let r = tape.slice(x, 1, 1, 2).unwrap();
        assert_eq!(tape.shape(r), &[2, 2, 4]);
        assert_eq!(tape.value(r)[0], 4.0);
    }
}
