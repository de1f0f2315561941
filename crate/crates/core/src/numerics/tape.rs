//! Tape-based reverse-mode differentiation over a fixed primitive set.
//!
//! Every operation appends a node holding its forward value; nodes are
//! therefore stored in topological order and `backward` is a single reverse
//! sweep. Gradients reaching parameter leaves accumulate into the
//! [`ParamStore`] they came from.

use super::kernels::{conv2d_backward, conv2d_forward, gemm, ConvGeom};
use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Differentiable primitives, used to name a primitive for fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Relu,
    Abs,
    MatMul,
    Transpose,
    Softmax,
    Conv2d,
    AddChannel,
    Concat,
    Reshape,
    MaxPool,
    Gather,
    Narrow,
    Sum,
    Mean,
    SumSquares,
}

impl Primitive {
    pub const ALL: [Primitive; 20] = [
        Primitive::Add,
        Primitive::Sub,
        Primitive::Mul,
        Primitive::Scale,
        Primitive::AddScalar,
        Primitive::Relu,
        Primitive::Abs,
        Primitive::MatMul,
        Primitive::Transpose,
        Primitive::Softmax,
        Primitive::Conv2d,
        Primitive::AddChannel,
        Primitive::Concat,
        Primitive::Reshape,
        Primitive::MaxPool,
        Primitive::Gather,
        Primitive::Narrow,
        Primitive::Sum,
        Primitive::Mean,
        Primitive::SumSquares,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale => "scale",
            Primitive::AddScalar => "add_scalar",
            Primitive::Relu => "relu",
            Primitive::Abs => "abs",
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Softmax => "softmax",
            Primitive::Conv2d => "conv2d",
            Primitive::AddChannel => "add_channel",
            Primitive::Concat => "concat",
            Primitive::Reshape => "reshape",
            Primitive::MaxPool => "max_pool",
            Primitive::Gather => "gather",
            Primitive::Narrow => "narrow",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::SumSquares => "sum_squares",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Abs(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Softmax(Var),
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    AddChannel(Var, Var),
    Concat(Vec<Var>),
    Reshape(Var),
    MaxPool { x: Var, argmax: Vec<usize> },
    Gather { x: Var, index: Vec<usize> },
    Narrow { x: Var, start: usize },
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
}

impl<T> Op<T> {
    fn primitive(&self) -> Option<Primitive> {
        Some(match self {
            Op::Leaf | Op::Param(_) => return None,
            Op::Add(..) => Primitive::Add,
            Op::Sub(..) => Primitive::Sub,
            Op::Mul(..) => Primitive::Mul,
            Op::Scale(..) => Primitive::Scale,
            Op::AddScalar(_) => Primitive::AddScalar,
            Op::Relu(_) => Primitive::Relu,
            Op::Abs(_) => Primitive::Abs,
            Op::MatMul(..) => Primitive::MatMul,
            Op::Transpose(_) => Primitive::Transpose,
            Op::Softmax(_) => Primitive::Softmax,
            Op::Conv2d { .. } => Primitive::Conv2d,
            Op::AddChannel(..) => Primitive::AddChannel,
            Op::Concat(_) => Primitive::Concat,
            Op::Reshape(_) => Primitive::Reshape,
            Op::MaxPool { .. } => Primitive::MaxPool,
            Op::Gather { .. } => Primitive::Gather,
            Op::Narrow { .. } => Primitive::Narrow,
            Op::Sum(_) => Primitive::Sum,
            Op::Mean(_) => Primitive::Mean,
            Op::SumSquares(_) => Primitive::SumSquares,
        })
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a computation for one forward/backward pass.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    fault: Option<Primitive>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), fault: None }
    }

    /// A tape whose backward rule for `primitive` is deliberately wrong.
    /// Exists so gradient checkers can prove they detect broken rules.
    pub fn with_fault(primitive: Primitive) -> Self {
        Self { nodes: Vec::new(), fault: Some(primitive) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param(_) => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), &[])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.abs());
        self.push(v, Op::Abs(a), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = super::kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(a), &[a]))
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.value(a).dims2()?;
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(c) {
            let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let mut s = T::zero();
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s = s + *x;
            }
            for x in row.iter_mut() {
                *x = *x / s;
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax(a), &[a]))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let g = ConvGeom::new(self.value(x), self.value(w), stride, pad)?;
        let v = conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &g)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(v, Op::Conv2d { x, w, b, stride, pad }, &inputs))
    }

    /// Adds `b[c]` to every element of channel `c` of `x` (`C x ...`).
    pub fn add_channel(&mut self, x: Var, b: Var) -> Result<Var> {
        let c = self.shape(x)[0];
        if self.shape(b) != [c] {
            return Err(Error::shape(format!(
                "channel bias {:?} for input {:?}",
                self.shape(b),
                self.shape(x)
            )));
        }
        let mut v = self.value(x).clone();
        let stride = v.numel() / c;
        let bias = self.value(b).data().to_vec();
        for (chunk, bv) in v.data_mut().chunks_mut(stride).zip(bias) {
            chunk.iter_mut().for_each(|e| *e = *e + bv);
        }
        Ok(self.push(v, Op::AddChannel(x, b), &[x, b]))
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p)[1..] != tail[..] {
                return Err(Error::shape(format!(
                    "concat {:?} with {:?}",
                    self.shape(*first),
                    self.shape(p)
                )));
            }
            lead += self.shape(p)[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    /// 2x2 max pooling with stride 2 over a `C x H x W` tensor.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("max_pool2 needs even dims, got {h}x{w}")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = (ch * h + 2 * oy) * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let v = Tensor::from_parts(vec![c, ho, wo], out);
        Ok(self.push(v, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Selects columns of `x` viewed as `C x N`: output is `C x index.len()`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>) -> Result<Var> {
        let c = self.shape(x)[0];
        let n = self.value(x).numel() / c;
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::shape(format!("gather index {bad} out of {n} columns")));
        }
        if index.is_empty() {
            return Err(Error::shape("gather with empty index"));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * index.len());
        for ch in 0..c {
            let row = &src[ch * n..(ch + 1) * n];
            out.extend(index.iter().map(|&i| row[i]));
        }
        let v = Tensor::from_parts(vec![c, index.len()], out);
        Ok(self.push(v, Op::Gather { x, index }, &[x]))
    }

    /// Slice `start..start + len` of the leading axis.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if len == 0 || start + len > shape[0] {
            return Err(Error::shape(format!("narrow {start}+{len} of {shape:?}")));
        }
        let stride = self.value(x).numel() / shape[0];
        let data = self.value(x).data()[start * stride..(start + len) * stride].to_vec();
        let mut out_shape = shape;
        out_shape[0] = len;
        Ok(self.push(Tensor::from_parts(out_shape, data), Op::Narrow { x, start }, &[x]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a), &[a])
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data().iter().map(|&x| x * x).sum());
        self.push(v, Op::SumSquares(a), &[a])
    }

    /// Mean absolute value; `mean(abs(a))`.
    pub fn mean_abs(&mut self, a: Var) -> Var {
        let b = self.abs(a);
        self.mean(b)
    }

    /// `w * x + b` for `x` of shape `in x N`, `w` of shape `out x in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(w, x)?;
        match b {
            Some(b) => self.add_channel(y, b),
            None => Ok(y),
        }
    }

    /// Reverse sweep from a scalar `loss`, accumulating into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let faulty = self.fault.is_some() && node.op.primitive() == self.fault;
            let mut contribs = self.local_grads(node, &g, store)?;
            if faulty {
                for (_, c) in &mut contribs {
                    c.iter_mut().for_each(|v| *v = *v * T::from_f64(1.5));
                }
            }
            for (var, c) in contribs {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, &b)| *a = *a + b),
                    slot => *slot = Some(c),
                }
            }
        }
        Ok(())
    }

    fn local_grads(
        &self,
        node: &Node<T>,
        g: &[T],
        store: &mut ParamStore<T>,
    ) -> Result<Vec<(Var, Vec<T>)>> {
        let val = |v: Var| self.nodes[v.0].value.data();
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Param(id) => {
                if id.0 >= store.len() || store.value(*id).shape() != node.value.shape() {
                    return Err(Error::shape(format!(
                        "parameter {} does not belong to this store",
                        id.0
                    )));
                }
                let grad = &mut store.get_mut(*id).grad;
                grad.data_mut().iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
                vec![]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&x| -x).collect())],
            Op::Mul(a, b) => vec![
                (*a, g.iter().zip(val(*b)).map(|(&x, &y)| x * y).collect()),
                (*b, g.iter().zip(val(*a)).map(|(&x, &y)| x * y).collect()),
            ],
            Op::Scale(a, s) => vec![(*a, g.iter().map(|&x| x * *s).collect())],
            Op::AddScalar(a) => vec![(*a, g.to_vec())],
            Op::Relu(a) => vec![(
                *a,
                g.iter()
                    .zip(node.value.data())
                    .map(|(&x, &y)| if y > T::zero() { x } else { T::zero() })
                    .collect(),
            )],
            Op::Abs(a) => vec![(
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(&x, &y)| {
                        if y > T::zero() {
                            x
                        } else if y < T::zero() {
                            -x
                        } else {
                            T::zero()
                        }
                    })
                    .collect(),
            )],
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2()?;
                let n = node.value.shape()[1];
                let mut res = Vec::new();
                if needs(*a) {
                    let mut ga = vec![T::zero(); m * k];
                    gemm(g, false, val(*b), true, m, n, k, &mut ga, false);
                    res.push((*a, ga));
                }
                if needs(*b) {
                    let mut gb = vec![T::zero(); k * n];
                    gemm(val(*a), true, g, false, k, m, n, &mut gb, false);
                    res.push((*b, gb));
                }
                res
            }
            Op::Transpose(a) => {
                let (r, c) = self.nodes[a.0].value.dims2()?;
                let mut ga = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] = g[j * r + i];
                    }
                }
                vec![(*a, ga)]
            }
            Op::Softmax(a) => {
                let c = node.value.shape()[1];
                let mut ga = vec![T::zero(); g.len()];
                for ((gr, yr), out) in g.chunks(c).zip(node.value.data().chunks(c)).zip(ga.chunks_mut(c)) {
                    let dot: T = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum();
                    for ((o, &gi), &yi) in out.iter_mut().zip(gr).zip(yr) {
                        *o = yi * (gi - dot);
                    }
                }
                vec![(*a, ga)]
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xv = &self.nodes[x.0].value;
                let wv = &self.nodes[w.0].value;
                let geom = ConvGeom::new(xv, wv, *stride, *pad)?;
                let (dx, dw, db) = conv2d_backward(xv, wv, g, &geom, needs(*x), needs(*w));
                let mut res = Vec::new();
                if let Some(dx) = dx {
                    res.push((*x, dx));
                }
                if let Some(dw) = dw {
                    res.push((*w, dw));
                }
                if let Some(b) = b {
                    res.push((*b, db));
                }
                res
            }
            Op::AddChannel(x, b) => {
                let c = self.nodes[b.0].value.numel();
                let stride = g.len() / c;
                let gb = g.chunks(stride).map(|ch| ch.iter().copied().sum()).collect();
                vec![(*x, g.to_vec()), (*b, gb)]
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let n = self.nodes[p.0].value.numel();
                        let slice = g[offset..offset + n].to_vec();
                        offset += n;
                        (*p, slice)
                    })
                    .collect()
            }
            Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![T::zero(); self.nodes[x.0].value.numel()];
                for (&i, &gi) in argmax.iter().zip(g) {
                    gx[i] = gx[i] + gi;
                }
                vec![(*x, gx)]
            }
            Op::Gather { x, index } => {
                let xv = &self.nodes[x.0].value;
                let c = xv.shape()[0];
                let n = xv.numel() / c;
                let m = index.len();
                let mut gx = vec![T::zero(); xv.numel()];
                for ch in 0..c {
                    let dst = &mut gx[ch * n..(ch + 1) * n];
                    for (&i, &gi) in index.iter().zip(&g[ch * m..(ch + 1) * m]) {
                        dst[i] = dst[i] + gi;
                    }
                }
                vec![(*x, gx)]
            }
            Op::Narrow { x, start } => {
                let xv = &self.nodes[x.0].value;
                let stride = xv.numel() / xv.shape()[0];
                let mut gx = vec![T::zero(); xv.numel()];
                gx[start * stride..start * stride + g.len()].copy_from_slice(g);
                vec![(*x, gx)]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; self.nodes[a.0].value.numel()])],
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.numel();
                vec![(*a, vec![g[0] / T::from_f64(n as f64); n])]
            }
            Op::SumSquares(a) => {
                let two = T::from_f64(2.0);
                vec![(*a, val(*a).iter().map(|&x| two * x * g[0]).collect())]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f32) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::scalar(v)).unwrap();
        (s, id)
    }

    #[test]
    fn square_gradient() {
        let (mut s, id) = scalar_param(3.0);
        let mut t = Tape::new();
        let x = t.param(&s, id);
        let y = t.mul(x, x).unwrap();
        t.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(id).data(), &[6.0]);
    }

    #[test]
    fn relu_subgradient_is_zero_on_negative_side() {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap()).unwrap();
        let mut t = Tape::new();
        let x = t.param(&s, id);
        let r = t.relu(x);
        let y = t.sum(r);
        t.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(id).data(), &[0.0, 1.0]);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let (mut s, id) = scalar_param(3.0);
        for _ in 0..2 {
            let mut t = Tape::new();
            let x = t.param(&s, id);
            let y = t.mul(x, x).unwrap();
            t.backward(y, &mut s).unwrap();
        }
        assert_eq!(s.grad(id).data(), &[12.0]);
        s.zero_grads();
        assert_eq!(s.grad(id).data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut s = ParamStore::<f32>::new();
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[2]));
        assert!(t.backward(x, &mut s).is_err());
    }

    #[test]
    fn disconnected_parameter_keeps_zero_gradient() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::scalar(2.0f32)).unwrap();
        let b = s.add("b", Tensor::scalar(5.0f32)).unwrap();
        let mut t = Tape::new();
        let va = t.param(&s, a);
        let _vb = t.param(&s, b);
        let y = t.mul(va, va).unwrap();
        t.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(b).data(), &[0.0]);
        assert_eq!(s.grad(a).data(), &[4.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::new(vec![2, 3], vec![1., 2., 3., -1., 0., 5.]).unwrap());
        let y = t.softmax_rows(x).unwrap();
        for row in t.value(y).data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn primitive_names_round_trip() {
        for p in Primitive::ALL {
            assert_eq!(Primitive::from_name(p.name()), Some(p));
        }
    }
}
