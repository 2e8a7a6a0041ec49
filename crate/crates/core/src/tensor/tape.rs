use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, ConvGeom};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    AddColBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    LeakyRelu(Var, T),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Sum(Var),
    MeanRows(Var),
    Transpose(Var),
    Reshape(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Ordered record of executed operations.
///
/// Inputs always precede the operations that consume them, so a single
/// reverse sweep in [`Tape::backward`] visits every node exactly once.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn check2(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match shape {
        [m, n] => Ok((*m, *n)),
        _ => Err(Error::dim(format!("{what} expects a matrix, got shape {shape:?}"))),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape holds valid shapes")
    }

    /// Gradient left by the last [`Tape::backward`] call, if `v` requires one.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, shape: Vec<usize>, value: Vec<T>, op: Op<T>, rg: bool) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if !value.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad: rg,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Result<Var> {
        let rg = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push("leaf", shape, t.into_data(), Op::Leaf, rg)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        let shape = t.shape().to_vec();
        self.push("constant", shape, t.into_data(), Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = check2(self.shape(a), "matmul")?;
        let (k2, n) = check2(self.shape(b), "matmul")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul inner dimensions disagree: {m}×{k} · {k2}×{n}"
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        self.push("matmul", vec![m, n], out, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "add shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let rg = self.rg(&[a, b]);
        self.push("add", self.shape(a).to_vec(), out, Op::Add(a, b), rg)
    }

    /// `x[m×n] + bias[n]`, broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = check2(self.shape(x), "add_row_bias")?;
        if self.value(bias).len() != n {
            return Err(Error::dim(format!(
                "row bias of length {} for {m}×{n} input",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias);
        let out = self.value(x).iter().enumerate().map(|(i, &v)| v + b[i % n]).collect();
        let rg = self.rg(&[x, bias]);
        self.push("add_row_bias", vec![m, n], out, Op::AddRowBias(x, bias), rg)
    }

    /// `x[m×n] + bias[m]`, broadcast over columns.
    pub fn add_col_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = check2(self.shape(x), "add_col_bias")?;
        if self.value(bias).len() != m {
            return Err(Error::dim(format!(
                "column bias of length {} for {m}×{n} input",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias);
        let out = self.value(x).iter().enumerate().map(|(i, &v)| v + b[i / n]).collect();
        let rg = self.rg(&[x, bias]);
        self.push("add_col_bias", vec![m, n], out, Op::AddColBias(x, bias), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "mul shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let rg = self.rg(&[a, b]);
        self.push("mul", self.shape(a).to_vec(), out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| x * s).collect();
        let rg = self.rg(&[a]);
        self.push("scale", self.shape(a).to_vec(), out, Op::Scale(a, s), rg)
    }

    /// `x` where `x ≥ 0`, `slope·x` elsewhere. The subgradient at 0 is 1.
    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        let out = self
            .value(a)
            .iter()
            .map(|&x| if x >= T::zero() { x } else { slope * x })
            .collect();
        let rg = self.rg(&[a]);
        self.push("leaky_relu", self.shape(a).to_vec(), out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x);
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut max = T::neg_infinity();
                for k in 0..len {
                    max = max.max(src[at(k)]);
                }
                let mut total = T::zero();
                for k in 0..len {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    total = total + e;
                }
                for k in 0..len {
                    out[at(k)] = out[at(k)] / total;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push("softmax", shape, out, Op::Softmax { x, outer, len, inner }, rg)
    }

    /// Normalizes over the last axis (population variance), then applies
    /// `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap();
        if n < 2 {
            return Err(Error::dim("layer_norm needs a last axis of length ≥ 2"));
        }
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::dim(format!("layer_norm affine parameters must have length {n}")));
        }
        let src = self.value(x);
        let rows = src.len() / n;
        let nf = T::of(n as f64);
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); src.len()];
        let (g, b) = (self.value(gain), self.value(bias));
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = g[j] * h + b[j];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        self.push(
            "layer_norm",
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Cross-correlation of `x[C_in×H×W]` with `w[C_out×C_in×kh×kw]`, plus an
    /// optional per-channel bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (c_in, h, wd) = match xs[..] {
            [c, h, w] => (c, h, w),
            _ => return Err(Error::dim(format!("conv2d input must be C×H×W, got {xs:?}"))),
        };
        let (c_out, wc, kh, kw) = match ws[..] {
            [o, c, kh, kw] => (o, c, kh, kw),
            _ => return Err(Error::dim(format!("conv2d kernel must be O×C×kh×kw, got {ws:?}"))),
        };
        if wc != c_in {
            return Err(Error::dim(format!("conv2d kernel expects {wc} channels, input has {c_in}")));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d stride must be ≥ 1"));
        }
        if kh > h + 2 * pad || kw > wd + 2 * pad {
            return Err(Error::dim(format!(
                "conv2d kernel {kh}×{kw} larger than padded input {}×{}",
                h + 2 * pad,
                wd + 2 * pad
            )));
        }
        if let Some(b) = b {
            if self.value(b).len() != c_out {
                return Err(Error::dim(format!("conv2d bias must have {c_out} entries")));
            }
        }
        let geom = ConvGeom {
            c_in,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            h_out: (h + 2 * pad - kh) / stride + 1,
            w_out: (wd + 2 * pad - kw) / stride + 1,
        };
        let cols = im2col(self.value(x), &geom);
        let p = geom.col_cols();
        let mut out = vec![T::zero(); c_out * p];
        if let Some(b) = b {
            for (o, &bv) in self.value(b).iter().enumerate() {
                out[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = bv);
            }
        }
        gemm_nn(self.value(w), &cols, &mut out, c_out, geom.col_rows(), p);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        self.push(
            "conv2d",
            vec![c_out, geom.h_out, geom.w_out],
            out,
            Op::Conv2d { x, w, b, geom, cols },
            rg,
        )
    }

    /// Mean over rows of `−log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, c) = check2(self.shape(logits), "cross_entropy")?;
        if labels.len() != n {
            return Err(Error::dim(format!("{} labels for {n} rows of logits", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Contract(format!("label {bad} out of range for {c} classes")));
        }
        let z = self.value(logits);
        let mut probs = vec![T::zero(); n * c];
        let mut loss = T::zero();
        for i in 0..n {
            let row = &z[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss = loss + (lse - row[labels[i]]);
        }
        loss = loss / T::of(n as f64);
        let rg = self.rg(&[logits]);
        self.push(
            "cross_entropy",
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push("sum", vec![1], vec![s], Op::Sum(a), rg)
    }

    /// `[m×n] → [1×n]` column means.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = check2(self.shape(a), "mean_rows")?;
        let src = self.value(a);
        let mut out = vec![T::zero(); n];
        for r in 0..m {
            for (o, &v) in out.iter_mut().zip(&src[r * n..(r + 1) * n]) {
                *o = *o + v;
            }
        }
        let inv = T::one() / T::of(m as f64);
        out.iter_mut().for_each(|v| *v = *v * inv);
        let rg = self.rg(&[a]);
        self.push("mean_rows", vec![1, n], out, Op::MeanRows(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = check2(self.shape(a), "transpose")?;
        let src = self.value(a);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        self.push("transpose", vec![n, m], out, Op::Transpose(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() || shape.contains(&0) {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(a)
            )));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        self.push("reshape", shape.to_vec(), out, Op::Reshape(a), rg)
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = check2(self.shape(x), "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::dim(format!("column slice {start}..{} of {n} columns", start + len)));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + start + len]);
        }
        let rg = self.rg(&[x]);
        self.push("slice_cols", vec![m, len], out, Op::SliceCols { x, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::dim("concat_cols of nothing"))?;
        let (m, _) = check2(self.shape(first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = check2(self.shape(p), "concat_cols")?;
            if pm != m {
                return Err(Error::dim("concat_cols row counts differ"));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        self.push("concat_cols", vec![m, n], out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Stacks equally sized values as the rows of an `[L×d]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or_else(|| Error::dim("stack_rows of nothing"))?;
        let d = self.value(first).len();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if self.value(r).len() != d {
                return Err(Error::dim("stack_rows inputs differ in size"));
            }
            out.extend_from_slice(self.value(r));
        }
        let rg = self.rg(rows);
        self.push("stack_rows", vec![rows.len(), d], out, Op::StackRows(rows.to_vec()), rg)
    }

    /// Reverse sweep from a scalar `loss`. Afterwards every node that
    /// requires a gradient holds d(loss)/d(node); leaves the loss does not
    /// depend on hold exact zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for node in &mut self.nodes {
            node.grad = node.requires_grad.then(|| vec![T::zero(); node.value.len()]);
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad.as_mut().unwrap()[0] = T::one();

        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            backprop_node(before, node, g);
        }
        Ok(())
    }
}

/// Runs `f` on the gradient buffer of `v` (if it requires one) while keeping
/// all node values readable.
fn with_grad<T: Scalar>(nodes: &mut [Node<T>], v: Var, f: impl FnOnce(&mut [T], &[Node<T>])) {
    if !nodes[v.0].requires_grad {
        return;
    }
    let mut buf = nodes[v.0].grad.take().expect("grad allocated for requires_grad nodes");
    f(&mut buf, nodes);
    nodes[v.0].grad = Some(buf);
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn backprop_node<T: Scalar>(nodes: &mut [Node<T>], node: &Node<T>, g: &[T]) {
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let n = nodes[b.0].shape[1];
            with_grad(nodes, a, |da, ns| gemm_nt(g, &ns[b.0].value, da, m, n, k));
            with_grad(nodes, b, |db, ns| gemm_tn(&ns[a.0].value, g, db, k, m, n));
        }
        &Op::Add(a, b) => {
            with_grad(nodes, a, |da, _| add_into(da, g));
            with_grad(nodes, b, |db, _| add_into(db, g));
        }
        &Op::AddRowBias(x, bias) => {
            let n = node.shape[1];
            with_grad(nodes, x, |dx, _| add_into(dx, g));
            with_grad(nodes, bias, |db, _| {
                for row in g.chunks(n) {
                    add_into(db, row);
                }
            });
        }
        &Op::AddColBias(x, bias) => {
            let n = node.shape[1];
            with_grad(nodes, x, |dx, _| add_into(dx, g));
            with_grad(nodes, bias, |db, _| {
                for (d, row) in db.iter_mut().zip(g.chunks(n)) {
                    *d = *d + row.iter().copied().sum::<T>();
                }
            });
        }
        &Op::Mul(a, b) => {
            with_grad(nodes, a, |da, ns| {
                for ((d, &gv), &bv) in da.iter_mut().zip(g).zip(&ns[b.0].value) {
                    *d = *d + gv * bv;
                }
            });
            with_grad(nodes, b, |db, ns| {
                for ((d, &gv), &av) in db.iter_mut().zip(g).zip(&ns[a.0].value) {
                    *d = *d + gv * av;
                }
            });
        }
        &Op::Scale(a, s) => with_grad(nodes, a, |da, _| {
            for (d, &gv) in da.iter_mut().zip(g) {
                *d = *d + gv * s;
            }
        }),
        &Op::LeakyRelu(a, slope) => with_grad(nodes, a, |da, ns| {
            for ((d, &gv), &x) in da.iter_mut().zip(g).zip(&ns[a.0].value) {
                *d = *d + if x >= T::zero() { gv } else { gv * slope };
            }
        }),
        &Op::Softmax { x, outer, len, inner } => {
            let y = &node.value;
            with_grad(nodes, x, |dx, _| {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot = (0..len).map(|k| g[at(k)] * y[at(k)]).sum::<T>();
                        for k in 0..len {
                            dx[at(k)] = dx[at(k)] + y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
            });
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let n = *node.shape.last().unwrap();
            let nf = T::of(n as f64);
            with_grad(nodes, *x, |dx, ns| {
                let gn = &ns[gain.0].value;
                for (r, &is) in inv_std.iter().enumerate() {
                    let gr = &g[r * n..(r + 1) * n];
                    let hr = &xhat[r * n..(r + 1) * n];
                    let mut s1 = T::zero();
                    let mut s2 = T::zero();
                    for j in 0..n {
                        let dh = gr[j] * gn[j];
                        s1 = s1 + dh;
                        s2 = s2 + dh * hr[j];
                    }
                    for j in 0..n {
                        let dh = gr[j] * gn[j];
                        let v = &mut dx[r * n + j];
                        *v = *v + is / nf * (nf * dh - s1 - hr[j] * s2);
                    }
                }
            });
            with_grad(nodes, *gain, |dg, _| {
                for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                    for j in 0..n {
                        dg[j] = dg[j] + gr[j] * hr[j];
                    }
                }
            });
            with_grad(nodes, *bias, |db, _| {
                for gr in g.chunks(n) {
                    add_into(db, gr);
                }
            });
        }
        Op::Conv2d { x, w, b, geom, cols } => {
            let c_out = node.shape[0];
            let p = geom.col_cols();
            let r = geom.col_rows();
            with_grad(nodes, *w, |dw, _| gemm_nt(g, cols, dw, c_out, p, r));
            with_grad(nodes, *x, |dx, ns| {
                let mut dcols = vec![T::zero(); r * p];
                gemm_tn(&ns[w.0].value, g, &mut dcols, r, c_out, p);
                col2im(&dcols, geom, dx);
            });
            if let Some(b) = *b {
                with_grad(nodes, b, |db, _| {
                    for (d, row) in db.iter_mut().zip(g.chunks(p)) {
                        *d = *d + row.iter().copied().sum::<T>();
                    }
                });
            }
        }
        Op::CrossEntropy { logits, labels, probs } => {
            let n = labels.len();
            let c = probs.len() / n;
            let scale = g[0] / T::of(n as f64);
            with_grad(nodes, *logits, |dz, _| {
                for (i, &l) in labels.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == l { T::one() } else { T::zero() };
                        dz[i * c + j] = dz[i * c + j] + scale * (probs[i * c + j] - onehot);
                    }
                }
            });
        }
        &Op::Sum(a) => with_grad(nodes, a, |da, _| da.iter_mut().for_each(|d| *d = *d + g[0])),
        &Op::MeanRows(a) => {
            let n = node.shape[1];
            let m = nodes[a.0].shape[0];
            let inv = T::one() / T::of(m as f64);
            with_grad(nodes, a, |da, _| {
                for row in da.chunks_mut(n) {
                    for (d, &gv) in row.iter_mut().zip(g) {
                        *d = *d + gv * inv;
                    }
                }
            });
        }
        &Op::Transpose(a) => {
            let (n, m) = (node.shape[0], node.shape[1]);
            with_grad(nodes, a, |da, _| {
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = da[i * n + j] + g[j * m + i];
                    }
                }
            });
        }
        &Op::Reshape(a) => with_grad(nodes, a, |da, _| add_into(da, g)),
        &Op::SliceCols { x, start } => {
            let (m, len) = (node.shape[0], node.shape[1]);
            let n = nodes[x.0].shape[1];
            with_grad(nodes, x, |dx, _| {
                for r in 0..m {
                    add_into(&mut dx[r * n + start..r * n + start + len], &g[r * len..(r + 1) * len]);
                }
            });
        }
        Op::ConcatCols(parts) => {
            let (m, n) = (node.shape[0], node.shape[1]);
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p.0].shape[1];
                with_grad(nodes, p, |dp, _| {
                    for r in 0..m {
                        add_into(&mut dp[r * w..(r + 1) * w], &g[r * n + offset..r * n + offset + w]);
                    }
                });
                offset += w;
            }
        }
        Op::StackRows(rows) => {
            let d = node.shape[1];
            for (k, &rv) in rows.iter().enumerate() {
                with_grad(nodes, rv, |dr, _| add_into(dr, &g[k * d..(k + 1) * d]));
            }
        }
    }
}
