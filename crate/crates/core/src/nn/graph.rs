//! Tape-based reverse-mode differentiation over the small op set the networks
//! need.
//!
//! Every op evaluates eagerly when it is recorded. `backward` walks the tape
//! in reverse, skipping nodes that no trainable leaf feeds into.

use super::tensor::{gemm, MatRef, Real, Tensor};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Relu,
    Tanh,
    Exp,
    Log,
    Square,
    /// `ln(1 - tanh(x)^2)`, evaluated stably.
    LogOneMinusTanhSq,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    b: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn n(&self) -> usize {
        self.b * self.oh * self.ow
    }

    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }
}

enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<T> },
    FlattenCbhw { x: Var },
    Unary(Var, Unary),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Clamp(Var, T, T),
    Concat(Vec<Var>),
    SliceCols(Var, usize, usize),
    SumCols(Var),
    Mean(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar with respect to every node that needed them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant: no gradient flows into it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Copies `v` into a fresh constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.input(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `x [B, in] * w^T + b`, with `w [out, in]` and `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[1] || bs != [ws[0]] {
            return Err(NnError::Shape(format!(
                "linear: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let (batch, inp, out) = (xs[0], xs[1], ws[0]);
        let mut y = Vec::with_capacity(batch * out);
        let bias = self.value(b).data();
        for _ in 0..batch {
            y.extend_from_slice(bias);
        }
        gemm(
            MatRef::new(self.value(x).data(), batch, inp),
            MatRef::new(self.value(w).data(), out, inp).t(),
            T::one(),
            &mut y,
        );
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(Tensor::from_vec(&[batch, out], y), Op::Linear { x, w, b }, ng))
    }

    /// Convolution without padding on a `[C, B, H, W]` input, producing
    /// `[O, B, H', W']`. Weights are `[O, C, k, k]`, bias `[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var, NnError> {
        let (xs, ws) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || stride == 0 {
            return Err(NnError::Shape(format!("conv2d: x {xs:?}, w {ws:?}")));
        }
        if self.value(b).shape() != [ws[0]] {
            return Err(NnError::Shape("conv2d: bias length".into()));
        }
        let (c, bt, h, wd, o, k) = (xs[0], xs[1], xs[2], xs[3], ws[0], ws[2]);
        if h < k || wd < k {
            return Err(NnError::Shape(format!("conv2d: {h}x{wd} input smaller than kernel {k}")));
        }
        let geom = ConvGeom {
            c,
            b: bt,
            h,
            w: wd,
            o,
            k,
            stride,
            oh: (h - k) / stride + 1,
            ow: (wd - k) / stride + 1,
        };
        let n = geom.n();
        let cols = im2col(self.value(x).data(), &geom);
        let bias = self.value(b).data();
        let mut y = vec![T::zero(); o * n];
        for (row, &bv) in y.chunks_exact_mut(n).zip(bias) {
            row.fill(bv);
        }
        gemm(
            MatRef::new(self.value(w).data(), o, geom.ckk()),
            MatRef::new(&cols, geom.ckk(), n),
            T::one(),
            &mut y,
        );
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(
            Tensor::from_vec(&[o, bt, geom.oh, geom.ow], y),
            Op::Conv { x, w, b, geom, cols },
            ng,
        ))
    }

    /// `[C, B, H, W]` to `[B, C*H*W]`.
    pub fn flatten_cbhw(&mut self, x: Var) -> Result<Var, NnError> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(NnError::Shape(format!("flatten: {s:?}")));
        }
        let (c, b, hw) = (s[0], s[1], s[2] * s[3]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for ci in 0..c {
            for bi in 0..b {
                let from = (ci * b + bi) * hw;
                let to = bi * c * hw + ci * hw;
                out[to..to + hw].copy_from_slice(&src[from..from + hw]);
            }
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::from_vec(&[b, c * hw], out), Op::FlattenCbhw { x }, ng))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let value = self.value(x).map(|v| match kind {
            Unary::Relu => v.max(T::zero()),
            Unary::Tanh => v.tanh(),
            Unary::Exp => v.exp(),
            Unary::Log => v.ln(),
            Unary::Square => v * v,
            Unary::LogOneMinusTanhSq => log_one_minus_tanh_sq(v),
        });
        let ng = self.ng(x);
        self.push(value, Op::Unary(x, kind), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Log)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    /// `ln(1 - tanh(x)^2)`, the log-Jacobian of tanh squashing.
    pub fn log_one_minus_tanh_sq(&mut self, x: Var) -> Var {
        self.unary(x, Unary::LogOneMinusTanhSq)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NnError::Shape(format!(
                "{name}: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_vec(va.shape(), data);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Element-wise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "min", |x, y| if x <= y { x } else { y }, Op::Min(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        let ng = self.ng(x);
        self.push(value, Op::Scale(x, c), ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        let ng = self.ng(x);
        self.push(value, Op::AddScalar(x), ng)
    }

    /// Hard clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        let ng = self.ng(x);
        self.push(value, Op::Clamp(x, lo, hi), ng)
    }

    /// Concatenates 2-D tensors along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(NnError::Shape(format!("concat: part {s:?}, rows {rows}")));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::from_vec(&[rows, total], out), Op::Concat(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NnError> {
        let s = self.value(x).shape();
        if s.len() != 2 || start >= end || end > s[1] {
            return Err(NnError::Shape(format!("slice {start}..{end} of {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&self.value(x).data()[r * cols + start..r * cols + end]);
        }
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::from_vec(&[rows, end - start], out),
            Op::SliceCols(x, start, end),
            ng,
        ))
    }

    /// `[B, n]` to `[B, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let out = t.data().chunks_exact(cols.max(1)).map(|r| r.iter().copied().sum()).collect();
        let ng = self.ng(x);
        self.push(Tensor::from_vec(&[rows, 1], out), Op::SumCols(x), ng)
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = T::c(t.len() as f64);
        let s: T = t.data().iter().copied().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s / n), Op::Mean(x), ng)
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NnError> {
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(NnError::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(shape, vec![T::one()]));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(t.data()) {
                        *e += *d;
                    }
                }
                slot @ None => *slot = Some(t),
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (batch, inp) = (val(*x).rows(), val(*x).cols());
                let out = val(*w).rows();
                if self.ng(*x) {
                    let mut dx = vec![T::zero(); batch * inp];
                    gemm(
                        MatRef::new(gd, batch, out),
                        MatRef::new(val(*w).data(), out, inp),
                        T::zero(),
                        &mut dx,
                    );
                    acc(*x, Tensor::from_vec(&[batch, inp], dx));
                }
                if self.ng(*w) {
                    let mut dw = vec![T::zero(); out * inp];
                    gemm(
                        MatRef::new(gd, batch, out).t(),
                        MatRef::new(val(*x).data(), batch, inp),
                        T::zero(),
                        &mut dw,
                    );
                    acc(*w, Tensor::from_vec(&[out, inp], dw));
                }
                if self.ng(*b) {
                    let mut db = vec![T::zero(); out];
                    for row in gd.chunks_exact(out) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(*b, Tensor::from_vec(&[out], db));
                }
            }
            Op::Conv { x, w, b, geom, cols } => {
                let (n, ckk, o) = (geom.n(), geom.ckk(), geom.o);
                if self.ng(*w) {
                    let mut dw = vec![T::zero(); o * ckk];
                    gemm(
                        MatRef::new(gd, o, n),
                        MatRef::new(cols, ckk, n).t(),
                        T::zero(),
                        &mut dw,
                    );
                    acc(*w, Tensor::from_vec(val(*w).shape(), dw));
                }
                if self.ng(*b) {
                    let db = gd.chunks_exact(n).map(|r| r.iter().copied().sum()).collect();
                    acc(*b, Tensor::from_vec(&[o], db));
                }
                if self.ng(*x) {
                    let mut dcols = vec![T::zero(); ckk * n];
                    gemm(
                        MatRef::new(val(*w).data(), o, ckk).t(),
                        MatRef::new(gd, o, n),
                        T::zero(),
                        &mut dcols,
                    );
                    acc(*x, Tensor::from_vec(val(*x).shape(), col2im(&dcols, geom)));
                }
            }
            Op::FlattenCbhw { x } => {
                let s = val(*x).shape();
                let (c, b, hw) = (s[0], s[1], s[2] * s[3]);
                let mut dx = vec![T::zero(); gd.len()];
                for ci in 0..c {
                    for bi in 0..b {
                        let to = (ci * b + bi) * hw;
                        let from = bi * c * hw + ci * hw;
                        dx[to..to + hw].copy_from_slice(&gd[from..from + hw]);
                    }
                }
                acc(*x, Tensor::from_vec(s, dx));
            }
            Op::Unary(x, kind) => {
                let xv = val(*x).data();
                let yv = node.value.data();
                let two = T::c(2.0);
                let dx = gd
                    .iter()
                    .zip(xv.iter().zip(yv))
                    .map(|(&gi, (&xi, &yi))| {
                        gi * match kind {
                            Unary::Relu => {
                                if xi > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Unary::Tanh => T::one() - yi * yi,
                            Unary::Exp => yi,
                            Unary::Log => T::one() / xi,
                            Unary::Square => two * xi,
                            Unary::LogOneMinusTanhSq => -two * xi.tanh(),
                        }
                    })
                    .collect();
                acc(*x, Tensor::from_vec(val(*x).shape(), dx));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let da = gd.iter().zip(bv).map(|(&gi, &bi)| gi * bi).collect();
                let db = gd.iter().zip(av).map(|(&gi, &ai)| gi * ai).collect();
                acc(*a, Tensor::from_vec(g.shape(), da));
                acc(*b, Tensor::from_vec(g.shape(), db));
            }
            Op::Min(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let pick_a: Vec<bool> = av.iter().zip(bv).map(|(x, y)| x <= y).collect();
                let da = gd
                    .iter()
                    .zip(&pick_a)
                    .map(|(&gi, &p)| if p { gi } else { T::zero() })
                    .collect();
                let db = gd
                    .iter()
                    .zip(&pick_a)
                    .map(|(&gi, &p)| if p { T::zero() } else { gi })
                    .collect();
                acc(*a, Tensor::from_vec(g.shape(), da));
                acc(*b, Tensor::from_vec(g.shape(), db));
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * *c)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::Clamp(x, lo, hi) => {
                let dx = gd
                    .iter()
                    .zip(val(*x).data())
                    .map(|(&gi, &xi)| if xi >= *lo && xi <= *hi { gi } else { T::zero() })
                    .collect();
                acc(*x, Tensor::from_vec(g.shape(), dx));
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    acc(p, Tensor::from_vec(&[rows, w], dp));
                    offset += w;
                }
            }
            Op::SliceCols(x, start, end) => {
                let (rows, cols) = (val(*x).rows(), val(*x).cols());
                let w = end - start;
                let mut dx = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + end].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                acc(*x, Tensor::from_vec(&[rows, cols], dx));
            }
            Op::SumCols(x) => {
                let (rows, cols) = (val(*x).rows(), val(*x).cols());
                let mut dx = Vec::with_capacity(rows * cols);
                for &gi in gd {
                    dx.extend(std::iter::repeat_n(gi, cols));
                }
                acc(*x, Tensor::from_vec(val(*x).shape(), dx));
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let gi = gd[0] / T::c(n as f64);
                acc(*x, Tensor::from_vec(val(*x).shape(), vec![gi; n]));
            }
        }
    }
}

fn log_one_minus_tanh_sq<T: Real>(x: T) -> T {
    // 1 - tanh^2 = sech^2 = 4 / (e^x + e^-x)^2 ; log = 2 (ln 2 - |x| - ln(1 + e^{-2|x|}))
    let ax = x.abs();
    T::c(2.0) * (T::c(std::f64::consts::LN_2) - ax - (-T::c(2.0) * ax).exp().ln_1p())
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let n = g.n();
    let mut cols = vec![T::zero(); g.ckk() * n];
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let r = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[r * n..(r + 1) * n];
                let mut idx = 0;
                for b in 0..g.b {
                    let plane = &x[(c * g.b + b) * g.h * g.w..][..g.h * g.w];
                    for oi in 0..g.oh {
                        let row = &plane[(oi * g.stride + ki) * g.w + kj..];
                        for oj in 0..g.ow {
                            dst[idx] = row[oj * g.stride];
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let n = g.n();
    let mut x = vec![T::zero(); g.c * g.b * g.h * g.w];
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let r = (c * g.k + ki) * g.k + kj;
                let src = &cols[r * n..(r + 1) * n];
                let mut idx = 0;
                for b in 0..g.b {
                    let base = (c * g.b + b) * g.h * g.w;
                    for oi in 0..g.oh {
                        let row = base + (oi * g.stride + ki) * g.w + kj;
                        for oj in 0..g.ow {
                            x[row + oj * g.stride] += src[idx];
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
    x
}
