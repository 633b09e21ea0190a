//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation appends one
//! node holding its output value; [`Graph::backward`] walks the list in
//! reverse insertion order. Leaf gradients *accumulate* across backward
//! calls until [`Graph::zero_grad`] is called.
//!
//! ```
//! use cmi_core::autodiff::Graph;
//! use cmi_core::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(&Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad());
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

pub mod gradcheck;
pub(crate) mod kernels;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use kernels::{col2im, gemm, im2col, ConvGeom};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output size `ceil(in / stride)`; odd padding puts the extra pixel on
    /// the bottom/right.
    Same,
    Valid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
        /// `None` when the unfolded matrix is the input itself (1x1, stride 1).
        cols: Option<Vec<f64>>,
    },
    ConvTranspose2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
    },
    AddBias {
        x: Var,
        b: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    MulChannels {
        x: Var,
        gate: Var,
    },
    ConcatChannels(Var, Var),
    UpsampleNearest(Var),
    Crop(Var),
    Reshape(Var),
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Dense { .. } => "dense",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv2d_transpose",
            Op::AddBias { .. } => "add_bias",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Abs(_) => "abs",
            Op::Clamp { .. } => "clamp",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MulChannels { .. } => "mul_channels",
            Op::ConcatChannels(..) => "concat_channels",
            Op::UpsampleNearest(_) => "upsample_nearest",
            Op::Crop(_) => "crop",
            Op::Reshape(_) => "reshape",
            Op::Pick { .. } => "pick",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    /// Accumulated gradient; only populated for leaves.
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_str(s: &[usize]) -> String {
    format!("{s:?}")
}

fn axpy(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies a tensor onto the graph as a leaf; it tracks gradients iff the
    /// tensor has `requires_grad` set.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), t.requires_grad)
    }

    /// Copies a tensor onto the graph as a constant leaf.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), false)
    }

    pub fn input(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        let shape = t.shape().to_vec();
        Ok(self.push(Op::Leaf, shape, t.into_data(), false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Snapshot of a node's value as a standalone tensor (no gradient).
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Name of the first node (in insertion order) holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| n.value.iter().any(|v| !v.is_finite()))
            .map(|(i, n)| (i, n.op.name()))
    }

    // ------------------------------------------------------------------
    // Affine layers

    /// `y[i, j] = sum_k x[i, k] w[k, j] + b[j]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return Err(Error::dim(format!(
                "dense: x {} incompatible with w {} / b {}",
                shape_str(xs),
                shape_str(ws),
                shape_str(bs)
            )));
        }
        let (m, k, n) = (xs[0], xs[1], ws[1]);
        let mut y = Vec::with_capacity(m * n);
        for _ in 0..m {
            y.extend_from_slice(self.value(b));
        }
        gemm(m, k, n, self.value(x), false, self.value(w), false, 1.0, &mut y);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Op::Dense { x, w, b }, vec![m, n], y, rg))
    }

    /// Strided cross-correlation of NHWC `x` with a `[kh, kw, cin, cout]`
    /// kernel. No bias; see [`Graph::add_bias`].
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || xs[3] != ks[2] {
            return Err(Error::dim(format!(
                "conv2d: input {} incompatible with kernel {}",
                shape_str(&xs),
                shape_str(&ks)
            )));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d: stride must be >= 1"));
        }
        let (b, h, w, cin) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, cout) = (ks[0], ks[1], ks[3]);
        let (pt, pb, pl, pr) = match padding {
            Padding::Valid => (0, 0, 0, 0),
            Padding::Same => {
                let pad = |n: usize, k: usize| {
                    let out = n.div_ceil(stride);
                    let total = ((out - 1) * stride + k).saturating_sub(n);
                    (total / 2, total - total / 2)
                };
                let (t, bt) = pad(h, kh);
                let (l, r) = pad(w, kw);
                (t, bt, l, r)
            }
        };
        let (hp, wp) = (h + pt + pb, w + pl + pr);
        if kh > hp || kw > wp {
            return Err(Error::dim(format!(
                "conv2d: kernel {} larger than padded input {hp}x{wp} of {}",
                shape_str(&ks),
                shape_str(&xs)
            )));
        }
        let geom = ConvGeom {
            batch: b,
            in_h: h,
            in_w: w,
            in_c: cin,
            kh,
            kw,
            stride,
            pad_top: pt,
            pad_left: pl,
            out_h: (hp - kh) / stride + 1,
            out_w: (wp - kw) / stride + 1,
        };
        let identity_unfold = kh == 1 && kw == 1 && stride == 1 && pt == 0 && pl == 0;
        let cols = if identity_unfold {
            None
        } else {
            Some(im2col(self.value(x), &geom))
        };
        let mut y = vec![0.0; geom.rows() * cout];
        {
            let a = cols.as_deref().unwrap_or_else(|| self.value(x));
            gemm(
                geom.rows(),
                geom.patch_len(),
                cout,
                a,
                false,
                self.value(k),
                false,
                0.0,
                &mut y,
            );
        }
        let rg = self.rg(x) || self.rg(k);
        let shape = vec![b, geom.out_h, geom.out_w, cout];
        Ok(self.push(Op::Conv2d { x, k, geom, cols }, shape, y, rg))
    }

    /// Adjoint of a valid-padded [`Graph::conv2d`] with kernel `k` and the
    /// same stride. `x` has `cout` channels; the output has `cin` channels
    /// and spatial size `(n - 1) * stride + k`.
    pub fn conv2d_transpose(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || xs[3] != ks[3] {
            return Err(Error::dim(format!(
                "conv2d_transpose: input {} incompatible with kernel {}",
                shape_str(&xs),
                shape_str(&ks)
            )));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d_transpose: stride must be >= 1"));
        }
        let (b, h, w, cout) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, cin) = (ks[0], ks[1], ks[2]);
        let geom = ConvGeom {
            batch: b,
            in_h: (h - 1) * stride + kh,
            in_w: (w - 1) * stride + kw,
            in_c: cin,
            kh,
            kw,
            stride,
            pad_top: 0,
            pad_left: 0,
            out_h: h,
            out_w: w,
        };
        let mut cols = vec![0.0; geom.rows() * geom.patch_len()];
        gemm(
            geom.rows(),
            cout,
            geom.patch_len(),
            self.value(x),
            false,
            self.value(k),
            true,
            0.0,
            &mut cols,
        );
        let y = col2im(&cols, &geom);
        let rg = self.rg(x) || self.rg(k);
        let shape = vec![b, geom.in_h, geom.in_w, cin];
        Ok(self.push(Op::ConvTranspose2d { x, k, geom }, shape, y, rg))
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        if self.shape(b) != [c] {
            return Err(Error::dim(format!(
                "add_bias: bias {} does not match channels of {}",
                shape_str(self.shape(b)),
                shape_str(self.shape(x))
            )));
        }
        let bv = self.value(b);
        let y: Vec<f64> = self
            .value(x)
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(bv).map(|(a, b)| a + b))
            .collect();
        let rg = self.rg(x) || self.rg(b);
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::AddBias { x, b }, shape, y, rg))
    }

    // ------------------------------------------------------------------
    // Elementwise

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let y = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(op, shape, y, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        // not `max`: NaN must propagate so divergence is caught
        self.unary(x, Op::Relu(x), |v| if v > 0.0 || v.is_nan() { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp { x, lo, hi }, |v| v.clamp(lo, hi))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    /// Row-wise softmax over the last axis of a `[batch, classes]` tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!(
                "softmax expects [batch, classes], got {}",
                shape_str(&s)
            )));
        }
        let mut y = Vec::with_capacity(s[0] * s[1]);
        for row in self.value(x).chunks_exact(s[1]) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = y.len();
            y.extend(row.iter().map(|v| (v - m).exp()));
            let z: f64 = y[start..].iter().sum();
            y[start..].iter_mut().for_each(|v| *v /= z);
        }
        let rg = self.rg(x);
        Ok(self.push(Op::Softmax(x), s, y, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str) -> Result<()> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb && lb != 1 {
            return Err(Error::dim(format!(
                "{name}: shapes {} and {} neither match nor broadcast",
                shape_str(self.shape(a)),
                shape_str(self.shape(b))
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let bv = self.value(b);
        let y = if bv.len() == 1 {
            let s = bv[0];
            self.value(a).iter().map(|&v| f(v, s)).collect()
        } else {
            self.value(a).iter().zip(bv).map(|(&u, &v)| f(u, v)).collect()
        };
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(op, shape, y, rg)
    }

    /// Elementwise `a + b`; `b` may be a single-element tensor.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |u, v| u + v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |u, v| u - v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |u, v| u * v))
    }

    // ------------------------------------------------------------------
    // Reductions

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(Op::Sum(x), vec![1], vec![s], rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(x);
        self.push(Op::Mean(x), vec![1], vec![s], rg)
    }

    /// Picks `x[i, idx[i]]` from a `[batch, classes]` tensor.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != idx.len() {
            return Err(Error::dim(format!(
                "pick: {} indices for tensor {}",
                idx.len(),
                shape_str(&s)
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= s[1]) {
            return Err(Error::contract(format!("pick: index {bad} out of range 0..{}", s[1])));
        }
        let v = self.value(x);
        let y = idx.iter().enumerate().map(|(r, &c)| v[r * s[1] + c]).collect();
        let rg = self.rg(x);
        Ok(self.push(Op::Pick { x, idx: idx.to_vec() }, vec![s[0]], y, rg))
    }

    // ------------------------------------------------------------------
    // Layout

    /// Multiplies every channel of NHWC `x` by the single-channel map `gate`.
    pub fn mul_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (xs, gs) = (self.shape(x).to_vec(), self.shape(gate).to_vec());
        if xs.len() != 4 || gs.len() != 4 || xs[..3] != gs[..3] || gs[3] != 1 {
            return Err(Error::dim(format!(
                "mul_channels: gate {} does not broadcast over {}",
                shape_str(&gs),
                shape_str(&xs)
            )));
        }
        let c = xs[3];
        let gv = self.value(gate);
        let y = self
            .value(x)
            .chunks_exact(c)
            .zip(gv)
            .flat_map(|(px, &r)| px.iter().map(move |v| v * r))
            .collect();
        let rg = self.rg(x) || self.rg(gate);
        Ok(self.push(Op::MulChannels { x, gate }, xs, y, rg))
    }

    /// Concatenates two NHWC tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 4 || sb.len() != 4 || sa[..3] != sb[..3] {
            return Err(Error::dim(format!(
                "concat_channels: {} vs {}",
                shape_str(&sa),
                shape_str(&sb)
            )));
        }
        let (ca, cb) = (sa[3], sb[3]);
        let mut y = Vec::with_capacity(self.value(a).len() + self.value(b).len());
        for (pa, pb) in self.value(a).chunks_exact(ca).zip(self.value(b).chunks_exact(cb)) {
            y.extend_from_slice(pa);
            y.extend_from_slice(pb);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::ConcatChannels(a, b), vec![sa[0], sa[1], sa[2], ca + cb], y, rg))
    }

    fn nearest_index(o: usize, from: usize, to: usize) -> usize {
        o * from / to
    }

    /// Nearest-neighbour resize of NHWC `x` to `out_h x out_w`.
    pub fn upsample_nearest(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || out_h == 0 || out_w == 0 {
            return Err(Error::dim(format!("upsample_nearest: bad input {}", shape_str(&s))));
        }
        let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
        let v = self.value(x);
        let mut y = Vec::with_capacity(b * out_h * out_w * c);
        for bi in 0..b {
            for oy in 0..out_h {
                let sy = Self::nearest_index(oy, h, out_h);
                for ox in 0..out_w {
                    let sx = Self::nearest_index(ox, w, out_w);
                    let o = ((bi * h + sy) * w + sx) * c;
                    y.extend_from_slice(&v[o..o + c]);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Op::UpsampleNearest(x), vec![b, out_h, out_w, c], y, rg))
    }

    /// Keeps the top-left `h x w` window of NHWC `x`.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || h > s[1] || w > s[2] || h == 0 || w == 0 {
            return Err(Error::dim(format!("crop to {h}x{w} from {}", shape_str(&s))));
        }
        let (b, ih, iw, c) = (s[0], s[1], s[2], s[3]);
        let v = self.value(x);
        let mut y = Vec::with_capacity(b * h * w * c);
        for bi in 0..b {
            for yy in 0..h {
                let o = ((bi * ih + yy) * iw) * c;
                y.extend_from_slice(&v[o..o + w * c]);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Op::Crop(x), vec![b, h, w, c], y, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(Error::dim(format!(
                "reshape {} to {}",
                shape_str(self.shape(x)),
                shape_str(shape)
            )));
        }
        let y = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Op::Reshape(x), shape.to_vec(), y, rg))
    }

    // ------------------------------------------------------------------
    // Backward

    /// Propagates d(loss)/d(node) to every gradient-tracking leaf reachable
    /// from the scalar `loss`, adding into the leaves' gradient buffers.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {}",
                shape_str(self.shape(loss))
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match node.grad.as_mut() {
                    Some(acc) => axpy(acc, &dy),
                    None => node.grad = Some(dy),
                }
                continue;
            }
            self.backprop_node(i, &dy, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut send = |v: Var, g: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match grads[v.0].as_mut() {
                Some(acc) => axpy(acc, &g),
                None => grads[v.0] = Some(g),
            }
        };
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Dense { x, w, b } => {
                let (m, k) = (self.shape(*x)[0], self.shape(*x)[1]);
                let n = self.shape(*w)[1];
                if self.rg(*x) {
                    let mut dx = vec![0.0; m * k];
                    gemm(m, n, k, dy, false, self.value(*w), true, 0.0, &mut dx);
                    send(*x, dx);
                }
                if self.rg(*w) {
                    let mut dw = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*x), true, dy, false, 0.0, &mut dw);
                    send(*w, dw);
                }
                if self.rg(*b) {
                    send(*b, column_sums(dy, n));
                }
            }
            Op::Conv2d { x, k, geom, cols } => {
                let cout = self.shape(*k)[3];
                let (rows, pl) = (geom.rows(), geom.patch_len());
                if self.rg(*k) {
                    let a = cols.as_deref().unwrap_or_else(|| self.value(*x));
                    let mut dk = vec![0.0; pl * cout];
                    gemm(pl, rows, cout, a, true, dy, false, 0.0, &mut dk);
                    send(*k, dk);
                }
                if self.rg(*x) {
                    let mut dcols = vec![0.0; rows * pl];
                    gemm(rows, cout, pl, dy, false, self.value(*k), true, 0.0, &mut dcols);
                    let dx = if cols.is_none() { dcols } else { col2im(&dcols, geom) };
                    send(*x, dx);
                }
            }
            Op::ConvTranspose2d { x, k, geom } => {
                let cout = self.shape(*k)[3];
                let (rows, pl) = (geom.rows(), geom.patch_len());
                let dcols = im2col(dy, geom);
                if self.rg(*x) {
                    let mut dx = vec![0.0; rows * cout];
                    gemm(rows, pl, cout, &dcols, false, self.value(*k), false, 0.0, &mut dx);
                    send(*x, dx);
                }
                if self.rg(*k) {
                    let mut dk = vec![0.0; pl * cout];
                    gemm(pl, rows, cout, &dcols, true, self.value(*x), false, 0.0, &mut dk);
                    send(*k, dk);
                }
            }
            Op::AddBias { x, b } => {
                if self.rg(*b) {
                    send(*b, column_sums(dy, self.shape(*b)[0]));
                }
                send(*x, dy.to_vec());
            }
            Op::Relu(x) => {
                send(
                    *x,
                    dy.iter().zip(y).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            Op::Sigmoid(x) => {
                send(*x, dy.iter().zip(y).map(|(g, &s)| g * s * (1.0 - s)).collect());
            }
            Op::Softmax(x) => {
                let c = node.shape[1];
                let mut dx = Vec::with_capacity(y.len());
                for (gr, yr) in dy.chunks_exact(c).zip(y.chunks_exact(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    dx.extend(gr.iter().zip(yr).map(|(g, s)| s * (g - dot)));
                }
                send(*x, dx);
            }
            Op::Exp(x) => send(*x, dy.iter().zip(y).map(|(g, e)| g * e).collect()),
            Op::Log(x) => {
                let xv = self.value(*x);
                send(*x, dy.iter().zip(xv).map(|(g, v)| g / v).collect());
            }
            Op::Abs(x) => {
                let xv = self.value(*x);
                send(
                    *x,
                    dy.iter()
                        .zip(xv)
                        .map(|(g, &v)| {
                            if v > 0.0 {
                                *g
                            } else if v < 0.0 {
                                -g
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                );
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                send(
                    *x,
                    dy.iter()
                        .zip(xv)
                        .map(|(g, v)| if v >= lo && v <= hi { *g } else { 0.0 })
                        .collect(),
                );
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.rg(*b) {
                    let db = if self.value(*b).len() == 1 {
                        vec![sign * dy.iter().sum::<f64>()]
                    } else {
                        dy.iter().map(|g| sign * g).collect()
                    };
                    send(*b, db);
                }
                send(*a, dy.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*b) {
                    let db = if bv.len() == 1 {
                        vec![dy.iter().zip(av).map(|(g, u)| g * u).sum()]
                    } else {
                        dy.iter().zip(av).map(|(g, u)| g * u).collect()
                    };
                    send(*b, db);
                }
                if self.rg(*a) {
                    let da = if bv.len() == 1 {
                        dy.iter().map(|g| g * bv[0]).collect()
                    } else {
                        dy.iter().zip(bv).map(|(g, v)| g * v).collect()
                    };
                    send(*a, da);
                }
            }
            Op::Scale(x, c) => send(*x, dy.iter().map(|g| g * c).collect()),
            Op::AddScalar(x) | Op::Reshape(x) => send(*x, dy.to_vec()),
            Op::Sum(x) => send(*x, vec![dy[0]; self.value(*x).len()]),
            Op::Mean(x) => {
                let n = self.value(*x).len();
                send(*x, vec![dy[0] / n as f64; n]);
            }
            Op::Pick { x, idx } => {
                let c = self.shape(*x)[1];
                let mut dx = vec![0.0; self.value(*x).len()];
                for (r, (&col, g)) in idx.iter().zip(dy).enumerate() {
                    dx[r * c + col] += g;
                }
                send(*x, dx);
            }
            Op::MulChannels { x, gate } => {
                let c = self.shape(*x)[3];
                let (xv, gv) = (self.value(*x), self.value(*gate));
                if self.rg(*gate) {
                    let dg = dy
                        .chunks_exact(c)
                        .zip(xv.chunks_exact(c))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    send(*gate, dg);
                }
                if self.rg(*x) {
                    let dx = dy
                        .chunks_exact(c)
                        .zip(gv)
                        .flat_map(|(gr, &r)| gr.iter().map(move |g| g * r))
                        .collect();
                    send(*x, dx);
                }
            }
            Op::ConcatChannels(a, b) => {
                let (ca, cb) = (self.shape(*a)[3], self.shape(*b)[3]);
                let mut da = Vec::with_capacity(self.value(*a).len());
                let mut db = Vec::with_capacity(self.value(*b).len());
                for px in dy.chunks_exact(ca + cb) {
                    da.extend_from_slice(&px[..ca]);
                    db.extend_from_slice(&px[ca..]);
                }
                send(*a, da);
                send(*b, db);
            }
            Op::UpsampleNearest(x) => {
                let s = self.shape(*x);
                let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
                let (oh, ow) = (node.shape[1], node.shape[2]);
                let mut dx = vec![0.0; b * h * w * c];
                for bi in 0..b {
                    for oy in 0..oh {
                        let sy = Self::nearest_index(oy, h, oh);
                        for ox in 0..ow {
                            let sx = Self::nearest_index(ox, w, ow);
                            let src = ((bi * oh + oy) * ow + ox) * c;
                            let dst = ((bi * h + sy) * w + sx) * c;
                            axpy(&mut dx[dst..dst + c], &dy[src..src + c]);
                        }
                    }
                }
                send(*x, dx);
            }
            Op::Crop(x) => {
                let s = self.shape(*x);
                let (b, ih, iw, c) = (s[0], s[1], s[2], s[3]);
                let (h, w) = (node.shape[1], node.shape[2]);
                let mut dx = vec![0.0; b * ih * iw * c];
                for bi in 0..b {
                    for yy in 0..h {
                        let src = ((bi * h + yy) * w) * c;
                        let dst = ((bi * ih + yy) * iw) * c;
                        dx[dst..dst + w * c].copy_from_slice(&dy[src..src + w * c]);
                    }
                }
                send(*x, dx);
            }
        }
    }
}

fn column_sums(m: &[f64], cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for row in m.chunks_exact(cols) {
        axpy(&mut s, row);
    }
    s
}
