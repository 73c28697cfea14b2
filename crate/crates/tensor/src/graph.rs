//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order, so a reverse sweep over the node list is a valid topological order
//! for backpropagation.

use std::collections::BTreeMap;

use crate::error::{shape_err, Result, TensorError};
use crate::kernels::{gemm, ConvGeom, Padding};
use crate::params::{GradReport, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-channel statistics of one training-mode batch-norm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance estimate.
    pub var: Vec<T>,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        out_c: usize,
    },
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Square(Var),
    Abs(Var),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    Concat {
        a: Var,
        b: Var,
        outer: usize,
        inner_a: usize,
        inner_b: usize,
    },
    GlobalAvgPool(Var),
    SliceBatch {
        x: Var,
        start: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A recording of one forward computation.
#[derive(Debug)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<String, Var>,
    frozen: Vec<String>,
    pending_stats: Vec<(String, BatchStats<T>)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            frozen: Vec::new(),
            pending_stats: Vec::new(),
        }
    }

    /// Parameters whose names start with `prefix` enter this graph as constants.
    pub fn freeze(&mut self, prefix: impl Into<String>) {
        self.frozen.push(prefix.into());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// A constant input; no gradient is propagated into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf that accumulates gradient, retrievable with [`Graph::backward_vars`].
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Bind a named parameter. Repeated binds of the same name share one leaf,
    /// so weight-shared branches accumulate into a single gradient.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| TensorError::State(format!("parameter {name:?} not in store")))?
            .clone();
        let trainable = !self.frozen.iter().any(|p| name.starts_with(p.as_str()));
        let v = self.push(t, Op::Leaf, trainable);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub(crate) fn push_batch_stats(&mut self, key: String, stats: BatchStats<T>) {
        self.pending_stats.push((key, stats));
    }

    /// Batch statistics recorded by training-mode batch norms, in call order.
    pub fn take_batch_stats(&mut self) -> Vec<(String, BatchStats<T>)> {
        std::mem::take(&mut self.pending_stats)
    }

    // ---------------------------------------------------------------- ops

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        const OP: &str = "conv2d";
        if stride < 1 {
            return Err(TensorError::Argument {
                op: OP,
                detail: "stride must be >= 1".into(),
            });
        }
        let (xd, wd) = (self.value(x).dims(), self.value(w).dims());
        if xd.len() != 4 || wd.len() != 4 {
            return shape_err(OP, format!("need rank-4 input and kernel, got {xd:?} / {wd:?}"));
        }
        let (n, c, h, wi) = (xd[0], xd[1], xd[2], xd[3]);
        let (oc, ic, kh, kw) = (wd[0], wd[1], wd[2], wd[3]);
        if ic != c {
            return shape_err(OP, format!("kernel expects {ic} channels, input has {c}"));
        }
        if let Some(b) = b {
            if self.value(b).dims() != [oc] {
                return shape_err(OP, format!("bias dims {:?} != [{oc}]", self.value(b).dims()));
            }
        }
        let geom = ConvGeom::new(c, h, wi, kh, kw, stride, padding)
            .ok_or_else(|| TensorError::Shape {
                op: OP,
                detail: format!("{h}x{wi} input smaller than {kh}x{kw} kernel"),
            })?;
        let ohw = geom.out_hw();
        let mut out = vec![T::zero(); n * oc * ohw];
        let mut cols = vec![T::zero(); geom.col_rows() * ohw];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let in_sz = c * h * wi;
            for i in 0..n {
                geom.im2col(&xv[i * in_sz..(i + 1) * in_sz], &mut cols);
                let dst = &mut out[i * oc * ohw..(i + 1) * oc * ohw];
                gemm(oc, geom.col_rows(), ohw, wv, false, &cols, false, dst, false);
                if let Some(b) = b {
                    let bv = self.value(b).data();
                    for (o, row) in dst.chunks_mut(ohw).enumerate() {
                        row.iter_mut().for_each(|v| *v = *v + bv[o]);
                    }
                }
            }
        }
        let t = Tensor::new(vec![n, oc, geom.out_h, geom.out_w], out)?.ensure_finite(OP)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            t,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_c: oc,
            },
            rg,
        ))
    }

    /// `x · wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        const OP: &str = "dense";
        let (xd, wd) = (self.value(x).dims(), self.value(w).dims());
        if xd.len() != 2 || wd.len() != 2 || xd[1] != wd[1] {
            return shape_err(OP, format!("input {xd:?} incompatible with weight {wd:?}"));
        }
        let (n, k, m) = (xd[0], xd[1], wd[0]);
        if let Some(b) = b {
            if self.value(b).dims() != [m] {
                return shape_err(OP, format!("bias dims {:?} != [{m}]", self.value(b).dims()));
            }
        }
        let mut out = vec![T::zero(); n * m];
        gemm(n, k, m, self.value(x).data(), false, self.value(w).data(), true, &mut out, false);
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(m) {
                row.iter_mut().zip(bv).for_each(|(v, &bb)| *v = *v + bb);
            }
        }
        let t = Tensor::new(vec![n, m], out)?.ensure_finite(OP)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(t, Op::Dense { x, w, b }, rg))
    }

    /// Elementwise `max(x, slope·x)`; the derivative at exactly 0 is `slope`.
    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        if !(slope >= T::zero() && slope < T::one()) {
            return Err(TensorError::Argument {
                op: "leaky_relu",
                detail: format!("slope {slope} outside [0, 1)"),
            });
        }
        let t = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { slope * v })
            .ensure_finite("leaky_relu")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::LeakyRelu { x, slope }, rg))
    }

    fn channel_layout(&self, op: &'static str, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let xd = self.value(x).dims();
        if xd.len() < 2 {
            return shape_err(op, format!("need at least [n, c], got {xd:?}"));
        }
        let (n, c) = (xd[0], xd[1]);
        let spatial: usize = xd[2..].iter().product();
        if self.value(gamma).dims() != [c] || self.value(beta).dims() != [c] {
            return shape_err(op, format!("gamma/beta must have dims [{c}]"));
        }
        Ok((n, c, spatial))
    }

    /// Training-mode batch norm: normalizes each channel over batch × spatial.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        const OP: &str = "batch_norm";
        let (n, c, sp) = self.channel_layout(OP, x, gamma, beta)?;
        let count = n * sp;
        let xv = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); c];
        let mut stats = BatchStats {
            mean: vec![T::zero(); c],
            var: vec![T::zero(); c],
        };
        let cnt = T::from_usize(count).unwrap();
        for ch in 0..c {
            let lanes = (0..n).map(|i| (i * c + ch) * sp);
            let mut s = T::zero();
            for off in lanes.clone() {
                s = s + xv[off..off + sp].iter().copied().sum::<T>();
            }
            let mean = s / cnt;
            let mut ss = T::zero();
            for off in lanes.clone() {
                ss = ss + xv[off..off + sp].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            }
            let var = ss / cnt;
            let is = T::one() / (var + eps).sqrt();
            for off in lanes {
                for j in off..off + sp {
                    let xh = (xv[j] - mean) * is;
                    xhat[j] = xh;
                    out[j] = g[ch] * xh + bt[ch];
                }
            }
            inv_std[ch] = is;
            stats.mean[ch] = mean;
            stats.var[ch] = if count > 1 {
                ss / T::from_usize(count - 1).unwrap()
            } else {
                var
            };
        }
        let dims = self.value(x).dims().to_vec();
        let t = Tensor::new(dims, out)?.ensure_finite(OP)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let v = self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: true,
            },
            rg,
        );
        Ok((v, stats))
    }

    /// Inference-mode batch norm using fixed running statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<Var> {
        const OP: &str = "batch_norm";
        let (n, c, sp) = self.channel_layout(OP, x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return shape_err(OP, format!("running statistics must have {c} channels"));
        }
        let xv = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * sp;
                for j in off..off + sp {
                    let xh = (xv[j] - running_mean[ch]) * inv_std[ch];
                    xhat[j] = xh;
                    out[j] = g[ch] * xh + bt[ch];
                }
            }
        }
        let dims = self.value(x).dims().to_vec();
        let t = Tensor::new(dims, out)?.ensure_finite(OP)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: false,
            },
            rg,
        ))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, mk: fn(Var, Var) -> Op<T>) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims() != bv.dims() {
            return shape_err(op, format!("{:?} vs {:?}", av.dims(), bv.dims()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.dims().to_vec(), data)?.ensure_finite(op)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, mk(a, b), rg))
    }

    /// Elementwise sum of two identically shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let t = self.value(x).map(|v| v * c).ensure_finite("scale")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Scale(x, c), rg))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        let t = self.value(x).map(|v| v + c).ensure_finite("add_scalar")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::AddScalar(x), rg))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v * v).ensure_finite("square")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Square(x), rg))
    }

    /// Elementwise `|x|`; subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v.abs()).ensure_finite("abs")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Abs(x), rg))
    }

    /// Elementwise `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(softplus).ensure_finite("softplus")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softplus(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(x).sum()).ensure_finite("sum")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Sum(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::scalar(v.sum() / T::from_usize(v.numel()).unwrap()).ensure_finite("mean")?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Mean(x), rg))
    }

    /// Mean squared difference, `mean((a - b)²)`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        self.mean(sq)
    }

    /// Concatenate along dimension 1; all other extents must agree.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        const OP: &str = "concat_channels";
        let (ad, bd) = (self.value(a).dims(), self.value(b).dims());
        if ad.len() < 2 || ad.len() != bd.len() || ad[0] != bd[0] || ad[2..] != bd[2..] {
            return shape_err(OP, format!("{ad:?} vs {bd:?}"));
        }
        let rest: usize = ad[2..].iter().product();
        let (outer, inner_a, inner_b) = (ad[0], ad[1] * rest, bd[1] * rest);
        let mut dims = ad.to_vec();
        dims[1] = ad[1] + bd[1];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(av.len() + bv.len());
        for i in 0..outer {
            out.extend_from_slice(&av[i * inner_a..(i + 1) * inner_a]);
            out.extend_from_slice(&bv[i * inner_b..(i + 1) * inner_b]);
        }
        let t = Tensor::new(dims, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            t,
            Op::Concat {
                a,
                b,
                outer,
                inner_a,
                inner_b,
            },
            rg,
        ))
    }

    /// Stack along dimension 0; all other extents must agree.
    pub fn concat_batch(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.value(a).dims(), self.value(b).dims());
        if ad.is_empty() || ad.len() != bd.len() || ad[1..] != bd[1..] {
            return shape_err("concat_batch", format!("{ad:?} vs {bd:?}"));
        }
        let mut dims = ad.to_vec();
        dims[0] = ad[0] + bd[0];
        let (inner_a, inner_b) = (self.value(a).numel(), self.value(b).numel());
        let mut out = Vec::with_capacity(inner_a + inner_b);
        out.extend_from_slice(self.value(a).data());
        out.extend_from_slice(self.value(b).data());
        let t = Tensor::new(dims, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            t,
            Op::Concat {
                a,
                b,
                outer: 1,
                inner_a,
                inner_b,
            },
            rg,
        ))
    }

    /// Spatial mean per channel: `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xd = self.value(x).dims();
        if xd.len() != 4 {
            return shape_err("global_avg_pool", format!("need rank 4, got {xd:?}"));
        }
        let (n, c, sp) = (xd[0], xd[1], xd[2] * xd[3]);
        let inv = T::one() / T::from_usize(sp).unwrap();
        let data = self
            .value(x)
            .data()
            .chunks(sp)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let t = Tensor::new(vec![n, c], data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::GlobalAvgPool(x), rg))
    }

    /// Rows `start .. start + len` of the leading dimension.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xd = self.value(x).dims();
        if len == 0 || start + len > xd[0] {
            return shape_err("slice_batch", format!("rows {start}..{} of {xd:?}", start + len));
        }
        let row: usize = xd[1..].iter().product();
        let mut dims = xd.to_vec();
        dims[0] = len;
        let data = self.value(x).data()[start * row..(start + len) * row].to_vec();
        let t = Tensor::new(dims, data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::SliceBatch { x, start }, rg))
    }

    // ----------------------------------------------------------- backward

    /// Gradients of a scalar `loss` with respect to arbitrary vars.
    /// Vars the loss does not depend on get zero gradients.
    pub fn backward_vars(&self, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor<T>>> {
        let grads = self.sweep(loss)?;
        Ok(wrt
            .iter()
            .map(|&v| {
                grads[v.0]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(self.value(v).dims()))
            })
            .collect())
    }

    /// Gradients of a scalar `loss` for every trainable entry of `store`.
    pub fn backward(&self, loss: Var, store: &ParamStore<T>) -> Result<GradReport<T>> {
        let grads = self.sweep(loss)?;
        let mut out = BTreeMap::new();
        for (name, t) in store.trainable() {
            let g = self
                .params
                .get(name)
                .and_then(|v| grads[v.0].clone())
                .unwrap_or_else(|| Tensor::zeros(t.dims()));
            out.insert(name.to_string(), g);
        }
        Ok(GradReport {
            loss: self.value(loss).data()[0].as_f64(),
            grads: out,
        })
    }

    fn sweep(&self, loss: Var) -> Result<Vec<Option<Tensor<T>>>> {
        if !self.value(loss).is_scalar() {
            return Err(TensorError::Argument {
                op: "backward",
                detail: format!("loss must be scalar, got dims {:?}", self.value(loss).dims()),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.value(loss).dims()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, &gout, &mut grads)?;
        }
        for g in grads.iter().flatten() {
            if !g.all_finite() {
                return Err(TensorError::NonFinite { op: "backward" });
            }
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node<T>, gout: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let go = gout.data();
        let like = |v: Var, data: Vec<T>| Tensor::new(self.value(v).dims().to_vec(), data);
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, out_c } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let n = xv.dims()[0];
                let (oc, ohw, rows) = (*out_c, geom.out_hw(), geom.col_rows());
                let in_sz = geom.in_c * geom.in_h * geom.in_w;
                let mut cols = vec![T::zero(); rows * ohw];
                let mut dcols = vec![T::zero(); rows * ohw];
                let mut dx = self.rg(*x).then(|| vec![T::zero(); xv.numel()]);
                let mut dw = self.rg(*w).then(|| vec![T::zero(); wv.numel()]);
                for i in 0..n {
                    let gi = &go[i * oc * ohw..(i + 1) * oc * ohw];
                    if let Some(dw) = dw.as_mut() {
                        geom.im2col(&xv.data()[i * in_sz..(i + 1) * in_sz], &mut cols);
                        gemm(oc, ohw, rows, gi, false, &cols, true, dw, true);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(rows, oc, ohw, wv.data(), true, gi, false, &mut dcols, false);
                        geom.col2im(&dcols, &mut dx[i * in_sz..(i + 1) * in_sz]);
                    }
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); oc];
                    for (j, row) in go.chunks(ohw).enumerate() {
                        db[j % oc] = db[j % oc] + row.iter().copied().sum::<T>();
                    }
                    self.accumulate(grads, *b, like(*b, db)?);
                }
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, like(*x, dx)?);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, like(*w, dw)?);
                }
            }
            Op::Dense { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k, m) = (xv.dims()[0], xv.dims()[1], wv.dims()[0]);
                if self.rg(*x) {
                    let mut dx = vec![T::zero(); n * k];
                    gemm(n, m, k, go, false, wv.data(), false, &mut dx, false);
                    self.accumulate(grads, *x, like(*x, dx)?);
                }
                if self.rg(*w) {
                    let mut dw = vec![T::zero(); m * k];
                    gemm(m, n, k, go, true, xv.data(), false, &mut dw, false);
                    self.accumulate(grads, *w, like(*w, dw)?);
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); m];
                    for row in go.chunks(m) {
                        db.iter_mut().zip(row).for_each(|(d, &g)| *d = *d + g);
                    }
                    self.accumulate(grads, *b, like(*b, db)?);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let dx = xv
                    .iter()
                    .zip(go)
                    .map(|(&v, &g)| if v > T::zero() { g } else { *slope * g })
                    .collect();
                self.accumulate(grads, *x, like(*x, dx)?);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let xd = self.value(*x).dims();
                let (n, c) = (xd[0], xd[1]);
                let sp: usize = xd[2..].iter().product();
                let gv = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); xhat.len()];
                let cnt = T::from_usize(n * sp).unwrap();
                for ch in 0..c {
                    let offs: Vec<usize> = (0..n).map(|i| (i * c + ch) * sp).collect();
                    let (mut sg, mut sgx) = (T::zero(), T::zero());
                    for &off in &offs {
                        for j in off..off + sp {
                            sg = sg + go[j];
                            sgx = sgx + go[j] * xhat[j];
                        }
                    }
                    dgamma[ch] = sgx;
                    dbeta[ch] = sg;
                    let scale = gv[ch] * inv_std[ch];
                    for &off in &offs {
                        for j in off..off + sp {
                            dx[j] = if *batch_stats {
                                scale * (go[j] - sg / cnt - xhat[j] * sgx / cnt)
                            } else {
                                scale * go[j]
                            };
                        }
                    }
                }
                self.accumulate(grads, *x, like(*x, dx)?);
                self.accumulate(grads, *gamma, like(*gamma, dgamma)?);
                self.accumulate(grads, *beta, like(*beta, dbeta)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.map(|g| -g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let da = go.iter().zip(bv).map(|(&g, &y)| g * y).collect();
                let db = go.iter().zip(av).map(|(&g, &x)| g * x).collect();
                self.accumulate(grads, *a, like(*a, da)?);
                self.accumulate(grads, *b, like(*b, db)?);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let da = go.iter().zip(bv).map(|(&g, &y)| g / y).collect();
                let db = go
                    .iter()
                    .zip(av.iter().zip(bv))
                    .map(|(&g, (&x, &y))| -g * x / (y * y))
                    .collect();
                self.accumulate(grads, *a, like(*a, da)?);
                self.accumulate(grads, *b, like(*b, db)?);
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, gout.map(|g| g * *c)),
            Op::AddScalar(x) => self.accumulate(grads, *x, gout.clone()),
            Op::Square(x) => {
                let two = T::one() + T::one();
                let dx = go.iter().zip(self.value(*x).data()).map(|(&g, &v)| two * v * g).collect();
                self.accumulate(grads, *x, like(*x, dx)?);
            }
            Op::Abs(x) => {
                let dx = go
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&g, &v)| {
                        if v > T::zero() {
                            g
                        } else if v < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, like(*x, dx)?);
            }
            Op::Softplus(x) => {
                let dx = go
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&g, &v)| g * sigmoid(v))
                    .collect();
                self.accumulate(grads, *x, like(*x, dx)?);
            }
            Op::Sum(x) => {
                let g = go[0];
                self.accumulate(grads, *x, Tensor::full(self.value(*x).dims(), g));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let g = go[0] / T::from_usize(xv.numel()).unwrap();
                self.accumulate(grads, *x, Tensor::full(xv.dims(), g));
            }
            Op::Concat {
                a,
                b,
                outer,
                inner_a,
                inner_b,
            } => {
                let (ia, ib) = (*inner_a, *inner_b);
                let mut da = Vec::with_capacity(outer * ia);
                let mut db = Vec::with_capacity(outer * ib);
                for row in go.chunks(ia + ib) {
                    da.extend_from_slice(&row[..ia]);
                    db.extend_from_slice(&row[ia..]);
                }
                self.accumulate(grads, *a, like(*a, da)?);
                self.accumulate(grads, *b, like(*b, db)?);
            }
            Op::GlobalAvgPool(x) => {
                let xd = self.value(*x).dims();
                let sp = xd[2] * xd[3];
                let inv = T::one() / T::from_usize(sp).unwrap();
                let mut dx = Vec::with_capacity(self.value(*x).numel());
                for &g in go {
                    dx.extend(std::iter::repeat_n(g * inv, sp));
                }
                self.accumulate(grads, *x, like(*x, dx)?);
            }
            Op::SliceBatch { x, start } => {
                let xv = self.value(*x);
                let row: usize = xv.dims()[1..].iter().product();
                let mut dx = vec![T::zero(); xv.numel()];
                dx[start * row..start * row + go.len()].copy_from_slice(go);
                self.accumulate(grads, *x, like(*x, dx)?);
            }
        }
        Ok(())
    }
}

pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
