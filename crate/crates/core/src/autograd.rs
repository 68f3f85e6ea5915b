//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles in
//! creation order. Because an operation can only consume values that
//! already exist, the reverse of the tape is a valid topological order and
//! [`Graph::backward`] simply walks it from the loss down to the leaves.
//!
//! Broadcasting is never implicit. The only broadcasting ops are
//! [`Graph::add_leading`] and [`Graph::mul_leading`], which apply a tensor
//! whose shape equals the trailing dimensions of the other operand (bias
//! rows, per-element peephole weights).

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom, Layout};
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A value together with the gradient of the loss with respect to it.
#[derive(Clone, Debug)]
pub struct Grad<T: Scalar> {
    pub value: Tensor<T>,
    pub gradient: Tensor<T>,
}

/// Where the temporal axis of a 3-D convolution is padded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TemporalPadding {
    /// Symmetric "same" padding: output at `t` sees `t - k/2 ..= t + k/2`.
    #[default]
    Centered,
    /// All padding in front: output at `t` sees `t - k + 1 ..= t`.
    Causal,
}

enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddLeading(Var, Var),
    MulLeading(Var, Var),
    Affine(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Conv {
        x: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
        batch: usize,
        out_channels: usize,
        cols: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Bce {
        pred: Var,
        target: Tensor<T>,
    },
    Mse(Var, Var),
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Statistics of one training-mode batch-norm application.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Clipping bound applied to predictions inside [`Graph::bce`].
pub const BCE_EPS: f64 = 1e-7;

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    // (outer batch, channels, inner positions) for channel axis 1
    let n = shape[0];
    let c = shape[1];
    let inner: usize = shape[2..].iter().product();
    (n, c, inner)
}

fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, inner)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
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
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf; its gradient is available after [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient (inputs, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a leaf, zero-filled when the loss did not depend on it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()))
    }

    pub fn grad_pair(&self, v: Var) -> Grad<T> {
        Grad {
            value: self.value(v).clone(),
            gradient: self.grad_or_zeros(v),
        }
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    // ---- linear algebra -------------------------------------------------

    /// Matrix product of `a[m×k]` and `b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            Layout::Normal,
            self.value(b).data(),
            Layout::Normal,
            T::zero(),
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_vec(&[m, n], out), Op::MatMul(a, b), rg))
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), name, f)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "hadamard", |x, y| x * y, Op::Mul(a, b))
    }

    fn check_trailing(&self, x: Var, b: Var, name: &'static str) -> Result<usize> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() <= sb.len() && sx != sb {
            return Err(Error::shape(name, sx, sb));
        }
        if sx[sx.len() - sb.len()..] != *sb {
            return Err(Error::shape(name, sx, sb));
        }
        Ok(sb.iter().product())
    }

    /// `x + b` where `b` matches the trailing dimensions of `x`
    /// (bias over the batch axis).
    pub fn add_leading(&mut self, x: Var, b: Var) -> Result<Var> {
        let inner = self.check_trailing(x, b, "add_leading")?;
        let bv = self.value(b).data();
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(inner) {
            for (o, &bb) in chunk.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddLeading(x, b), rg))
    }

    /// `x ∘ w` where `w` matches the trailing dimensions of `x`.
    pub fn mul_leading(&mut self, x: Var, w: Var) -> Result<Var> {
        let inner = self.check_trailing(x, w, "mul_leading")?;
        let wv = self.value(w).data();
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(inner) {
            for (o, &ww) in chunk.iter_mut().zip(wv) {
                *o *= ww;
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::MulLeading(x, w), rg))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(x);
        self.push(out, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.affine(x, s, T::zero())
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -T::one(), T::one())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.rg(x);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.sum() / T::of(t.numel() as f64);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Domain("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Domain(format!("concat axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, inner) = axis_layout(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::from_vec(&shape, data),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::Domain(format!(
                "slice [{start}, {}) of axis {axis} out of range for {s:?}",
                start + len
            )));
        }
        let (outer, inner) = axis_layout(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_vec(&shape, data),
            Op::Slice {
                input: x,
                axis,
                start,
            },
            rg,
        ))
    }

    // ---- convolution ----------------------------------------------------

    /// Same-padded 2-D cross-correlation.
    ///
    /// `x` is `[C_in, H, W]` or batched `[N, C_in, H, W]`; the kernel is
    /// `[C_out, C_in, k_h, k_w]` with odd sizes and the bias is `[C_out]`.
    pub fn conv2d_same(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let ks = self.shape(kernel).to_vec();
        if ks.len() != 4 {
            return Err(Error::shape("conv2d_same", self.shape(x), &ks));
        }
        let xs = self.shape(x).to_vec();
        let (batch, spatial) = match xs.len() {
            3 => (None, &xs[..]),
            4 => (Some(xs[0]), &xs[1..]),
            _ => return Err(Error::shape("conv2d_same", &xs, &ks)),
        };
        let geom_dims = [1, spatial[1], spatial[2]];
        let k3 = [1, ks[2], ks[3]];
        self.conv_impl(x, kernel, bias, batch, spatial[0], geom_dims, &ks, k3, TemporalPadding::Centered, "conv2d_same")
    }

    /// Same-padded 3-D cross-correlation with centered temporal padding.
    pub fn conv3d_same(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        self.conv3d(x, kernel, bias, TemporalPadding::Centered)
    }

    /// 3-D cross-correlation preserving all extents.
    ///
    /// `x` is `[C_in, T, H, W]` or batched `[N, C_in, T, H, W]`; the kernel is
    /// `[C_out, C_in, k_t, k_h, k_w]`. Spatial padding is always centered;
    /// the temporal axis is padded according to `padding`.
    pub fn conv3d(&mut self, x: Var, kernel: Var, bias: Var, padding: TemporalPadding) -> Result<Var> {
        let ks = self.shape(kernel).to_vec();
        if ks.len() != 5 {
            return Err(Error::shape("conv3d", self.shape(x), &ks));
        }
        let xs = self.shape(x).to_vec();
        let (batch, spatial) = match xs.len() {
            4 => (None, &xs[..]),
            5 => (Some(xs[0]), &xs[1..]),
            _ => return Err(Error::shape("conv3d", &xs, &ks)),
        };
        let dims = [spatial[1], spatial[2], spatial[3]];
        let k3 = [ks[2], ks[3], ks[4]];
        self.conv_impl(x, kernel, bias, batch, spatial[0], dims, &ks, k3, padding, "conv3d")
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_impl(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Var,
        batch: Option<usize>,
        channels: usize,
        dims: [usize; 3],
        ks: &[usize],
        k3: [usize; 3],
        padding: TemporalPadding,
        name: &'static str,
    ) -> Result<Var> {
        if k3.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(format!(
                "{name}: kernel sizes must be odd for same padding, got {:?}",
                &ks[2..]
            )));
        }
        if ks[1] != channels {
            return Err(Error::shape(name, self.shape(x), ks));
        }
        let out_channels = ks[0];
        if self.shape(bias) != [out_channels] {
            return Err(Error::shape(name, ks, self.shape(bias)));
        }
        let pad_t = match padding {
            TemporalPadding::Centered => k3[0] / 2,
            TemporalPadding::Causal => k3[0] - 1,
        };
        let geom = ConvGeom {
            channels,
            dims,
            kernel: k3,
            pad_before: [pad_t, k3[1] / 2, k3[2] / 2],
        };
        let n = batch.unwrap_or(1);
        let (out, cols) = kernels::conv_forward(
            self.value(x).data(),
            n,
            &geom,
            self.value(kernel).data(),
            out_channels,
            self.value(bias).data(),
        );
        let mut shape = Vec::with_capacity(5);
        if let Some(b) = batch {
            shape.push(b);
        }
        shape.push(out_channels);
        if ks.len() == 5 {
            shape.push(dims[0]);
        }
        shape.extend_from_slice(&dims[1..]);
        let rg = self.rg(x) || self.rg(kernel) || self.rg(bias);
        Ok(self.push(
            Tensor::from_vec(&shape, out),
            Op::Conv {
                x,
                kernel,
                bias,
                geom,
                batch: n,
                out_channels,
                cols,
            },
            rg,
        ))
    }

    // ---- normalisation, lookup, losses ----------------------------------

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() < 2 {
            return Err(Error::shape("batchnorm", s, self.shape(gamma)));
        }
        let (n, c, inner) = channel_layout(s);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("batchnorm", s, self.shape(gamma)));
        }
        Ok((n, c, inner))
    }

    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
        train: bool,
    ) -> Var {
        let (n, c, inner) = channel_layout(self.shape(x));
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + eps).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
        let xv = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * inner;
                for j in base..base + inner {
                    let h = (xv[j] - mean_t[ch]) * inv_std[ch];
                    xhat[j] = h;
                    out[j] = g[ch] * h + b[ch];
                }
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            Tensor::from_vec(&shape, out),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            rg,
        )
    }

    /// Batch normalisation over channel axis 1 using the batch's own
    /// statistics (biased variance). Returns those statistics so the caller
    /// can maintain running averages.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (n, c, inner) = self.check_bn(x, gamma, beta)?;
        let xv = self.value(x).data();
        let count = (n * inner) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for i in 0..n {
                let base = (i * c + ch) * inner;
                s += xv[base..base + inner].iter().map(|v| v.f64()).sum::<f64>();
            }
            let m = s / count;
            let mut q = 0.0;
            for i in 0..n {
                let base = (i * c + ch) * inner;
                q += xv[base..base + inner]
                    .iter()
                    .map(|v| {
                        let d = v.f64() - m;
                        d * d
                    })
                    .sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = q / count;
        }
        let out = self.bn_apply(x, gamma, beta, &mean, &var, eps, true);
        Ok((out, BatchStats { mean, var }))
    }

    /// Batch normalisation with fixed (running) statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (_, c, _) = self.check_bn(x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape("batchnorm", &[c], &[running_mean.len()]));
        }
        Ok(self.bn_apply(x, gamma, beta, running_mean, running_var, eps, false))
    }

    /// Rows of `table[V×E]` selected by `ids`, shaped `[len(ids)×E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::shape("embedding", s, &[ids.len()]));
        }
        let (vocab, dim) = (s[0], s[1]);
        if ids.is_empty() {
            return Err(Error::Data("embedding lookup with no ids".into()));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Data(format!("token id {bad} out of vocabulary range {vocab}")));
        }
        let tv = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            data.extend_from_slice(&tv[i * dim..(i + 1) * dim]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::from_vec(&[ids.len(), dim], data),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Mean binary cross entropy with predictions clipped to
    /// `[BCE_EPS, 1 - BCE_EPS]`.
    ///
    /// The gradient is evaluated at the clipped prediction and passed
    /// through the clip unchanged, so saturated outputs still train.
    pub fn bce(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::shape("bce", p.shape(), target.shape()));
        }
        let loss = bce_value(p.data(), target.data());
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor::scalar(T::of(loss)),
            Op::Bce {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Mean squared difference of two equally shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mse", va.shape(), vb.shape()));
        }
        let n = va.numel() as f64;
        let s: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| {
                let d = x.f64() - y.f64();
                d * d
            })
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(T::of(s / n)), Op::Mse(a, b), rg))
    }

    // ---- backward -------------------------------------------------------

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += *x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse-mode pass from a scalar `loss`, filling leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward called before the loss was recorded by a forward pass".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        if !self.rg(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.backward_node(i, g);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: Tensor<T>) {
        // Pending contributions are collected first so that `self.nodes`
        // can be borrowed immutably while they are computed.
        let mut out: Vec<(Var, Tensor<T>)> = Vec::with_capacity(2);
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.rg(*a) {
                    let mut da = vec![T::zero(); m * k];
                    kernels::gemm(m, n, k, g.data(), Layout::Normal, vb.data(), Layout::Transposed, T::zero(), &mut da);
                    out.push((*a, Tensor::from_vec(&[m, k], da)));
                }
                if self.rg(*b) {
                    let mut db = vec![T::zero(); k * n];
                    kernels::gemm(k, m, n, va.data(), Layout::Transposed, g.data(), Layout::Normal, T::zero(), &mut db);
                    out.push((*b, Tensor::from_vec(&[k, n], db)));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g));
            }
            Op::Sub(a, b) => {
                out.push((*b, g.map(|v| -v)));
                out.push((*a, g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    out.push((*a, g.zip_map(vb, "mul", |x, y| x * y).expect("shape")));
                }
                if self.rg(*b) {
                    out.push((*b, g.zip_map(va, "mul", |x, y| x * y).expect("shape")));
                }
            }
            Op::AddLeading(x, b) => {
                let vb = self.value(*b);
                if self.rg(*b) {
                    let mut db = vec![T::zero(); vb.numel()];
                    for chunk in g.data().chunks(vb.numel()) {
                        for (d, &v) in db.iter_mut().zip(chunk) {
                            *d += v;
                        }
                    }
                    out.push((*b, Tensor::from_vec(vb.shape(), db)));
                }
                out.push((*x, g));
            }
            Op::MulLeading(x, w) => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let inner = vw.numel();
                if self.rg(*w) {
                    let mut dw = vec![T::zero(); inner];
                    for (gc, xc) in g.data().chunks(inner).zip(vx.data().chunks(inner)) {
                        for j in 0..inner {
                            dw[j] += gc[j] * xc[j];
                        }
                    }
                    out.push((*w, Tensor::from_vec(vw.shape(), dw)));
                }
                if self.rg(*x) {
                    let mut dx = g.clone();
                    for chunk in dx.data_mut().chunks_mut(inner) {
                        for (d, &ww) in chunk.iter_mut().zip(vw.data()) {
                            *d *= ww;
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::Affine(x, s) => {
                let s = *s;
                out.push((*x, g.map(|v| v * s)));
            }
            Op::Sigmoid(x) => {
                let d = g.zip_map(y, "sigmoid", |gv, yv| gv * yv * (T::one() - yv)).expect("shape");
                out.push((*x, d));
            }
            Op::Tanh(x) => {
                let d = g.zip_map(y, "tanh", |gv, yv| gv * (T::one() - yv * yv)).expect("shape");
                out.push((*x, d));
            }
            Op::Sum(x) => {
                out.push((*x, Tensor::full(self.shape(*x), g.item())));
            }
            Op::Mean(x) => {
                let n = T::of(self.value(*x).numel() as f64);
                out.push((*x, Tensor::full(self.shape(*x), g.item() / n)));
            }
            Op::Reshape(x) => {
                out.push((*x, g.reshape(self.shape(*x)).expect("reshape")));
            }
            Op::Concat { inputs, axis } => {
                let (outer, inner) = axis_layout(y.shape(), *axis);
                let total = y.shape()[*axis];
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[*axis];
                    if self.rg(v) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        out.push((v, Tensor::from_vec(self.shape(v), d)));
                    }
                    offset += len;
                }
            }
            Op::Slice { input, axis, start } => {
                // Added in place so that many slices of one large tensor
                // do not each allocate a full-size gradient.
                let (input, axis, start) = (*input, *axis, *start);
                if !self.rg(input) {
                    return;
                }
                let s = self.shape(input).to_vec();
                let (outer, inner) = axis_layout(&s, axis);
                let len = y.shape()[axis];
                let d = self.grads[input.0].get_or_insert_with(|| Tensor::zeros(&s));
                for o in 0..outer {
                    let dst = (o * s[axis] + start) * inner;
                    let src = o * len * inner;
                    for (a, &b) in d.data_mut()[dst..dst + len * inner]
                        .iter_mut()
                        .zip(&g.data()[src..src + len * inner])
                    {
                        *a += b;
                    }
                }
            }
            Op::Conv {
                x,
                kernel,
                bias,
                geom,
                batch,
                out_channels,
                cols,
            } => {
                let (dx, dk, db) = kernels::conv_backward(
                    g.data(),
                    cols,
                    *batch,
                    geom,
                    self.value(*kernel).data(),
                    *out_channels,
                    self.rg(*x),
                );
                if let Some(dx) = dx {
                    out.push((*x, Tensor::from_vec(self.shape(*x), dx)));
                }
                out.push((*kernel, Tensor::from_vec(self.shape(*kernel), dk)));
                out.push((*bias, Tensor::from_vec(self.shape(*bias), db)));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c, inner) = channel_layout(y.shape());
                let gd = g.data();
                let gamma_v = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * inner;
                        for j in base..base + inner {
                            dbeta[ch] += gd[j];
                            dgamma[ch] += gd[j] * xhat[j];
                        }
                    }
                }
                if self.rg(*x) {
                    let mut dx = vec![T::zero(); gd.len()];
                    let m = T::of((n * inner) as f64);
                    for i in 0..n {
                        for ch in 0..c {
                            let base = (i * c + ch) * inner;
                            let scale = gamma_v[ch] * inv_std[ch];
                            for j in base..base + inner {
                                dx[j] = if *train {
                                    scale * (gd[j] - dbeta[ch] / m - xhat[j] * dgamma[ch] / m)
                                } else {
                                    scale * gd[j]
                                };
                            }
                        }
                    }
                    out.push((*x, Tensor::from_vec(y.shape(), dx)));
                }
                out.push((*gamma, Tensor::from_vec(&[c], dgamma)));
                out.push((*beta, Tensor::from_vec(&[c], dbeta)));
            }
            Op::Embedding { table, ids } => {
                let s = self.shape(*table);
                let dim = s[1];
                let mut d = vec![T::zero(); s[0] * dim];
                for (row, &id) in ids.iter().enumerate() {
                    let src = &g.data()[row * dim..(row + 1) * dim];
                    for (dst, &v) in d[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                        *dst += v;
                    }
                }
                out.push((*table, Tensor::from_vec(s, d)));
            }
            Op::Bce { pred, target } => {
                let p = self.value(*pred);
                let n = p.numel() as f64;
                let scale = g.item().f64() / n;
                let d: Vec<T> = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&pv, &tv)| {
                        let pc = pv.f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
                        T::of(scale * (pc - tv.f64()) / (pc * (1.0 - pc)))
                    })
                    .collect();
                out.push((*pred, Tensor::from_vec(p.shape(), d)));
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let k = T::of(2.0 * g.item().f64() / va.numel() as f64);
                let da = va.zip_map(vb, "mse", |x, y| k * (x - y)).expect("shape");
                if self.rg(*b) {
                    out.push((*b, da.map(|v| -v)));
                }
                out.push((*a, da));
            }
        }
        for (v, d) in out {
            self.accumulate(v, d);
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn bce_value<T: Scalar>(pred: &[T], target: &[T]) -> f64 {
    let n = pred.len() as f64;
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
            let t = t.f64();
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    -s / n
}
