use rand::Rng;

use super::{glorot, uniform, Binding, ParamId, ParamSet, QuantTargets};
use crate::autograd::{Graph, TemporalPadding, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// Affine layer `y = x·W + b` with `W[in×out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        output: usize,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        Dense {
            input,
            output,
            w: ps.add(format!("{prefix}.W"), glorot(rng, &[input, output], input, output), true),
            b: ps.add(format!("{prefix}.b"), Tensor::zeros(&[output]), targets.biases),
        }
    }

    /// `x` is `[B, in]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var) -> Result<Var> {
        let y = g.matmul(x, bind[self.w])?;
        g.add_leading(y, bind[self.b])
    }
}

/// Token embedding table `[vocab×dim]`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub vocab: usize,
    pub dim: usize,
    pub table: ParamId,
}

impl Embedding {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        vocab: usize,
        dim: usize,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        Embedding {
            vocab,
            dim,
            table: ps.add(format!("{prefix}.table"), uniform(rng, &[vocab, dim], 0.05), targets.embeddings),
        }
    }

    pub fn lookup<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, ids: &[usize]) -> Result<Var> {
        g.embedding(bind[self.table], ids)
    }
}

/// Batch normalisation over channel axis 1.
///
/// Training mode normalises with the batch statistics and folds them into
/// the running averages as `r ← momentum·r + (1 − momentum)·batch`.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.99;
    pub const EPS: f64 = 1e-3;

    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, prefix: &str, channels: usize) -> Self {
        BatchNorm {
            channels,
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
            gamma: ps.add(format!("{prefix}.gamma"), Tensor::ones(&[channels]), false),
            beta: ps.add(format!("{prefix}.beta"), Tensor::zeros(&[channels]), false),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn forward<T: Scalar>(&mut self, g: &mut Graph<T>, bind: &Binding, x: Var, mode: Mode) -> Result<Var> {
        let (gamma, beta) = (bind[self.gamma], bind[self.beta]);
        match mode {
            Mode::Train => {
                let (y, stats) = g.batchnorm_train(x, gamma, beta, self.eps)?;
                let m = self.momentum;
                for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
                    *r = m * *r + (1.0 - m) * b;
                }
                for (r, b) in self.running_var.iter_mut().zip(&stats.var) {
                    *r = m * *r + (1.0 - m) * b;
                }
                Ok(y)
            }
            Mode::Eval => g.batchnorm_eval(x, gamma, beta, &self.running_mean, &self.running_var, self.eps),
        }
    }
}

/// 3-D convolution from `C_h` channels to one intensity channel, then
/// sigmoid.
#[derive(Clone, Debug)]
pub struct Reconstruct3d {
    pub channels: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
    pub padding: TemporalPadding,
}

impl Reconstruct3d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        channels: usize,
        padding: TemporalPadding,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        let fan = 27;
        Reconstruct3d {
            channels,
            kernel: ps.add(
                format!("{prefix}.kernel"),
                glorot(rng, &[1, channels, 3, 3, 3], channels * fan, fan),
                true,
            ),
            bias: ps.add(format!("{prefix}.bias"), Tensor::zeros(&[1]), targets.biases),
            padding,
        }
    }

    /// `h_seq` is `[C_h, T, H, W]` or `[N, C_h, T, H, W]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, h_seq: Var) -> Result<Var> {
        let s = g.value(h_seq).shape();
        let c = match s.len() {
            4 => s[0],
            5 => s[1],
            _ => 0,
        };
        if c != self.channels {
            return Err(Error::shape("reconstruct3d", s, &[self.channels]));
        }
        let y = g.conv3d(h_seq, bind[self.kernel], bind[self.bias], self.padding)?;
        Ok(g.sigmoid(y))
    }
}
