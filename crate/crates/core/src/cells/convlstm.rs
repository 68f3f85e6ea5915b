use rand::Rng;

use super::{as_row, glorot, restore_rank, uniform, Binding, CellParams, ParamId, ParamSet, QuantTargets};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// ConvLSTM state, `[C_h, H, W]` or batched `[B, C_h, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState<T: Scalar> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvLstmVars {
    pub h: Var,
    pub c: Var,
}

const GATES: [&str; 4] = ["i", "f", "c", "o"];

/// Convolutional LSTM cell with elementwise peephole connections.
///
/// ```text
/// i  = σ(Wx_i ∗ X + Wh_i ∗ H + W_ci ∘ C_prev + b_i)
/// f  = σ(Wx_f ∗ X + Wh_f ∗ H + W_cf ∘ C_prev + b_f)
/// C̃  = tanh(Wx_c ∗ X + Wh_c ∗ H + b_c)
/// C  = f ∘ C_prev + i ∘ C̃
/// o  = σ(Wx_o ∗ X + Wh_o ∗ H + W_co ∘ C + b_o)
/// H' = o ∘ tanh(C)
/// ```
///
/// `∗` is a same-padded cross-correlation, so the spatial grid is
/// preserved. Peephole weights have shape `[C_h, H, W]`, which fixes the
/// grid size at construction.
#[derive(Clone, Debug)]
pub struct ConvLstmCell {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
    wx: [ParamId; 4],
    wh: [ParamId; 4],
    // i, f, o
    peep: [ParamId; 3],
    b: [ParamId; 4],
}

#[derive(Clone, Copy, Debug)]
pub struct ConvLstmWeights {
    kernel: Var,
    bias: Var,
    w_ci: Var,
    w_cf: Var,
    w_co: Var,
}

impl ConvLstmCell {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        in_channels: usize,
        hidden_channels: usize,
        kernel: usize,
        grid: (usize, usize),
        targets: QuantTargets,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("ConvLSTM kernel size must be odd, got {kernel}")));
        }
        let kk = kernel * kernel;
        let (height, width) = grid;
        let wx = GATES.map(|g| {
            ps.add(
                format!("{prefix}.Wx_{g}"),
                glorot(
                    rng,
                    &[hidden_channels, in_channels, kernel, kernel],
                    in_channels * kk,
                    hidden_channels * kk,
                ),
                true,
            )
        });
        let wh = GATES.map(|g| {
            ps.add(
                format!("{prefix}.Wh_{g}"),
                glorot(
                    rng,
                    &[hidden_channels, hidden_channels, kernel, kernel],
                    hidden_channels * kk,
                    hidden_channels * kk,
                ),
                true,
            )
        });
        let peep = ["i", "f", "o"].map(|g| {
            ps.add(
                format!("{prefix}.W_c{g}"),
                uniform(rng, &[hidden_channels, height, width], 0.1),
                true,
            )
        });
        let b = GATES.map(|g| {
            let init = if g == "f" { T::one() } else { T::zero() };
            ps.add(format!("{prefix}.b_{g}"), Tensor::full(&[hidden_channels], init), targets.biases)
        });
        Ok(ConvLstmCell {
            in_channels,
            hidden_channels,
            kernel,
            height,
            width,
            wx,
            wh,
            peep,
            b,
        })
    }

    pub fn params(&self) -> CellParams {
        CellParams(vec![
            ("Wx_i", self.wx[0]),
            ("Wx_f", self.wx[1]),
            ("Wx_c", self.wx[2]),
            ("Wx_o", self.wx[3]),
            ("Wh_i", self.wh[0]),
            ("Wh_f", self.wh[1]),
            ("Wh_c", self.wh[2]),
            ("Wh_o", self.wh[3]),
            ("W_ci", self.peep[0]),
            ("W_cf", self.peep[1]),
            ("W_co", self.peep[2]),
            ("b_i", self.b[0]),
            ("b_f", self.b[1]),
            ("b_c", self.b[2]),
            ("b_o", self.b[3]),
        ])
    }

    /// Stacks the per-gate kernels into one `[4·C_h, C_in + C_h, k, k]`
    /// kernel acting on `concat(X, H)`.
    pub fn prepare<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding) -> Result<ConvLstmWeights> {
        let mut per_gate = Vec::with_capacity(4);
        for gate in 0..4 {
            per_gate.push(g.concat(&[bind[self.wx[gate]], bind[self.wh[gate]]], 1)?);
        }
        let kernel = g.concat(&per_gate, 0)?;
        let bias = g.concat(&self.b.map(|id| bind[id]), 0)?;
        Ok(ConvLstmWeights {
            kernel,
            bias,
            w_ci: bind[self.peep[0]],
            w_cf: bind[self.peep[1]],
            w_co: bind[self.peep[2]],
        })
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> ConvLstmVars {
        let shape = [batch, self.hidden_channels, self.height, self.width];
        ConvLstmVars {
            h: g.constant(Tensor::zeros(&shape)),
            c: g.constant(Tensor::zeros(&shape)),
        }
    }

    /// One step on a batch `x[B, C_in, H, W]`.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        wts: &ConvLstmWeights,
        x: Var,
        s: ConvLstmVars,
    ) -> Result<ConvLstmVars> {
        let xs = g.value(x).shape();
        let hs = g.value(s.h).shape();
        if xs.len() != 4
            || xs[1] != self.in_channels
            || xs[2..] != [self.height, self.width]
            || hs != [xs[0], self.hidden_channels, self.height, self.width]
            || g.value(s.c).shape() != hs
        {
            return Err(Error::shape("convlstm_step", xs, hs));
        }
        let n = self.hidden_channels;
        let inp = g.concat(&[x, s.h], 1)?;
        let pre = g.conv2d_same(inp, wts.kernel, wts.bias)?;
        let pi = g.slice(pre, 1, 0, n)?;
        let pf = g.slice(pre, 1, n, n)?;
        let pc = g.slice(pre, 1, 2 * n, n)?;
        let po = g.slice(pre, 1, 3 * n, n)?;

        let peep_i = g.mul_leading(s.c, wts.w_ci)?;
        let i = g.add(pi, peep_i)?;
        let i = g.sigmoid(i);
        let peep_f = g.mul_leading(s.c, wts.w_cf)?;
        let f = g.add(pf, peep_f)?;
        let f = g.sigmoid(f);
        let cand = g.tanh(pc);
        let keep = g.hadamard(f, s.c)?;
        let write = g.hadamard(i, cand)?;
        let c = g.add(keep, write)?;
        let peep_o = g.mul_leading(c, wts.w_co)?;
        let o = g.add(po, peep_o)?;
        let o = g.sigmoid(o);
        let tc = g.tanh(c);
        let h = g.hadamard(o, tc)?;
        Ok(ConvLstmVars { h, c })
    }

    /// Accepts `[C_in, H, W]` or `[B, C_in, H, W]` inputs.
    pub fn step_tensors<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Tensor<T>,
        s: &ConvLstmState<T>,
    ) -> Result<ConvLstmState<T>> {
        let unbatched = x.rank() == 3;
        let lift = |t: &Tensor<T>| -> Result<Tensor<T>> {
            if unbatched {
                let mut shape = vec![1];
                shape.extend_from_slice(t.shape());
                t.reshape(&shape)
            } else {
                as_row(t)
            }
        };
        let mut g = Graph::new();
        let bind = ps.bind_constants(&mut g);
        let wts = self.prepare(&mut g, &bind)?;
        let xv = g.constant(lift(x)?);
        let state = ConvLstmVars {
            h: g.constant(lift(&s.h)?),
            c: g.constant(lift(&s.c)?),
        };
        let out = self.step(&mut g, &wts, xv, state)?;
        Ok(ConvLstmState {
            h: restore_rank(g.value(out.h), unbatched),
            c: restore_rank(g.value(out.c), unbatched),
        })
    }
}
