use rand::Rng;

use super::{as_row, glorot, restore_rank, Binding, CellParams, ParamId, ParamSet, QuantTargets};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Hidden and cell state of an LSTM, `[hidden]` or batched `[B, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T: Scalar> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }
}

/// LSTM state on a graph.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub h: Var,
    pub c: Var,
}

const GATES: [&str; 4] = ["f", "i", "c", "o"];

/// Fully connected LSTM cell.
///
/// Each gate `g ∈ {f, i, c, o}` owns an input kernel `W_g[in×H]`, a
/// recurrent kernel `U_g[H×H]` and a bias `b_g[H]`, so `W·[h, x]` is
/// computed as `x·W_g + h·U_g`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    w: [ParamId; 4],
    u: [ParamId; 4],
    b: [ParamId; 4],
}

/// Gate weights concatenated once per forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    w: Var,
    u: Var,
    b: Var,
}

impl LstmCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        let w = GATES.map(|g| {
            ps.add(
                format!("{prefix}.W_{g}"),
                glorot(rng, &[input, hidden], input, hidden),
                true,
            )
        });
        let u = GATES.map(|g| {
            ps.add(
                format!("{prefix}.U_{g}"),
                glorot(rng, &[hidden, hidden], hidden, hidden),
                true,
            )
        });
        let b = GATES.map(|g| {
            let init = if g == "f" { T::one() } else { T::zero() };
            ps.add(format!("{prefix}.b_{g}"), Tensor::full(&[hidden], init), targets.biases)
        });
        LstmCell {
            input,
            hidden,
            w,
            u,
            b,
        }
    }

    pub fn params(&self) -> CellParams {
        let roles = [
            ("W_f", self.w[0]),
            ("W_i", self.w[1]),
            ("W_c", self.w[2]),
            ("W_o", self.w[3]),
            ("U_f", self.u[0]),
            ("U_i", self.u[1]),
            ("U_c", self.u[2]),
            ("U_o", self.u[3]),
            ("b_f", self.b[0]),
            ("b_i", self.b[1]),
            ("b_c", self.b[2]),
            ("b_o", self.b[3]),
        ];
        CellParams(roles.to_vec())
    }

    pub fn prepare<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding) -> Result<LstmWeights> {
        let w = g.concat(&self.w.map(|id| bind[id]), 1)?;
        let u = g.concat(&self.u.map(|id| bind[id]), 1)?;
        let b = g.concat(&self.b.map(|id| bind[id]), 0)?;
        Ok(LstmWeights { w, u, b })
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> LstmVars {
        LstmVars {
            h: g.constant(Tensor::zeros(&[batch, self.hidden])),
            c: g.constant(Tensor::zeros(&[batch, self.hidden])),
        }
    }

    /// One time step on a batch `x[B×in]`.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        wts: &LstmWeights,
        x: Var,
        s: LstmVars,
    ) -> Result<LstmVars> {
        let h = self.hidden;
        let xs = g.value(x).shape();
        if xs.len() != 2 || xs[1] != self.input || g.value(s.h).shape() != [xs[0], h] {
            return Err(Error::shape("lstm_step", xs, g.value(s.h).shape()));
        }
        let xw = g.matmul(x, wts.w)?;
        let hu = g.matmul(s.h, wts.u)?;
        let pre = g.add(xw, hu)?;
        let pre = g.add_leading(pre, wts.b)?;
        let f = g.slice(pre, 1, 0, h)?;
        let i = g.slice(pre, 1, h, h)?;
        let cc = g.slice(pre, 1, 2 * h, h)?;
        let o = g.slice(pre, 1, 3 * h, h)?;
        let f = g.sigmoid(f);
        let i = g.sigmoid(i);
        let cand = g.tanh(cc);
        let o = g.sigmoid(o);
        let keep = g.hadamard(f, s.c)?;
        let write = g.hadamard(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.hadamard(o, tc)?;
        Ok(LstmVars { h, c })
    }

    /// Evaluates one step on plain tensors with full-precision weights.
    /// Accepts unbatched `[in]` or batched `[B, in]` inputs.
    pub fn step_tensors<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Tensor<T>,
        s: &LstmState<T>,
    ) -> Result<LstmState<T>> {
        let unbatched = x.rank() == 1;
        let mut g = Graph::new();
        let bind = ps.bind_constants(&mut g);
        let wts = self.prepare(&mut g, &bind)?;
        let xv = g.constant(as_row(x)?);
        let state = LstmVars {
            h: g.constant(as_row(&s.h)?),
            c: g.constant(as_row(&s.c)?),
        };
        let out = self.step(&mut g, &wts, xv, state)?;
        Ok(LstmState {
            h: restore_rank(g.value(out.h), unbatched),
            c: restore_rank(g.value(out.c), unbatched),
        })
    }
}
