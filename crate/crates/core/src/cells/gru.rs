use rand::Rng;

use super::{as_row, glorot, restore_rank, Binding, CellParams, ParamId, ParamSet, QuantTargets};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GruState<T: Scalar> {
    pub h: Tensor<T>,
}

/// Gated recurrent unit.
///
/// ```text
/// z  = σ(x·W_z + h·U_z + b_z)
/// r  = σ(x·W_r + h·U_r + b_r)
/// h̃  = tanh(x·W_h + (r∘h)·U_h + b_h)
/// h' = (1 − z)∘h + z∘h̃
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    // z, r, candidate
    w: [ParamId; 3],
    u: [ParamId; 3],
    b: [ParamId; 3],
}

#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    w_zr: Var,
    u_zr: Var,
    b_zr: Var,
    w_h: Var,
    u_h: Var,
    b_h: Var,
}

impl GruCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        let names = ["z", "r", "h"];
        let w = names.map(|n| {
            ps.add(format!("{prefix}.W_{n}"), glorot(rng, &[input, hidden], input, hidden), true)
        });
        let u = names.map(|n| {
            ps.add(format!("{prefix}.U_{n}"), glorot(rng, &[hidden, hidden], hidden, hidden), true)
        });
        let b = names.map(|n| ps.add(format!("{prefix}.b_{n}"), Tensor::zeros(&[hidden]), targets.biases));
        GruCell {
            input,
            hidden,
            w,
            u,
            b,
        }
    }

    pub fn params(&self) -> CellParams {
        CellParams(vec![
            ("W_z", self.w[0]),
            ("W_r", self.w[1]),
            ("W_h", self.w[2]),
            ("U_z", self.u[0]),
            ("U_r", self.u[1]),
            ("U_h", self.u[2]),
            ("b_z", self.b[0]),
            ("b_r", self.b[1]),
            ("b_h", self.b[2]),
        ])
    }

    pub fn prepare<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding) -> Result<GruWeights> {
        Ok(GruWeights {
            w_zr: g.concat(&[bind[self.w[0]], bind[self.w[1]]], 1)?,
            u_zr: g.concat(&[bind[self.u[0]], bind[self.u[1]]], 1)?,
            b_zr: g.concat(&[bind[self.b[0]], bind[self.b[1]]], 0)?,
            w_h: bind[self.w[2]],
            u_h: bind[self.u[2]],
            b_h: bind[self.b[2]],
        })
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> Var {
        g.constant(Tensor::zeros(&[batch, self.hidden]))
    }

    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, wts: &GruWeights, x: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let xs = g.value(x).shape();
        if xs.len() != 2 || xs[1] != self.input || g.value(h).shape() != [xs[0], n] {
            return Err(Error::shape("gru_step", xs, g.value(h).shape()));
        }
        let xw = g.matmul(x, wts.w_zr)?;
        let hu = g.matmul(h, wts.u_zr)?;
        let pre = g.add(xw, hu)?;
        let pre = g.add_leading(pre, wts.b_zr)?;
        let z = g.slice(pre, 1, 0, n)?;
        let r = g.slice(pre, 1, n, n)?;
        let z = g.sigmoid(z);
        let r = g.sigmoid(r);
        let rh = g.hadamard(r, h)?;
        let xw = g.matmul(x, wts.w_h)?;
        let ru = g.matmul(rh, wts.u_h)?;
        let cand = g.add(xw, ru)?;
        let cand = g.add_leading(cand, wts.b_h)?;
        let cand = g.tanh(cand);
        let keep = g.one_minus(z);
        let keep = g.hadamard(keep, h)?;
        let write = g.hadamard(z, cand)?;
        g.add(keep, write)
    }

    pub fn step_tensors<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Tensor<T>,
        s: &GruState<T>,
    ) -> Result<GruState<T>> {
        let unbatched = x.rank() == 1;
        let mut g = Graph::new();
        let bind = ps.bind_constants(&mut g);
        let wts = self.prepare(&mut g, &bind)?;
        let xv = g.constant(as_row(x)?);
        let hv = g.constant(as_row(&s.h)?);
        let h = self.step(&mut g, &wts, xv, hv)?;
        Ok(GruState {
            h: restore_rank(g.value(h), unbatched),
        })
    }
}
