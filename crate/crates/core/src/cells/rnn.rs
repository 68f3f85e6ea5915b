use rand::Rng;

use super::{as_row, glorot, restore_rank, Binding, CellParams, ParamId, ParamSet, QuantTargets};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Elman recurrent cell: `h = tanh(x·W_h + h_prev·U_h + b_h)`,
/// `y = h·W_y + b_y` (identity output activation).
#[derive(Clone, Debug)]
pub struct RnnCell {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    w_h: ParamId,
    u_h: ParamId,
    b_h: ParamId,
    w_y: ParamId,
    b_y: ParamId,
}

impl RnnCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        RnnCell {
            input,
            hidden,
            output,
            w_h: ps.add(format!("{prefix}.W_h"), glorot(rng, &[input, hidden], input, hidden), true),
            u_h: ps.add(format!("{prefix}.U_h"), glorot(rng, &[hidden, hidden], hidden, hidden), true),
            b_h: ps.add(format!("{prefix}.b_h"), Tensor::zeros(&[hidden]), targets.biases),
            w_y: ps.add(format!("{prefix}.W_y"), glorot(rng, &[hidden, output], hidden, output), true),
            b_y: ps.add(format!("{prefix}.b_y"), Tensor::zeros(&[output]), targets.biases),
        }
    }

    pub fn params(&self) -> CellParams {
        CellParams(vec![
            ("W_h", self.w_h),
            ("U_h", self.u_h),
            ("b_h", self.b_h),
            ("W_y", self.w_y),
            ("b_y", self.b_y),
        ])
    }

    /// Returns `(h, y)` for a batch `x[B×in]`.
    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var, h_prev: Var) -> Result<(Var, Var)> {
        let xs = g.value(x).shape();
        if xs.len() != 2 || xs[1] != self.input || g.value(h_prev).shape() != [xs[0], self.hidden] {
            return Err(Error::shape("rnn_step", xs, g.value(h_prev).shape()));
        }
        let xw = g.matmul(x, bind[self.w_h])?;
        let hu = g.matmul(h_prev, bind[self.u_h])?;
        let pre = g.add(xw, hu)?;
        let pre = g.add_leading(pre, bind[self.b_h])?;
        let h = g.tanh(pre);
        let y = g.matmul(h, bind[self.w_y])?;
        let y = g.add_leading(y, bind[self.b_y])?;
        Ok((h, y))
    }

    pub fn step_tensors<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Tensor<T>,
        h_prev: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let unbatched = x.rank() == 1;
        let mut g = Graph::new();
        let bind = ps.bind_constants(&mut g);
        let xv = g.constant(as_row(x)?);
        let hv = g.constant(as_row(h_prev)?);
        let (h, y) = self.step(&mut g, &bind, xv, hv)?;
        Ok((restore_rank(g.value(h), unbatched), restore_rank(g.value(y), unbatched)))
    }
}
