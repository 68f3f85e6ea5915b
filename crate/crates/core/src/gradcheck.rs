//! Central finite-difference verification of analytic gradients.

use crate::autograd::{Graph, Var};
use crate::cells::{Binding, ParamSet};
use crate::error::Result;

/// Worst elementwise relative error found for one parameter.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|analytic − numeric| / (|numeric| + 1e-8)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

/// Compares the gradient of `loss` with respect to every element of every
/// parameter in `ps` against `(L(w + ε) − L(w − ε)) / 2ε`.
///
/// `loss` builds a scalar on the supplied graph from the binding; it is
/// called once with trainable leaves and twice per element with constants.
pub fn check_params<F>(ps: &mut ParamSet<f64>, eps: f64, loss: F) -> Result<Vec<ParamCheck>>
where
    F: Fn(&mut Graph<f64>, &Binding) -> Result<Var>,
{
    let mut g = Graph::new();
    let bind = ps.bind(&mut g);
    let out = loss(&mut g, &bind)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = bind.0.iter().map(|&v| g.grad_or_zeros(v).into_data()).collect();

    let eval = |ps: &ParamSet<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let bind = ps.bind_constants(&mut g);
        let out = loss(&mut g, &bind)?;
        Ok(g.value(out).item())
    };

    let mut report = Vec::with_capacity(ps.len());
    for (pi, grads) in analytic.iter().enumerate() {
        let id = crate::cells::ParamId(pi);
        let mut worst = ParamCheck {
            name: ps.get(id).name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (k, &a) in grads.iter().enumerate() {
            let orig = ps.get(id).value.data()[k];
            ps.get_mut(id).value.data_mut()[k] = orig + eps;
            let up = eval(ps)?;
            ps.get_mut(id).value.data_mut()[k] = orig - eps;
            let down = eval(ps)?;
            ps.get_mut(id).value.data_mut()[k] = orig;
            let n = (up - down) / (2.0 * eps);
            let e = rel_err(a, n);
            if e > worst.max_rel_err || k == 0 {
                worst.max_rel_err = e;
                worst.worst_index = k;
                worst.analytic = a;
                worst.numeric = n;
            }
        }
        report.push(worst);
    }
    Ok(report)
}
