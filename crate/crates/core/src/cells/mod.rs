//! Recurrent cells and the layers around them.
//!
//! Every trainable tensor lives in a [`ParamSet`]; layers only hold
//! [`ParamId`]s into it. A forward pass first *binds* the set onto a
//! [`Graph`], producing one [`Var`] per parameter (the quantized image of
//! the shadow weights during training), and the layers then read their
//! weights from that binding.

mod convlstm;
mod gru;
mod layers;
mod lstm;
mod rnn;

pub use convlstm::{ConvLstmCell, ConvLstmState, ConvLstmVars, ConvLstmWeights};
pub use gru::{GruCell, GruState, GruWeights};
pub use layers::{BatchNorm, Dense, Embedding, Mode, Reconstruct3d};
pub use lstm::{LstmCell, LstmState, LstmVars, LstmWeights};
pub use rnn::RnnCell;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A trainable tensor: full-precision shadow value plus optimizer state.
#[derive(Clone, Debug)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub quantizable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, quantizable: bool) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            quantizable,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Ordered collection of all parameters of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T: Scalar> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, quantizable: bool) -> ParamId {
        self.params.push(Param::new(name, value, quantizable));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Binds the shadow values as trainable leaves, without quantization.
    pub fn bind(&self, g: &mut Graph<T>) -> Binding {
        Binding(self.params.iter().map(|p| g.param(p.value.clone())).collect())
    }

    /// Binds the shadow values as constants (no gradients).
    pub fn bind_constants(&self, g: &mut Graph<T>) -> Binding {
        Binding(self.params.iter().map(|p| g.constant(p.value.clone())).collect())
    }

    /// Replaces a parameter value, checking the shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape("set_value", p.value.shape(), value.shape()));
        }
        p.value = value;
        Ok(())
    }
}

/// Graph handles for every parameter of a [`ParamSet`], by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Binding(pub Vec<Var>);

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

impl std::ops::Index<ParamId> for Binding {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// Named gate-weight roles of one cell, e.g. `W_f`, `U_f`, `b_f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellParams(pub Vec<(&'static str, ParamId)>);

impl CellParams {
    pub fn get(&self, role: &str) -> Option<ParamId> {
        self.0.iter().find(|(r, _)| *r == role).map(|(_, id)| *id)
    }

    pub fn roles(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.0.iter().map(|(r, _)| *r)
    }
}

/// Which non-kernel parameters are quantized alongside the kernels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QuantTargets {
    pub biases: bool,
    pub embeddings: bool,
}

/// Glorot/Xavier uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, shape, limit)
}

pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], limit: f64) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
}

/// Promotes a rank-1 `[n]` tensor to a single-row batch `[1, n]`.
pub(crate) fn as_row<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    match x.rank() {
        1 => x.reshape(&[1, x.numel()]),
        _ => Ok(x.clone()),
    }
}

/// Undoes [`as_row`] when the caller passed an unbatched tensor.
pub(crate) fn restore_rank<T: Scalar>(t: &Tensor<T>, unbatched: bool) -> Tensor<T> {
    if unbatched {
        t.reshape(&t.shape()[1..]).expect("same element count")
    } else {
        t.clone()
    }
}
