//! Networks for the three experiments.

mod frames;
mod sentiment;
mod sum;

pub use frames::{rollout_frames, FrameConfig, FrameModel};
pub use sentiment::{SentimentConfig, SentimentModel};
pub use sum::{SumConfig, SumModel};

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::cells::{Binding, GruCell, GruWeights, LstmCell, LstmVars, LstmWeights, ParamSet, QuantTargets};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CellKind {
    #[default]
    Lstm,
    Gru,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown recurrent cell '{other}' (expected lstm|gru)"))),
        }
    }
}

/// An LSTM or GRU layer behind one interface.
#[derive(Clone, Debug)]
pub enum Recurrent {
    Lstm(LstmCell),
    Gru(GruCell),
}

#[derive(Clone, Copy, Debug)]
pub enum RecurrentWeights {
    Lstm(LstmWeights),
    Gru(GruWeights),
}

#[derive(Clone, Copy, Debug)]
pub enum RecurrentState {
    Lstm(LstmVars),
    Gru(Var),
}

impl RecurrentState {
    pub fn h(self) -> Var {
        match self {
            RecurrentState::Lstm(s) => s.h,
            RecurrentState::Gru(h) => h,
        }
    }
}

impl Recurrent {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        kind: CellKind,
        ps: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        targets: QuantTargets,
        rng: &mut R,
    ) -> Self {
        match kind {
            CellKind::Lstm => Recurrent::Lstm(LstmCell::new(ps, prefix, input, hidden, targets, rng)),
            CellKind::Gru => Recurrent::Gru(GruCell::new(ps, prefix, input, hidden, targets, rng)),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Recurrent::Lstm(c) => c.hidden,
            Recurrent::Gru(c) => c.hidden,
        }
    }

    pub fn prepare<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding) -> Result<RecurrentWeights> {
        Ok(match self {
            Recurrent::Lstm(c) => RecurrentWeights::Lstm(c.prepare(g, bind)?),
            Recurrent::Gru(c) => RecurrentWeights::Gru(c.prepare(g, bind)?),
        })
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> RecurrentState {
        match self {
            Recurrent::Lstm(c) => RecurrentState::Lstm(c.zero_state(g, batch)),
            Recurrent::Gru(c) => RecurrentState::Gru(c.zero_state(g, batch)),
        }
    }

    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        wts: &RecurrentWeights,
        x: Var,
        s: RecurrentState,
    ) -> Result<RecurrentState> {
        match (self, wts, s) {
            (Recurrent::Lstm(c), RecurrentWeights::Lstm(w), RecurrentState::Lstm(s)) => {
                Ok(RecurrentState::Lstm(c.step(g, w, x, s)?))
            }
            (Recurrent::Gru(c), RecurrentWeights::Gru(w), RecurrentState::Gru(h)) => {
                Ok(RecurrentState::Gru(c.step(g, w, x, h)?))
            }
            _ => Err(Error::State("recurrent weights or state belong to a different cell type".into())),
        }
    }
}

/// Index of the largest entry of `row`.
pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
