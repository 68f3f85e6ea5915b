use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CellKind, Recurrent};
use crate::autograd::Graph;
use crate::cells::{Binding, Dense, Embedding, Mode, ParamSet, QuantTargets};
use crate::data::sentiment::SentimentSample;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::training::{Model, Prediction};

#[derive(Clone, Debug, PartialEq)]
pub struct SentimentConfig {
    pub cell: CellKind,
    pub max_features: usize,
    pub maxlen: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub targets: QuantTargets,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            cell: CellKind::Lstm,
            max_features: 20_000,
            maxlen: 80,
            embed_dim: 128,
            hidden: 128,
            targets: QuantTargets::default(),
        }
    }
}

/// Embedding → recurrent layer → dense → sigmoid on the final hidden state.
#[derive(Clone, Debug)]
pub struct SentimentModel<T: Scalar = f32> {
    pub cfg: SentimentConfig,
    ps: ParamSet<T>,
    embedding: Embedding,
    rnn: Recurrent,
    head: Dense,
}

impl<T: Scalar> SentimentModel<T> {
    pub fn new(cfg: SentimentConfig, seed: u64) -> Result<Self> {
        if cfg.max_features == 0 || cfg.maxlen == 0 || cfg.embed_dim == 0 || cfg.hidden == 0 {
            return Err(Error::Config("sentiment model dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let embedding = Embedding::new(&mut ps, "embedding", cfg.max_features, cfg.embed_dim, cfg.targets, &mut rng);
        let rnn = Recurrent::new(cfg.cell, &mut ps, "rnn", cfg.embed_dim, cfg.hidden, cfg.targets, &mut rng);
        let head = Dense::new(&mut ps, "head", cfg.hidden, 1, cfg.targets, &mut rng);
        Ok(SentimentModel {
            cfg,
            ps,
            embedding,
            rnn,
            head,
        })
    }
}

impl<T: Scalar> Model<T> for SentimentModel<T> {
    type Sample = SentimentSample;

    fn params(&self) -> &ParamSet<T> {
        &self.ps
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.ps
    }

    fn forward(
        &mut self,
        g: &mut Graph<T>,
        bind: &Binding,
        batch: &[&SentimentSample],
        _mode: Mode,
    ) -> Result<Prediction<T>> {
        let (n, len) = (batch.len(), self.cfg.maxlen);
        if let Some(bad) = batch.iter().find(|s| s.token_ids.len() != len) {
            return Err(Error::Data(format!(
                "sequence of length {} given to a model expecting {len}; preprocess first",
                bad.token_ids.len()
            )));
        }
        // One lookup for the whole batch, time-major, sliced per step.
        let ids: Vec<usize> = (0..len)
            .flat_map(|t| batch.iter().map(move |s| s.token_ids[t]))
            .collect();
        let embedded = self.embedding.lookup(g, bind, &ids)?;
        let wts = self.rnn.prepare(g, bind)?;
        let mut s = self.rnn.zero_state(g, n);
        for t in 0..len {
            let x = g.slice(embedded, 0, t * n, n)?;
            s = self.rnn.step(g, &wts, x, s)?;
        }
        let y = self.head.forward(g, bind, s.h())?;
        let pred = g.sigmoid(y);
        let target = Tensor::from_fn(&[n, 1], |b| T::of(batch[b].label as f64));
        Ok(Prediction { pred, target })
    }

    /// Accuracy with predictions thresholded at 0.5.
    fn score(&self, pred: &Tensor<T>, target: &Tensor<T>) -> (f64, usize) {
        let half = T::of(0.5);
        let hits = pred
            .data()
            .iter()
            .zip(target.data())
            .filter(|(&p, &t)| (p >= half) == (t >= half))
            .count();
        (hits as f64, pred.numel())
    }
}
