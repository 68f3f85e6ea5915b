use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, CellKind, Recurrent};
use crate::autograd::Graph;
use crate::cells::{Binding, Dense, Mode, ParamSet, QuantTargets};
use crate::data::sum::{input_width, pad_target, target_width, SumSample, VOCAB};
use crate::error::{Error, Result};
use crate::quantize::QuantScheme;
use crate::tensor::{Scalar, Tensor};
use crate::training::{bind_quantized, Model, Prediction, StatsScope};

#[derive(Clone, Debug, PartialEq)]
pub struct SumConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub max_digits: usize,
    pub targets: QuantTargets,
}

impl Default for SumConfig {
    fn default() -> Self {
        SumConfig {
            cell: CellKind::Lstm,
            hidden: 128,
            max_digits: 2,
            targets: QuantTargets::default(),
        }
    }
}

/// Encoder–decoder for `"a+b" → "a+b evaluated"`.
///
/// The encoder reads the one-hot expression; its final hidden state is fed
/// to the decoder at every output position, and a dense layer with sigmoid
/// scores the 12 symbols at each position.
#[derive(Clone, Debug)]
pub struct SumModel<T: Scalar = f32> {
    pub cfg: SumConfig,
    ps: ParamSet<T>,
    encoder: Recurrent,
    decoder: Recurrent,
    head: Dense,
}

impl<T: Scalar> SumModel<T> {
    pub fn new(cfg: SumConfig, seed: u64) -> Result<Self> {
        if cfg.hidden == 0 || cfg.max_digits == 0 {
            return Err(Error::Config("hidden size and max_digits must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let encoder = Recurrent::new(cfg.cell, &mut ps, "encoder", VOCAB, cfg.hidden, cfg.targets, &mut rng);
        let decoder = Recurrent::new(cfg.cell, &mut ps, "decoder", cfg.hidden, cfg.hidden, cfg.targets, &mut rng);
        let head = Dense::new(&mut ps, "head", cfg.hidden, VOCAB, cfg.targets, &mut rng);
        Ok(SumModel {
            cfg,
            ps,
            encoder,
            decoder,
            head,
        })
    }

    fn one_hot_step(batch: &[&SumSample], t: usize) -> Tensor<T> {
        let mut x = Tensor::zeros(&[batch.len(), VOCAB]);
        for (b, s) in batch.iter().enumerate() {
            x.data_mut()[b * VOCAB + s.input_ids[t]] = T::one();
        }
        x
    }

    /// Predicted symbol ids per sample, including trailing padding.
    pub fn predict(&mut self, samples: &[SumSample], scheme: QuantScheme, scope: StatsScope) -> Result<Vec<Vec<usize>>> {
        let refs: Vec<&SumSample> = samples.iter().collect();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in refs.chunks(256) {
            let mut g = Graph::new();
            let bind = bind_quantized(&mut g, &self.ps, scheme, scope, false)?;
            let p = self.forward(&mut g, &bind, chunk, Mode::Eval)?;
            let v = g.value(p.pred);
            let steps = v.shape()[1];
            for row in v.data().chunks(steps * VOCAB) {
                out.push(row.chunks(VOCAB).map(argmax).collect());
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> Model<T> for SumModel<T> {
    type Sample = SumSample;

    fn params(&self) -> &ParamSet<T> {
        &self.ps
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.ps
    }

    fn forward(&mut self, g: &mut Graph<T>, bind: &Binding, batch: &[&SumSample], _mode: Mode) -> Result<Prediction<T>> {
        let (tin, tout) = (input_width(self.cfg.max_digits), target_width(self.cfg.max_digits));
        let n = batch.len();
        let malformed = |s: &&&SumSample| {
            s.input_ids.len() != tin
                || s.target_ids.len() > tout
                || s.input_ids.iter().chain(&s.target_ids).any(|&i| i >= VOCAB)
        };
        if let Some(bad) = batch.iter().find(malformed) {
            return Err(Error::Data(format!(
                "sample with {} input and {} target symbols does not match max_digits {}",
                bad.input_ids.len(),
                bad.target_ids.len(),
                self.cfg.max_digits
            )));
        }
        let enc = self.encoder.prepare(g, bind)?;
        let mut s = self.encoder.zero_state(g, n);
        for t in 0..tin {
            let x = g.constant(Self::one_hot_step(batch, t));
            s = self.encoder.step(g, &enc, x, s)?;
        }
        let summary = s.h();
        let dec = self.decoder.prepare(g, bind)?;
        let mut d = self.decoder.zero_state(g, n);
        let mut outs = Vec::with_capacity(tout);
        for _ in 0..tout {
            d = self.decoder.step(g, &dec, summary, d)?;
            let y = self.head.forward(g, bind, d.h())?;
            let y = g.sigmoid(y);
            outs.push(g.reshape(y, &[n, 1, VOCAB])?);
        }
        let pred = g.concat(&outs, 1)?;
        let mut target = Tensor::zeros(&[n, tout, VOCAB]);
        for (b, sample) in batch.iter().enumerate() {
            for (t, id) in pad_target(&sample.target_ids, tout).into_iter().enumerate() {
                target.data_mut()[(b * tout + t) * VOCAB + id] = T::one();
            }
        }
        Ok(Prediction { pred, target })
    }

    /// Whole-sequence accuracy: every position's arg-max must match.
    fn score(&self, pred: &Tensor<T>, target: &Tensor<T>) -> (f64, usize) {
        let s = pred.shape();
        let per = s[1] * s[2];
        let hits = pred
            .data()
            .chunks(per)
            .zip(target.data().chunks(per))
            .filter(|(p, t)| p.chunks(s[2]).zip(t.chunks(s[2])).all(|(a, b)| argmax(a) == argmax(b)))
            .count();
        (hits as f64, s[0])
    }
}
