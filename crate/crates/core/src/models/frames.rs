use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, TemporalPadding, Var};
use crate::cells::{BatchNorm, Binding, ConvLstmCell, ConvLstmWeights, Mode, ParamSet, QuantTargets, Reconstruct3d};
use crate::data::frames::{FrameSequence, CONTEXT_FRAMES, PREDICTED_FRAMES};
use crate::error::{Error, Result};
use crate::quantize::QuantScheme;
use crate::tensor::{Scalar, Tensor};
use crate::training::{bind_quantized, loss_var, mse_frames, BatchEval, LossKind, Model, Prediction, StatsScope};

#[derive(Clone, Debug, PartialEq)]
pub struct FrameConfig {
    pub size: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    /// Padding of the temporal axis in the reconstruction convolution.
    /// Causal padding keeps a teacher-forced prediction from seeing the
    /// frame it predicts.
    pub padding: TemporalPadding,
    pub targets: QuantTargets,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            size: 64,
            hidden_channels: 16,
            kernel: 3,
            padding: TemporalPadding::Causal,
            targets: QuantTargets::default(),
        }
    }
}

/// ConvLSTM → batch norm → 3-D reconstruction with sigmoid output.
///
/// Trained teacher-forced: frames 1–7 in, frames 2–8 out. Evaluated by
/// autoregressive rollout of frames 8–10 from frames 1–7.
#[derive(Clone, Debug)]
pub struct FrameModel<T: Scalar = f32> {
    pub cfg: FrameConfig,
    ps: ParamSet<T>,
    cell: ConvLstmCell,
    bn: BatchNorm,
    rec: Reconstruct3d,
}

// Temporal extent of the reconstruction kernel.
const WINDOW: usize = 3;

impl<T: Scalar> FrameModel<T> {
    pub fn new(cfg: FrameConfig, seed: u64) -> Result<Self> {
        if cfg.size == 0 || cfg.hidden_channels == 0 {
            return Err(Error::Config("frame model dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let c = cfg.hidden_channels;
        let cell = ConvLstmCell::new(&mut ps, "convlstm", 1, c, cfg.kernel, (cfg.size, cfg.size), cfg.targets, &mut rng)?;
        let bn = BatchNorm::new(&mut ps, "bn", c);
        let rec = Reconstruct3d::new(&mut ps, "reconstruct", c, cfg.padding, cfg.targets, &mut rng);
        Ok(FrameModel { cfg, ps, cell, bn, rec })
    }

    fn check(&self, batch: &[&FrameSequence], need: usize) -> Result<()> {
        for s in batch {
            let sh = s.frames.shape();
            if sh[0] < need || sh[1] != self.cfg.size || sh[2] != self.cfg.size {
                return Err(Error::shape("frame_model", sh, &[need, self.cfg.size, self.cfg.size]));
            }
        }
        Ok(())
    }

    /// Frame `t` of every clip, `[B, 1, H, W]`.
    fn frame_batch(batch: &[&FrameSequence], t: usize) -> Tensor<T> {
        let s = batch[0].frames.shape();
        let per = s[1] * s[2];
        let mut data = Vec::with_capacity(batch.len() * per);
        for seq in batch {
            data.extend(seq.frames.data()[t * per..(t + 1) * per].iter().map(|&v| T::of(v as f64)));
        }
        Tensor::from_vec(&[batch.len(), 1, s[1], s[2]], data)
    }

    /// Batch norm and reconstruction over a run of hidden states.
    fn head(&mut self, g: &mut Graph<T>, bind: &Binding, hs: &[Var], mode: Mode) -> Result<Var> {
        let mut slabs = Vec::with_capacity(hs.len());
        for &h in hs {
            let s = g.value(h).shape().to_vec();
            slabs.push(g.reshape(h, &[s[0], s[1], 1, s[2], s[3]])?);
        }
        let seq = g.concat(&slabs, 2)?;
        let normed = self.bn.forward(g, bind, seq, mode)?;
        self.rec.forward(g, bind, normed)
    }

    /// Runs the context frames, then predicts `horizon` frames feeding each
    /// prediction back in. Returns one `[B, 1, H, W]` var per predicted frame.
    fn rollout_vars(
        &mut self,
        g: &mut Graph<T>,
        bind: &Binding,
        wts: &ConvLstmWeights,
        context: Vec<Tensor<T>>,
        horizon: usize,
    ) -> Result<Vec<Var>> {
        let n = context[0].shape()[0];
        let (size, c) = (self.cfg.size, self.cfg.hidden_channels);
        let mut s = self.cell.zero_state(g, n);
        let mut hs = Vec::new();
        for x in context {
            let x = g.constant(x);
            s = self.cell.step(g, wts, x, s)?;
            hs.push(s.h);
        }
        let mut preds = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let window = &hs[hs.len().saturating_sub(WINDOW)..];
            let y = self.head(g, bind, window, Mode::Eval)?;
            let last = g.slice(y, 2, window.len() - 1, 1)?;
            let frame = g.reshape(last, &[n, 1, size, size])?;
            preds.push(frame);
            if k + 1 < horizon {
                s = self.cell.step(g, wts, frame, s)?;
                hs.push(s.h);
            }
        }
        debug_assert!(hs.iter().all(|&h| g.value(h).shape()[1] == c));
        Ok(preds)
    }

    /// Rolls out `horizon` frames after the first seven frames of each clip,
    /// returning one `[horizon × H × W]` tensor per clip.
    pub fn predict_rollout(
        &mut self,
        clips: &[FrameSequence],
        horizon: usize,
        scheme: QuantScheme,
        scope: StatsScope,
    ) -> Result<Vec<Tensor<f32>>> {
        let refs: Vec<&FrameSequence> = clips.iter().collect();
        self.check(&refs, CONTEXT_FRAMES)?;
        let size = self.cfg.size;
        let mut out = Vec::with_capacity(clips.len());
        if horizon == 0 {
            return Ok(out);
        }
        for chunk in refs.chunks(16) {
            let mut g = Graph::new();
            let bind = bind_quantized(&mut g, &self.ps, scheme, scope, false)?;
            let wts = self.cell.prepare(&mut g, &bind)?;
            let ctx = (0..CONTEXT_FRAMES).map(|t| Self::frame_batch(chunk, t)).collect();
            let preds = self.rollout_vars(&mut g, &bind, &wts, ctx, horizon)?;
            let per = size * size;
            for b in 0..chunk.len() {
                let mut data = Vec::with_capacity(horizon * per);
                for &p in &preds {
                    data.extend(g.value(p).data()[b * per..(b + 1) * per].iter().map(|v| v.f64() as f32));
                }
                out.push(Tensor::from_vec(&[horizon, size, size], data));
            }
        }
        Ok(out)
    }
}

/// Feeds `seed_frames[T₀ × H × W]` through the network and predicts
/// `horizon` further frames autoregressively.
pub fn rollout_frames(
    model: &mut FrameModel<f32>,
    seed_frames: &Tensor<f32>,
    horizon: usize,
    scheme: QuantScheme,
    scope: StatsScope,
) -> Result<Vec<Tensor<f32>>> {
    let s = seed_frames.shape();
    let size = model.cfg.size;
    if s.len() != 3 || s[0] == 0 || s[1] != size || s[2] != size {
        return Err(Error::shape("rollout_frames", s, &[1, size, size]));
    }
    if horizon == 0 {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let bind = bind_quantized(&mut g, &model.ps, scheme, scope, false)?;
    let wts = model.cell.prepare(&mut g, &bind)?;
    let ctx = (0..s[0])
        .map(|t| seed_frames.index_leading(t)?.reshape(&[1, 1, size, size]))
        .collect::<Result<Vec<_>>>()?;
    let preds = model.rollout_vars(&mut g, &bind, &wts, ctx, horizon)?;
    preds
        .into_iter()
        .map(|p| g.value(p).reshape(&[size, size]))
        .collect()
}

impl<T: Scalar> Model<T> for FrameModel<T> {
    type Sample = FrameSequence;

    fn params(&self) -> &ParamSet<T> {
        &self.ps
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.ps
    }

    /// Teacher-forced prediction of frames 2–8 from frames 1–7,
    /// `[B, 1, 7, H, W]`.
    fn forward(&mut self, g: &mut Graph<T>, bind: &Binding, batch: &[&FrameSequence], mode: Mode) -> Result<Prediction<T>> {
        self.check(batch, CONTEXT_FRAMES + 1)?;
        let n = batch.len();
        let size = self.cfg.size;
        let wts = self.cell.prepare(g, bind)?;
        let mut s = self.cell.zero_state(g, n);
        let mut hs = Vec::with_capacity(CONTEXT_FRAMES);
        for t in 0..CONTEXT_FRAMES {
            let x = g.constant(Self::frame_batch(batch, t));
            s = self.cell.step(g, &wts, x, s)?;
            hs.push(s.h);
        }
        let pred = self.head(g, bind, &hs, mode)?;
        let per = size * size;
        let mut target = Vec::with_capacity(n * CONTEXT_FRAMES * per);
        for seq in batch {
            let d = seq.frames.data();
            target.extend(d[per..(CONTEXT_FRAMES + 1) * per].iter().map(|&v| T::of(v as f64)));
        }
        let target = Tensor::from_vec(&[n, 1, CONTEXT_FRAMES, size, size], target);
        Ok(Prediction { pred, target })
    }

    /// Sum of per-frame mean squared errors and the number of frames.
    fn score(&self, pred: &Tensor<T>, target: &Tensor<T>) -> (f64, usize) {
        let s = pred.shape();
        let per = s[s.len() - 2] * s[s.len() - 1];
        let frames = pred.numel() / per;
        let sum = pred
            .data()
            .chunks(per)
            .zip(target.data().chunks(per))
            .map(|(p, t)| {
                p.iter()
                    .zip(t)
                    .map(|(a, b)| {
                        let d = a.f64() - b.f64();
                        d * d
                    })
                    .sum::<f64>()
                    / per as f64
            })
            .sum();
        (sum, frames)
    }

    /// Teacher-forced loss, and rollout error on frames 8–10 as the metric.
    fn eval_batch(&mut self, g: &mut Graph<T>, bind: &Binding, batch: &[&FrameSequence], loss: LossKind) -> Result<BatchEval> {
        self.check(batch, CONTEXT_FRAMES + PREDICTED_FRAMES)?;
        let p = self.forward(g, bind, batch, Mode::Eval)?;
        let l = loss_var(g, loss, p.pred, &p.target)?;
        let wts = self.cell.prepare(g, bind)?;
        let ctx = (0..CONTEXT_FRAMES).map(|t| Self::frame_batch(batch, t)).collect();
        let preds = self.rollout_vars(g, bind, &wts, ctx, PREDICTED_FRAMES)?;
        let mut metric_sum = 0.0;
        for (k, &pv) in preds.iter().enumerate() {
            let truth = Self::frame_batch(batch, CONTEXT_FRAMES + k);
            let pred = g.value(pv);
            let per = self.cfg.size * self.cfg.size;
            for b in 0..batch.len() {
                let a = Tensor::from_vec(&[per], pred.data()[b * per..(b + 1) * per].to_vec());
                let t = Tensor::from_vec(&[per], truth.data()[b * per..(b + 1) * per].to_vec());
                metric_sum += mse_frames(&a, &t)?;
            }
        }
        Ok(BatchEval {
            loss: g.value(l).item().f64(),
            metric_sum,
            metric_count: batch.len() * PREDICTED_FRAMES,
        })
    }

    fn buffers(&self) -> Vec<(String, Tensor<T>)> {
        let c = self.cfg.hidden_channels;
        let conv = |v: &[f64]| Tensor::from_fn(&[c], |i| T::of(v[i]));
        vec![
            ("bn.running_mean".into(), conv(&self.bn.running_mean)),
            ("bn.running_var".into(), conv(&self.bn.running_var)),
        ]
    }

    fn set_buffer(&mut self, name: &str, value: &Tensor<T>) -> Result<()> {
        let slot = match name {
            "bn.running_mean" => &mut self.bn.running_mean,
            "bn.running_var" => &mut self.bn.running_var,
            other => return Err(Error::Data(format!("model has no buffer named '{other}'"))),
        };
        if value.shape() != [slot.len()] {
            return Err(Error::shape("set_buffer", value.shape(), &[slot.len()]));
        }
        *slot = value.to_f64_vec();
        Ok(())
    }
}
