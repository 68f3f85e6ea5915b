//! Quantization-aware training.
//!
//! Every step quantizes the full-precision shadow of each quantizable
//! parameter from fresh statistics, runs the forward pass on the quantized
//! images, and hands the gradient with respect to each image straight to
//! its shadow, which Adam then updates. Quantized images only ever live on
//! the step's graph.

mod config;
mod loss;
mod optim;
mod report;

pub use config::{AdamConfig, LossKind, StatsScope, TrainConfig};
pub use loss::{bce_loss, loss_var, mse_frames};
pub use optim::{adam_step, clip_global_norm, Adam};
pub use report::{EpochRecord, NamedHistogram, TrainReport, REPORT_HEADER};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::cells::{Binding, Mode, ParamSet};
use crate::error::{Error, Result};
use crate::quantize::{quantize, quantize_with_stats, weight_histogram, QuantScheme};
use crate::tensor::{mean_std_slice, Scalar, Tensor};

/// Output of a model's forward pass: predictions and matching targets.
pub struct Prediction<T: Scalar> {
    pub pred: Var,
    pub target: Tensor<T>,
}

/// Loss and metric accumulated over one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchEval {
    pub loss: f64,
    pub metric_sum: f64,
    pub metric_count: usize,
}

pub trait Model<T: Scalar> {
    type Sample;

    fn params(&self) -> &ParamSet<T>;

    fn params_mut(&mut self) -> &mut ParamSet<T>;

    fn forward(
        &mut self,
        g: &mut Graph<T>,
        bind: &Binding,
        batch: &[&Self::Sample],
        mode: Mode,
    ) -> Result<Prediction<T>>;

    /// Sum and count of the task metric over a batch of predictions.
    fn score(&self, pred: &Tensor<T>, target: &Tensor<T>) -> (f64, usize);

    fn eval_batch(
        &mut self,
        g: &mut Graph<T>,
        bind: &Binding,
        batch: &[&Self::Sample],
        loss: LossKind,
    ) -> Result<BatchEval> {
        let p = self.forward(g, bind, batch, Mode::Eval)?;
        let l = loss_var(g, loss, p.pred, &p.target)?;
        let (metric_sum, metric_count) = self.score(g.value(p.pred), &p.target);
        Ok(BatchEval {
            loss: g.value(l).item().f64(),
            metric_sum,
            metric_count,
        })
    }

    /// Non-trainable state saved with checkpoints (e.g. running statistics).
    fn buffers(&self) -> Vec<(String, Tensor<T>)> {
        Vec::new()
    }

    fn set_buffer(&mut self, name: &str, _value: &Tensor<T>) -> Result<()> {
        Err(Error::Data(format!("model has no buffer named '{name}'")))
    }
}

/// Sees the graph right after the quantized weights are bound and the
/// forward pass is recorded.
pub trait StepObserver<T: Scalar> {
    fn on_forward(&mut self, ps: &ParamSet<T>, g: &Graph<T>, bind: &Binding);
}

impl<T: Scalar, F: FnMut(&ParamSet<T>, &Graph<T>, &Binding)> StepObserver<T> for F {
    fn on_forward(&mut self, ps: &ParamSet<T>, g: &Graph<T>, bind: &Binding) {
        self(ps, g, bind)
    }
}

fn cell_key(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

/// Quantized image of every parameter: `Some` for quantizable parameters
/// under a quantizing scheme, `None` where the shadow is used as is.
pub fn quantized_images<T: Scalar>(
    ps: &ParamSet<T>,
    scheme: QuantScheme,
    scope: StatsScope,
) -> Result<Vec<Option<Tensor<T>>>> {
    if scheme == QuantScheme::FullPrecision {
        return Ok(vec![None; ps.len()]);
    }
    let pooled = match scope {
        StatsScope::PerTensor => BTreeMap::new(),
        StatsScope::PerCell => {
            let mut groups: BTreeMap<&str, Vec<T>> = BTreeMap::new();
            for p in ps.iter().filter(|p| p.quantizable) {
                groups
                    .entry(cell_key(&p.name))
                    .or_default()
                    .extend_from_slice(p.value.data());
            }
            groups
                .into_iter()
                .map(|(k, v)| mean_std_slice(&v).map(|s| (k, s)))
                .collect::<Result<BTreeMap<_, _>>>()?
        }
    };
    ps.iter()
        .map(|p| {
            if !p.quantizable {
                return Ok(None);
            }
            let q = match pooled.get(cell_key(&p.name)) {
                Some(&(mu, sigma)) => quantize_with_stats(&p.value, scheme, mu, sigma)?,
                None => quantize(&p.value, scheme)?,
            };
            Ok(Some(q))
        })
        .collect()
}

/// Binds parameters on `g`, substituting quantized images. With
/// `trainable` the bound values are gradient leaves.
pub fn bind_quantized<T: Scalar>(
    g: &mut Graph<T>,
    ps: &ParamSet<T>,
    scheme: QuantScheme,
    scope: StatsScope,
    trainable: bool,
) -> Result<Binding> {
    let images = quantized_images(ps, scheme, scope)?;
    let vars = ps
        .iter()
        .zip(images)
        .map(|(p, q)| {
            let v = q.unwrap_or_else(|| p.value.clone());
            if trainable {
                g.param(v)
            } else {
                g.constant(v)
            }
        })
        .collect();
    Ok(Binding(vars))
}

/// Loss and batch metric of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub metric_sum: f64,
    pub metric_count: usize,
}

fn non_finite_diagnostics<T: Scalar>(ps: &ParamSet<T>) -> String {
    let bad: Vec<&str> = ps
        .iter()
        .filter(|p| !p.value.all_finite())
        .map(|p| p.name.as_str())
        .collect();
    let max_abs = ps
        .iter()
        .flat_map(|p| p.value.data().iter())
        .map(|v| v.f64().abs())
        .fold(0.0, f64::max);
    if bad.is_empty() {
        format!("all parameters finite, max |w| = {max_abs:e}")
    } else {
        format!("non-finite parameters: {}", bad.join(", "))
    }
}

/// Training driver: configuration, optimizer state and an optional
/// instrumentation hook.
pub struct Trainer<'o, T: Scalar> {
    pub cfg: TrainConfig,
    pub adam: Adam,
    rng: ChaCha8Rng,
    observer: Option<Box<dyn StepObserver<T> + 'o>>,
}

impl<'o, T: Scalar> Trainer<'o, T> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer {
            adam: Adam::new(cfg.adam),
            cfg,
            rng,
            observer: None,
        })
    }

    pub fn with_observer(mut self, observer: impl StepObserver<T> + 'o) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    pub fn steps(&self) -> u64 {
        self.adam.t
    }

    /// One quantize → forward → backward → update step.
    pub fn train_step<M: Model<T>>(&mut self, model: &mut M, batch: &[&M::Sample]) -> Result<StepOutcome> {
        let cfg = &self.cfg;
        let mut g = Graph::new();
        let bind = bind_quantized(&mut g, model.params(), cfg.scheme, cfg.stats_scope, true)?;
        let p = model.forward(&mut g, &bind, batch, Mode::Train)?;
        let loss = loss_var(&mut g, cfg.loss, p.pred, &p.target)?;
        if let Some(obs) = self.observer.as_mut() {
            obs.on_forward(model.params(), &g, &bind);
        }
        let value = g.value(loss).item().f64();
        if !value.is_finite() {
            return Err(Error::Training(format!(
                "loss became {value} at step {} ({})",
                self.adam.t + 1,
                non_finite_diagnostics(model.params())
            )));
        }
        let (metric_sum, metric_count) = model.score(g.value(p.pred), &p.target);
        g.backward(loss)?;
        // Straight-through: the gradient with respect to the quantized image
        // becomes the gradient of the shadow.
        for (param, &v) in model.params_mut().iter_mut().zip(&bind.0) {
            param.grad = g.grad_or_zeros(v);
        }
        if let Some(c) = cfg.grad_clip {
            clip_global_norm(model.params_mut(), c);
        }
        self.adam.step(model.params_mut());
        Ok(StepOutcome {
            loss: value,
            metric_sum,
            metric_count,
        })
    }

    /// Trains for `cfg.epochs` epochs, shuffling `train` each epoch and
    /// evaluating on `val` after each. `on_epoch` may stop training early
    /// by returning `false`.
    pub fn fit<M: Model<T>>(
        &mut self,
        model: &mut M,
        train: &[M::Sample],
        val: &[M::Sample],
        mut on_epoch: impl FnMut(&EpochRecord) -> bool,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Domain("training set is empty".into()));
        }
        let mut report = TrainReport::default();
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=self.cfg.epochs {
            let start = Instant::now();
            order.shuffle(&mut self.rng);
            let (mut loss_sum, mut metric_sum, mut metric_count) = (0.0, 0.0, 0usize);
            for chunk in order.chunks(self.cfg.batch_size) {
                let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &train[i]).collect();
                let out = self.train_step(model, &batch)?;
                loss_sum += out.loss * batch.len() as f64;
                metric_sum += out.metric_sum;
                metric_count += out.metric_count;
            }
            let (val_loss, val_metric) = if val.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                evaluate(model, val, &self.cfg)?
            };
            let seconds = if self.cfg.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            let record = EpochRecord {
                epoch,
                train_loss: loss_sum / train.len() as f64,
                train_metric: metric_sum / metric_count.max(1) as f64,
                val_loss,
                val_metric,
                seconds,
            };
            let go_on = on_epoch(&record);
            report.epochs.push(record);
            if !go_on {
                break;
            }
        }
        report.histograms = quantized_histograms(model.params(), self.cfg.scheme, self.cfg.stats_scope, 64)?;
        Ok(report)
    }
}

/// Single training step with a caller-owned optimizer, without hooks.
pub fn train_step<T: Scalar, M: Model<T>>(
    model: &mut M,
    batch: &[&M::Sample],
    cfg: &TrainConfig,
    adam: &mut Adam,
) -> Result<f64> {
    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.adam = std::mem::take(adam);
    let out = trainer.train_step(model, batch);
    *adam = trainer.adam;
    out.map(|o| o.loss)
}

/// Mean loss and metric over `data`, in batches of `cfg.batch_size`.
///
/// Weights are quantized with the training scheme unless
/// `cfg.eval_quantized` is off; batch norm uses running statistics.
pub fn evaluate<T: Scalar, M: Model<T>>(model: &mut M, data: &[M::Sample], cfg: &TrainConfig) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    let scheme = if cfg.eval_quantized {
        cfg.scheme
    } else {
        QuantScheme::FullPrecision
    };
    let images = quantized_images(model.params(), scheme, cfg.stats_scope)?;
    let (mut loss_sum, mut metric_sum, mut metric_count) = (0.0, 0.0, 0usize);
    for chunk in data.chunks(cfg.batch_size.max(1)) {
        let batch: Vec<&M::Sample> = chunk.iter().collect();
        let mut g = Graph::new();
        let vars = model
            .params()
            .iter()
            .zip(&images)
            .map(|(p, q)| g.constant(q.clone().unwrap_or_else(|| p.value.clone())))
            .collect();
        let bind = Binding(vars);
        let out = model.eval_batch(&mut g, &bind, &batch, cfg.loss)?;
        loss_sum += out.loss * batch.len() as f64;
        metric_sum += out.metric_sum;
        metric_count += out.metric_count;
    }
    Ok((loss_sum / data.len() as f64, metric_sum / metric_count.max(1) as f64))
}

/// Histograms of the forward-pass weights (quantized images, or shadows
/// under full precision) of every quantizable parameter.
pub fn quantized_histograms<T: Scalar>(
    ps: &ParamSet<T>,
    scheme: QuantScheme,
    scope: StatsScope,
    bins: usize,
) -> Result<Vec<NamedHistogram>> {
    let images = quantized_images(ps, scheme, scope)?;
    ps.iter()
        .zip(images)
        .filter(|(p, _)| p.quantizable)
        .map(|(p, q)| {
            let w = q.as_ref().unwrap_or(&p.value);
            Ok(NamedHistogram {
                name: p.name.clone(),
                bins: weight_histogram(w, bins)?,
            })
        })
        .collect()
}
