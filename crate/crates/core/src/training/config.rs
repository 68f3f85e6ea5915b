use crate::error::{Error, Result};
use crate::quantize::QuantScheme;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    BinaryCrossEntropy,
    MeanSquaredError,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::BinaryCrossEntropy => "bce",
            LossKind::MeanSquaredError => "mse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossKind::BinaryCrossEntropy),
            "mse" => Ok(LossKind::MeanSquaredError),
            other => Err(Error::Config(format!("unknown loss '{other}' (expected bce|mse)"))),
        }
    }
}

/// Granularity of the μ, σ statistics behind the ternary and quaternary
/// thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StatsScope {
    /// Each weight tensor uses its own statistics.
    #[default]
    PerTensor,
    /// Statistics are pooled over all quantizable tensors that share a
    /// name prefix (the text before the first `.`), i.e. one cell.
    PerCell,
}

impl StatsScope {
    pub fn name(self) -> &'static str {
        match self {
            StatsScope::PerTensor => "tensor",
            StatsScope::PerCell => "cell",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tensor" => Ok(StatsScope::PerTensor),
            "cell" => Ok(StatsScope::PerCell),
            other => Err(Error::Config(format!("unknown stats scope '{other}' (expected tensor|cell)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub scheme: QuantScheme,
    pub adam: AdamConfig,
    pub loss: LossKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global-norm gradient clip.
    pub grad_clip: Option<f64>,
    pub stats_scope: StatsScope,
    /// Evaluate with quantized weights (the default) or full precision.
    pub eval_quantized: bool,
    /// Record wall-clock seconds per epoch. Off by default so reports are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: QuantScheme::FullPrecision,
            adam: AdamConfig::default(),
            loss: LossKind::BinaryCrossEntropy,
            batch_size: 64,
            epochs: 1,
            seed: 0,
            grad_clip: None,
            stats_scope: StatsScope::PerTensor,
            eval_quantized: true,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", a.lr)));
        }
        for (name, b) in [("beta1", a.beta1), ("beta2", a.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(a.eps > 0.0) {
            return Err(Error::Config(format!("adam epsilon must be positive, got {}", a.eps)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("gradient clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}
