//! Run configuration: `key = value` files, command-line overrides and
//! per-task defaults.
//!
//! Layers are applied lowest first, so a later layer wins. Defaults depend
//! on the task, which is itself taken from the highest layer that sets it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qrnn::autograd::TemporalPadding;
use qrnn::cells::QuantTargets;
use qrnn::models::CellKind;
use qrnn::training::{AdamConfig, LossKind, StatsScope, TrainConfig};
use qrnn::{DistShape, QuantScheme};

use crate::CliError;

pub const DATA_DIR_ENV: &str = "QRNN_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Sum,
    Sentiment,
    Frames,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Sum => "sum",
            Task::Sentiment => "sentiment",
            Task::Frames => "frames",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "sum" => Some(Task::Sum),
            "sentiment" => Some(Task::Sentiment),
            "frames" => Some(Task::Frames),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Lstm,
    Gru,
    ConvLstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::ConvLstm => "convlstm",
        }
    }

    pub fn cell(self) -> Option<CellKind> {
        match self {
            ModelKind::Lstm => Some(CellKind::Lstm),
            ModelKind::Gru => Some(CellKind::Gru),
            ModelKind::ConvLstm => None,
        }
    }
}

/// Every key accepted in config files and as `--key value` flags.
pub const KEYS: &[(&str, &str)] = &[
    ("task", "sum | sentiment | frames"),
    ("model", "lstm | gru (sum, sentiment) or convlstm (frames)"),
    ("scheme", "fp | bc | tc | qc"),
    ("shape", "normal | uniform threshold variant for tc and qc"),
    ("hidden", "hidden units, or hidden channels for convlstm"),
    ("epochs", "training epochs"),
    ("batch", "minibatch size"),
    ("seed", "seed for data generation, initialisation and shuffling"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("adam-eps", "Adam epsilon"),
    ("loss", "bce | mse"),
    ("grad-clip", "global gradient norm limit, or none"),
    ("stats-scope", "tensor | cell: where threshold statistics are pooled"),
    ("eval-quantized", "evaluate with quantized weights (true) or shadows (false)"),
    ("quantize-biases", "also quantize bias vectors"),
    ("quantize-embeddings", "also quantize the embedding table"),
    ("timing", "record wall-clock seconds per epoch in the report"),
    ("progress", "print one line per epoch on stderr"),
    ("data-dir", "dataset directory (default $QRNN_DATA_DIR, else ./data)"),
    ("out-dir", "output directory"),
    ("checkpoint", "checkpoint path (default <out-dir>/model.ckpt)"),
    ("train-samples", "training samples generated by gen-data"),
    ("test-samples", "test samples generated by gen-data"),
    ("val-samples", "test samples scored after every epoch (0 = none)"),
    ("max-digits", "operand digits for the sum task"),
    ("max-features", "sentiment vocabulary size"),
    ("maxlen", "sentiment sequence length"),
    ("embed-dim", "sentiment embedding width"),
    ("frame-size", "frame edge length in pixels"),
    ("frames", "frames per generated clip"),
    ("kernel", "convlstm kernel size (odd)"),
    ("temporal-padding", "causal | centered padding of the reconstruction conv"),
    ("glyphs", "IDX image file used for moving glyphs (empty = built-in)"),
    ("horizon", "frames predicted by rollout"),
    ("export", "clips written as PGM by rollout"),
    ("bins", "histogram bins"),
];

pub const BOOL_KEYS: &[&str] = &["eval-quantized", "quantize-biases", "quantize-embeddings", "timing", "progress"];

/// Keys describing where a run reads and writes, rather than what it is.
pub const PATH_KEYS: &[&str] = &["data-dir", "out-dir", "checkpoint"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelKind,
    pub scheme: QuantScheme,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossKind,
    pub grad_clip: Option<f64>,
    pub stats_scope: StatsScope,
    pub eval_quantized: bool,
    pub targets: QuantTargets,
    pub timing: bool,
    pub progress: bool,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub val_samples: usize,
    pub max_digits: usize,
    pub max_features: usize,
    pub maxlen: usize,
    pub embed_dim: usize,
    pub frame_size: usize,
    pub frames: usize,
    pub kernel: usize,
    pub temporal_padding: TemporalPadding,
    pub glyphs: Option<PathBuf>,
    pub horizon: usize,
    pub export: usize,
    pub bins: usize,
}

/// Named list of `(key, value)` settings, e.g. one config file.
#[derive(Clone, Debug, Default)]
pub struct Layer {
    pub source: String,
    pub entries: Vec<(String, String)>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Layer {
    pub fn new(source: impl Into<String>) -> Self {
        Layer {
            source: source.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((normalize(key), value.into()));
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut layer = Layer::new(source);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| {
                CliError::Core(qrnn::Error::Parse {
                    source_name: source.to_string(),
                    location: format!("line {}", i + 1),
                    message,
                })
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = normalize(k);
            if !known(&key) {
                return Err(err(format!("unknown key '{key}'")));
            }
            layer.entries.push((key, v.trim().to_string()));
        }
        Ok(layer)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| {
            CliError::Core(qrnn::Error::Io {
                path: path.to_path_buf(),
                source,
            })
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| usage(format!("--{key}: '{value}' is not a valid number")))
}

fn parse_count(key: &str, value: &str) -> Result<usize, CliError> {
    parse_num(key, value)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(usage(format!("--{key}: '{value}' is not a boolean"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Built-in defaults for `task`.
    pub fn defaults(task: Task) -> Self {
        let data_dir = std::env::var_os(DATA_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        let base = RunConfig {
            task,
            model: ModelKind::Lstm,
            scheme: QuantScheme::FullPrecision,
            hidden: 128,
            epochs: 350,
            batch: 32,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossKind::BinaryCrossEntropy,
            grad_clip: None,
            stats_scope: StatsScope::PerTensor,
            eval_quantized: true,
            targets: QuantTargets::default(),
            timing: false,
            progress: true,
            data_dir,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            train_samples: 1000,
            test_samples: 1000,
            val_samples: 0,
            max_digits: 2,
            max_features: 20_000,
            maxlen: 80,
            embed_dim: 128,
            frame_size: 64,
            frames: 15,
            kernel: 3,
            temporal_padding: TemporalPadding::Causal,
            glyphs: None,
            horizon: 3,
            export: 4,
            bins: 64,
        };
        match task {
            Task::Sum => base,
            Task::Sentiment => RunConfig {
                epochs: 20,
                batch: 64,
                train_samples: 25_000,
                test_samples: 25_000,
                ..base
            },
            Task::Frames => RunConfig {
                model: ModelKind::ConvLstm,
                hidden: 16,
                epochs: 50,
                batch: 4,
                train_samples: 256,
                test_samples: 64,
                ..base
            },
        }
    }

    /// Applies `layers` (lowest precedence first) over the task defaults
    /// and validates the result.
    pub fn resolve(layers: &[Layer]) -> Result<Self, CliError> {
        let task = match layers.iter().rev().find_map(|l| l.get("task")) {
            Some(t) => Task::parse(t).ok_or_else(|| usage(format!("--task: unknown task '{t}' (expected sum|sentiment|frames)")))?,
            None => Task::Sum,
        };
        let mut cfg = RunConfig::defaults(task);
        // The scheme's shape may be given before or after the scheme.
        let mut scheme_kind = "fp".to_string();
        let mut shape = DistShape::NormalLike;
        for layer in layers {
            for (k, v) in &layer.entries {
                match k.as_str() {
                    "scheme" => scheme_kind = v.clone(),
                    "shape" => {
                        shape = v
                            .parse()
                            .map_err(|_| usage(format!("--shape: unknown shape '{v}' (expected normal|uniform)")))?
                    }
                    _ => cfg.set(k, v)?,
                }
            }
        }
        cfg.scheme = QuantScheme::from_parts(&scheme_kind, shape).map_err(|e| usage(format!("--scheme: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its string form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = normalize(key);
        let v = value.trim();
        match key.as_str() {
            "task" => {
                self.task = Task::parse(v).ok_or_else(|| usage(format!("--task: unknown task '{v}'")))?;
            }
            "model" => {
                self.model = match v {
                    "lstm" => ModelKind::Lstm,
                    "gru" => ModelKind::Gru,
                    "convlstm" => ModelKind::ConvLstm,
                    _ => return Err(usage(format!("--model: unknown model '{v}' (expected lstm|gru|convlstm)"))),
                }
            }
            "scheme" => {
                let shape = self.scheme.shape().unwrap_or(DistShape::NormalLike);
                self.scheme = QuantScheme::from_parts(v, shape).map_err(|e| usage(format!("--scheme: {e}")))?;
            }
            "shape" => {
                let shape: DistShape = v.parse().map_err(|_| usage(format!("--shape: unknown shape '{v}'")))?;
                self.scheme = match self.scheme {
                    QuantScheme::TernaryConnect(_) => QuantScheme::TernaryConnect(shape),
                    QuantScheme::QuaternaryConnect(_) => QuantScheme::QuaternaryConnect(shape),
                    s => s,
                };
            }
            "hidden" => self.hidden = parse_count(&key, v)?,
            "epochs" => self.epochs = parse_count(&key, v)?,
            "batch" => self.batch = parse_count(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "lr" => self.adam.lr = parse_num(&key, v)?,
            "beta1" => self.adam.beta1 = parse_num(&key, v)?,
            "beta2" => self.adam.beta2 = parse_num(&key, v)?,
            "adam-eps" => self.adam.eps = parse_num(&key, v)?,
            "loss" => self.loss = LossKind::parse(v).map_err(|e| usage(format!("--loss: {e}")))?,
            "grad-clip" => {
                self.grad_clip = match v {
                    "" | "none" => None,
                    _ => Some(parse_num(&key, v)?),
                }
            }
            "stats-scope" => self.stats_scope = StatsScope::parse(v).map_err(|e| usage(format!("--stats-scope: {e}")))?,
            "eval-quantized" => self.eval_quantized = parse_bool(&key, v)?,
            "quantize-biases" => self.targets.biases = parse_bool(&key, v)?,
            "quantize-embeddings" => self.targets.embeddings = parse_bool(&key, v)?,
            "timing" => self.timing = parse_bool(&key, v)?,
            "progress" => self.progress = parse_bool(&key, v)?,
            "data-dir" => self.data_dir = PathBuf::from(v),
            "out-dir" => self.out_dir = PathBuf::from(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "train-samples" => self.train_samples = parse_count(&key, v)?,
            "test-samples" => self.test_samples = parse_count(&key, v)?,
            "val-samples" => self.val_samples = parse_count(&key, v)?,
            "max-digits" => self.max_digits = parse_count(&key, v)?,
            "max-features" => self.max_features = parse_count(&key, v)?,
            "maxlen" => self.maxlen = parse_count(&key, v)?,
            "embed-dim" => self.embed_dim = parse_count(&key, v)?,
            "frame-size" => self.frame_size = parse_count(&key, v)?,
            "frames" => self.frames = parse_count(&key, v)?,
            "kernel" => self.kernel = parse_count(&key, v)?,
            "temporal-padding" => {
                self.temporal_padding = match v {
                    "causal" => TemporalPadding::Causal,
                    "centered" => TemporalPadding::Centered,
                    _ => return Err(usage(format!("--temporal-padding: expected causal|centered, got '{v}'"))),
                }
            }
            "glyphs" => self.glyphs = opt_path(v),
            "horizon" => self.horizon = parse_count(&key, v)?,
            "export" => self.export = parse_count(&key, v)?,
            "bins" => self.bins = parse_count(&key, v)?,
            _ => return Err(usage(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let paired = match self.task {
            Task::Sum | Task::Sentiment => matches!(self.model, ModelKind::Lstm | ModelKind::Gru),
            Task::Frames => self.model == ModelKind::ConvLstm,
        };
        if !paired {
            let allowed = if self.task == Task::Frames { "convlstm" } else { "lstm|gru" };
            return Err(usage(format!(
                "task '{}' cannot use model '{}' (allowed: {allowed})",
                self.task.name(),
                self.model.name()
            )));
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("batch", self.batch),
            ("train-samples", self.train_samples),
            ("test-samples", self.test_samples),
            ("maxlen", self.maxlen),
            ("embed-dim", self.embed_dim),
            ("frame-size", self.frame_size),
        ] {
            if v == 0 {
                return Err(usage(format!("--{name} must be at least 1")));
            }
        }
        if self.val_samples > self.test_samples {
            return Err(usage("--val-samples cannot exceed --test-samples".into()));
        }
        if self.task == Task::Frames && self.frames < 10 {
            return Err(usage(format!("--frames must be at least 10, got {}", self.frames)));
        }
        self.train_config().validate().map_err(|e| usage(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            scheme: self.scheme,
            adam: self.adam,
            loss: self.loss,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            grad_clip: self.grad_clip,
            stats_scope: self.stats_scope,
            eval_quantized: self.eval_quantized,
            record_wall_time: self.timing,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        KEYS.iter()
            .map(|(k, _)| {
                let v = match *k {
                    "task" => self.task.name().to_string(),
                    "model" => self.model.name().to_string(),
                    "scheme" => self.scheme.short_name().to_string(),
                    "shape" => self.scheme.shape().unwrap_or(DistShape::NormalLike).name().to_string(),
                    "hidden" => self.hidden.to_string(),
                    "epochs" => self.epochs.to_string(),
                    "batch" => self.batch.to_string(),
                    "seed" => self.seed.to_string(),
                    "lr" => self.adam.lr.to_string(),
                    "beta1" => self.adam.beta1.to_string(),
                    "beta2" => self.adam.beta2.to_string(),
                    "adam-eps" => self.adam.eps.to_string(),
                    "loss" => self.loss.name().to_string(),
                    "grad-clip" => self.grad_clip.map_or("none".to_string(), |c| c.to_string()),
                    "stats-scope" => self.stats_scope.name().to_string(),
                    "eval-quantized" => self.eval_quantized.to_string(),
                    "quantize-biases" => self.targets.biases.to_string(),
                    "quantize-embeddings" => self.targets.embeddings.to_string(),
                    "timing" => self.timing.to_string(),
                    "progress" => self.progress.to_string(),
                    "data-dir" => self.data_dir.display().to_string(),
                    "out-dir" => self.out_dir.display().to_string(),
                    "checkpoint" => path(&self.checkpoint),
                    "train-samples" => self.train_samples.to_string(),
                    "test-samples" => self.test_samples.to_string(),
                    "val-samples" => self.val_samples.to_string(),
                    "max-digits" => self.max_digits.to_string(),
                    "max-features" => self.max_features.to_string(),
                    "maxlen" => self.maxlen.to_string(),
                    "embed-dim" => self.embed_dim.to_string(),
                    "frame-size" => self.frame_size.to_string(),
                    "frames" => self.frames.to_string(),
                    "kernel" => self.kernel.to_string(),
                    "temporal-padding" => match self.temporal_padding {
                        TemporalPadding::Causal => "causal".to_string(),
                        TemporalPadding::Centered => "centered".to_string(),
                    },
                    "glyphs" => path(&self.glyphs),
                    "horizon" => self.horizon.to_string(),
                    "export" => self.export.to_string(),
                    "bins" => self.bins.to_string(),
                    other => unreachable!("key {other} has no value"),
                };
                (k.to_string(), v)
            })
            .collect()
    }

    /// The resolved configuration as a config file.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Layer holding the configuration recorded in a checkpoint, without
    /// path settings.
    pub fn layer_from_meta(meta: &[(String, String)], source: &str) -> Layer {
        let mut layer = Layer::new(source);
        for (k, v) in meta {
            if let Some(key) = k.strip_prefix("config.") {
                if known(key) && !PATH_KEYS.contains(&key) {
                    layer.push(key, v.clone());
                }
            }
        }
        layer
    }

    pub fn to_meta(&self) -> Vec<(String, String)> {
        self.entries().into_iter().map(|(k, v)| (format!("config.{k}"), v)).collect()
    }
}
