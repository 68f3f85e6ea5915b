//! Implementations of the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qrnn::cells::ParamSet;
use qrnn::checkpoint::{Checkpoint, EntryKind};
use qrnn::data::frames::{glyphs_from_images, CONTEXT_FRAMES};
use qrnn::data::pgm::write_pgm;
use qrnn::data::sentiment::{write_sentiment, SyntheticCorpus};
use qrnn::data::{
    gen_sum_dataset, load_frames, load_idx, load_sentiment, load_sums, per_frame_mse, preprocess, save_frames,
    write_sums, FrameSequence, MovingDigits,
};
use qrnn::models::{FrameConfig, FrameModel, SentimentConfig, SentimentModel, SumConfig, SumModel};
use qrnn::quantize::write_histogram_csv;
use qrnn::training::{evaluate, quantized_histograms, quantized_images, Model, Trainer};
use qrnn::{Error, QuantScheme, Tensor};

use crate::config::{Layer, ModelKind, RunConfig, Task};
use crate::{CliError, CliResult};

/// Seed of the test split, derived from the run seed.
pub fn test_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Train and test dataset paths of `cfg.task` under `cfg.data_dir`.
pub fn data_files(cfg: &RunConfig) -> (PathBuf, PathBuf) {
    let (stem, ext) = match cfg.task {
        Task::Sum => ("sum", "txt"),
        Task::Sentiment => ("sentiment", "tsv"),
        Task::Frames => ("frames", "ckpt"),
    };
    (
        cfg.data_dir.join(format!("{stem}_train.{ext}")),
        cfg.data_dir.join(format!("{stem}_test.{ext}")),
    )
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn glyphs(cfg: &RunConfig, gen: &MovingDigits) -> CliResult<Option<Vec<Tensor<f32>>>> {
    match &cfg.glyphs {
        Some(path) => Ok(Some(glyphs_from_images(&load_idx(path)?, gen.glyph_px())?)),
        None => Ok(None),
    }
}

fn frame_generator(cfg: &RunConfig) -> MovingDigits {
    MovingDigits::scaled(cfg.frame_size, cfg.frames)
}

pub fn gen_data(cfg: &RunConfig) -> CliResult<String> {
    create_dir(&cfg.data_dir)?;
    let (train_path, test_path) = data_files(cfg);
    let splits = [
        (&train_path, cfg.train_samples, cfg.seed),
        (&test_path, cfg.test_samples, test_seed(cfg.seed)),
    ];
    let mut out = String::new();
    match cfg.task {
        Task::Sum => {
            for (path, n, seed) in splits {
                write_sums(path, &gen_sum_dataset(n, cfg.max_digits, seed)?)?;
                let _ = writeln!(out, "wrote {} ({n} samples)", path.display());
            }
        }
        Task::Sentiment => {
            let corpus = SyntheticCorpus::default();
            for (path, n, seed) in splits {
                write_sentiment(path, &corpus.generate(n, seed)?)?;
                let _ = writeln!(out, "wrote {} ({n} samples)", path.display());
            }
        }
        Task::Frames => {
            let gen = frame_generator(cfg);
            let glyphs = glyphs(cfg, &gen)?;
            for (path, n, seed) in splits {
                let clips = gen.generate(n, seed, glyphs.as_deref())?;
                let meta = vec![
                    ("size".to_string(), cfg.frame_size.to_string()),
                    ("frames".to_string(), cfg.frames.to_string()),
                    ("seed".to_string(), seed.to_string()),
                ];
                save_frames(path, &clips, meta)?;
                let _ = writeln!(out, "wrote {} ({n} samples)", path.display());
            }
        }
    }
    Ok(out)
}

fn load_frame_split(cfg: &RunConfig, path: &Path) -> CliResult<Vec<FrameSequence>> {
    let clips = load_frames(path)?;
    if let Some(c) = clips.first() {
        let s = c.frames.shape();
        if s[1] != cfg.frame_size || s[2] != cfg.frame_size {
            return Err(Error::Data(format!(
                "{} holds {}x{} frames but frame-size is {}",
                path.display(),
                s[1],
                s[2],
                cfg.frame_size
            ))
            .into());
        }
    }
    Ok(clips)
}

enum AnyModel {
    Sum(SumModel<f32>),
    Sentiment(SentimentModel<f32>),
    Frames(FrameModel<f32>),
}

fn build_model(cfg: &RunConfig) -> CliResult<AnyModel> {
    let cell = cfg.model.cell();
    Ok(match cfg.task {
        Task::Sum => AnyModel::Sum(SumModel::new(
            SumConfig {
                cell: cell.expect("pairing validated"),
                hidden: cfg.hidden,
                max_digits: cfg.max_digits,
                targets: cfg.targets,
            },
            cfg.seed,
        )?),
        Task::Sentiment => AnyModel::Sentiment(SentimentModel::new(
            SentimentConfig {
                cell: cell.expect("pairing validated"),
                max_features: cfg.max_features,
                maxlen: cfg.maxlen,
                embed_dim: cfg.embed_dim,
                hidden: cfg.hidden,
                targets: cfg.targets,
            },
            cfg.seed,
        )?),
        Task::Frames => AnyModel::Frames(FrameModel::new(
            FrameConfig {
                size: cfg.frame_size,
                hidden_channels: cfg.hidden,
                kernel: cfg.kernel,
                padding: cfg.temporal_padding,
                targets: cfg.targets,
            },
            cfg.seed,
        )?),
    })
}

/// Loads the train and test splits and hands them to `f` with the model.
macro_rules! with_task_data {
    ($cfg:expr, $model:expr, |$m:ident, $train:ident, $test:ident| $body:expr) => {{
        let cfg = $cfg;
        let (train_path, test_path) = data_files(cfg);
        match $model {
            AnyModel::Sum($m) => {
                let $train = load_sums(&train_path, cfg.max_digits)?;
                let $test = load_sums(&test_path, cfg.max_digits)?;
                $body
            }
            AnyModel::Sentiment($m) => {
                let $train = preprocess(&load_sentiment(&train_path)?, cfg.max_features, cfg.maxlen)?;
                let $test = preprocess(&load_sentiment(&test_path)?, cfg.max_features, cfg.maxlen)?;
                $body
            }
            AnyModel::Frames($m) => {
                let $train = load_frame_split(cfg, &train_path)?;
                let $test = load_frame_split(cfg, &test_path)?;
                $body
            }
        }
    }};
}

fn metrics_csv(rows: &[(&str, f64, f64)]) -> String {
    let mut s = String::from("split,loss,metric\n");
    for (split, loss, metric) in rows {
        let _ = writeln!(s, "{split},{loss},{metric}");
    }
    s
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn write_histograms<M: Model<f32>>(model: &M, cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    create_dir(dir)?;
    for h in quantized_histograms(model.params(), cfg.scheme, cfg.stats_scope, cfg.bins)? {
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &h.bins).expect("writing to memory");
        write_file(&dir.join(format!("{}.csv", file_safe(&h.name))), buf)?;
    }
    Ok(())
}

fn fit_and_save<M: Model<f32>>(model: &mut M, train: &[M::Sample], test: &[M::Sample], cfg: &RunConfig) -> CliResult<String> {
    let tc = cfg.train_config();
    let mut trainer = Trainer::new(tc.clone())?;
    let val = &test[..cfg.val_samples.min(test.len())];
    let (progress, epochs) = (cfg.progress, cfg.epochs);
    let mut report = trainer.fit(model, train, val, |r| {
        if progress {
            eprintln!(
                "epoch {}/{epochs} train_loss={:.5} train_metric={:.4} val_loss={:.5} val_metric={:.4}",
                r.epoch, r.train_loss, r.train_metric, r.val_loss, r.val_metric
            );
        }
        true
    })?;
    let (train_loss, train_metric) = evaluate(model, train, &tc)?;
    let (test_loss, test_metric) = evaluate(model, test, &tc)?;
    report.test_metric = Some(test_metric);

    let out = &cfg.out_dir;
    write_file(&out.join("report.csv"), report.to_csv())?;
    let metrics = metrics_csv(&[("train", train_loss, train_metric), ("test", test_loss, test_metric)]);
    write_file(&out.join("metrics.csv"), &metrics)?;
    write_histograms(model, cfg, &out.join("hist"))?;
    let ckpt = cfg.checkpoint_path();
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    Checkpoint::from_model(model, cfg.to_meta()).save(&ckpt)?;
    Ok(metrics)
}

pub fn train(cfg: &RunConfig) -> CliResult<String> {
    let mut model = build_model(cfg)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("resolved.cfg"), cfg.to_file_string())?;
    with_task_data!(cfg, &mut model, |m, train, test| fit_and_save(m, &train, &test, cfg))
}

/// Checkpoint path implied by the path settings of `layers` alone.
fn checkpoint_location(layers: &[Layer]) -> CliResult<PathBuf> {
    let mut cfg = RunConfig::defaults(Task::Sum);
    for layer in layers {
        for (k, v) in &layer.entries {
            if crate::config::PATH_KEYS.contains(&k.as_str()) {
                cfg.set(k, v)?;
            }
        }
    }
    Ok(cfg.checkpoint_path())
}

/// Loads the checkpoint named by `layers` and resolves the run config with
/// the checkpoint's recorded settings beneath the given layers.
fn open_checkpoint(layers: &[Layer]) -> CliResult<(RunConfig, Checkpoint<f32>)> {
    let path = checkpoint_location(layers)?;
    let ck = Checkpoint::load(&path)?;
    let mut all = vec![RunConfig::layer_from_meta(&ck.meta, &path.display().to_string())];
    all.extend_from_slice(layers);
    let mut cfg = RunConfig::resolve(&all)?;
    cfg.checkpoint = Some(path);
    Ok((cfg, ck))
}

fn restore<M: Model<f32>>(model: &mut M, ck: &Checkpoint<f32>) -> CliResult<()> {
    ck.apply_to(model)?;
    Ok(())
}

pub fn eval(layers: &[Layer]) -> CliResult<String> {
    let (cfg, ck) = open_checkpoint(layers)?;
    let mut model = build_model(&cfg)?;
    let tc = cfg.train_config();
    let (_, test_path) = data_files(&cfg);
    let (loss, metric) = match &mut model {
        AnyModel::Sum(m) => {
            restore(m, &ck)?;
            evaluate(m, &load_sums(&test_path, cfg.max_digits)?, &tc)?
        }
        AnyModel::Sentiment(m) => {
            restore(m, &ck)?;
            let test = preprocess(&load_sentiment(&test_path)?, cfg.max_features, cfg.maxlen)?;
            evaluate(m, &test, &tc)?
        }
        AnyModel::Frames(m) => {
            restore(m, &ck)?;
            evaluate(m, &load_frame_split(&cfg, &test_path)?, &tc)?
        }
    };
    let csv = metrics_csv(&[("test", loss, metric)]);
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("eval.csv"), &csv)?;
    Ok(csv)
}

/// Writes per-parameter histograms of the forward-pass weights and a
/// table of how many weights sit on each quantization level.
pub fn quant_report(layers: &[Layer]) -> CliResult<String> {
    let (cfg, ck) = open_checkpoint(layers)?;
    let mut ps = ParamSet::<f32>::new();
    for e in ck.entries.iter().filter(|e| e.kind == EntryKind::Param) {
        ps.add(e.name.clone(), e.tensor.clone(), e.quantizable);
    }
    let images = quantized_images(&ps, cfg.scheme, cfg.stats_scope)?;
    let dir = cfg.out_dir.join("quant");
    create_dir(&dir)?;
    let mut levels_csv = String::from("param,level,count,fraction\n");
    let mut summary = String::from("param,numel,populated_levels\n");
    for (p, img) in ps.iter().zip(&images) {
        if !p.quantizable {
            continue;
        }
        let w = img.as_ref().unwrap_or(&p.value);
        let mut buf = Vec::new();
        let bins = qrnn::quantize::weight_histogram(w, cfg.bins)?;
        write_histogram_csv(&mut buf, &bins).expect("writing to memory");
        write_file(&dir.join(format!("{}.csv", file_safe(&p.name))), buf)?;
        let populated = match cfg.scheme.levels() {
            Some(levels) => {
                let mut populated = 0;
                for &l in levels {
                    let count = w.data().iter().filter(|&&v| f64::from(v) == l).count();
                    populated += usize::from(count > 0);
                    let _ = writeln!(levels_csv, "{},{l},{count},{}", p.name, count as f64 / w.numel() as f64);
                }
                populated
            }
            None => bins.iter().filter(|b| b.count > 0).count(),
        };
        let _ = writeln!(summary, "{},{},{populated}", p.name, w.numel());
    }
    write_file(&dir.join("levels.csv"), levels_csv)?;
    write_file(&dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// Predicts the frames after the context window of the first test clips,
/// writing PGM images and the per-frame error.
pub fn rollout(layers: &[Layer]) -> CliResult<String> {
    let (cfg, ck) = open_checkpoint(layers)?;
    if cfg.task != Task::Frames || cfg.model != ModelKind::ConvLstm {
        return Err(CliError::Usage(format!(
            "rollout needs a frames checkpoint, {} holds a {} model",
            cfg.checkpoint_path().display(),
            cfg.task.name()
        )));
    }
    let AnyModel::Frames(mut model) = build_model(&cfg)? else {
        unreachable!("frames task builds a frame model")
    };
    restore(&mut model, &ck)?;
    let (_, test_path) = data_files(&cfg);
    let clips = load_frame_split(&cfg, &test_path)?;
    let need = CONTEXT_FRAMES + cfg.horizon;
    if clips.first().is_some_and(|c| c.len() < need) {
        return Err(Error::Domain(format!("clips have {} frames, rollout needs {need}", clips[0].len())).into());
    }
    let scheme = if cfg.eval_quantized { cfg.scheme } else { QuantScheme::FullPrecision };
    let preds = model.predict_rollout(&clips, cfg.horizon, scheme, cfg.stats_scope)?;
    let truth = clips
        .iter()
        .map(|c| {
            let s = c.frames.shape();
            let per = s[1] * s[2];
            let d = &c.frames.data()[CONTEXT_FRAMES * per..need * per];
            Tensor::from_vec(&[cfg.horizon, s[1], s[2]], d.to_vec())
        })
        .collect::<Vec<_>>();
    let mut csv = String::from("frame,mse\n");
    for (frame, mse) in per_frame_mse(&preds, &truth, CONTEXT_FRAMES + 1)? {
        let _ = writeln!(csv, "{frame},{mse}");
    }
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("per_frame_mse.csv"), &csv)?;
    let dir = cfg.out_dir.join("rollout");
    create_dir(&dir)?;
    for (i, (p, t)) in preds.iter().zip(&truth).take(cfg.export).enumerate() {
        for k in 0..cfg.horizon {
            let frame = CONTEXT_FRAMES + 1 + k;
            write_pgm(dir.join(format!("clip{i:03}_frame{frame:02}_pred.pgm")), &p.index_leading(k)?)?;
            write_pgm(dir.join(format!("clip{i:03}_frame{frame:02}_true.pgm")), &t.index_leading(k)?)?;
        }
    }
    Ok(csv)
}
