use std::fs;
use std::path::Path;
use std::process::Command;

use qrnn::checkpoint::Checkpoint;
use qrnn_cli::config::{Layer, ModelKind, RunConfig, Task};
use qrnn_cli::{run, CliError};

fn qrnn(args: &[&str]) -> Result<String, CliError> {
    run(std::iter::once("qrnn").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_sum(dir: &Path) -> String {
    let data = dir.join("data");
    qrnn(&["gen-data", "--task", "sum", "--train-samples", "64", "--test-samples", "16", "--data-dir", p(&data)]).unwrap();
    data.to_str().unwrap().to_string()
}

#[test]
fn training_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_sum(dir.path());
    let (mut reports, mut tensors) = (Vec::new(), Vec::new());
    for run_name in ["a", "b"] {
        let out = dir.path().join(run_name);
        qrnn(&[
            "train", "--task", "sum", "--scheme", "qc", "--hidden", "8", "--epochs", "3", "--batch", "16",
            "--progress", "false", "--val-samples", "16", "--data-dir", &data, "--out-dir", p(&out),
        ])
        .unwrap();
        reports.push((
            fs::read(out.join("report.csv")).unwrap(),
            fs::read(out.join("metrics.csv")).unwrap(),
        ));
        let ck: Checkpoint = Checkpoint::load(out.join("model.ckpt")).unwrap();
        tensors.push(ck.entries.into_iter().map(|e| (e.name, e.tensor)).collect::<Vec<_>>());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(tensors[0], tensors[1]);
}

#[test]
fn flag_beats_file_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "# experiment\nhidden = 32\nepochs = 7  # short\nbatch_size_unused_key_is_not_here = 1\n").unwrap();
    // unknown keys are rejected with their line
    let err = Layer::load(&cfg_path).unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");

    fs::write(&cfg_path, "# experiment\nhidden = 32\nepochs = 7  # short\nlr = 0.01\n").unwrap();
    let file = Layer::load(&cfg_path).unwrap();
    let mut flags = Layer::new("flags");
    flags.push("epochs", "9");
    let cfg = RunConfig::resolve(&[file, flags]).unwrap();
    let defaults = RunConfig::defaults(Task::Sum);
    assert_eq!(cfg.epochs, 9, "flag wins");
    assert_eq!(cfg.hidden, 32, "file wins over default");
    assert_eq!(cfg.adam.lr, 0.01);
    assert_eq!(cfg.batch, defaults.batch, "default kept");
}

#[test]
fn precedence_through_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_sum(dir.path());
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "hidden = 6\nepochs = 2\nscheme = tc\n").unwrap();
    let out = dir.path().join("out");
    qrnn(&[
        "train", "--config", p(&cfg_path), "--epochs", "1", "--progress", "false", "--data-dir", &data, "--out-dir", p(&out),
    ])
    .unwrap();
    let resolved = fs::read_to_string(out.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("epochs = 1\n"), "{resolved}");
    assert!(resolved.contains("hidden = 6\n"));
    assert!(resolved.contains("scheme = tc\n"));
    assert!(resolved.contains("batch = 32\n"));
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 2);
}

#[test]
fn resolved_config_round_trips_through_a_file() {
    let mut cfg = RunConfig::defaults(Task::Frames);
    cfg.set("scheme", "qc").unwrap();
    cfg.set("shape", "uniform").unwrap();
    cfg.set("grad_clip", "5").unwrap();
    let back = RunConfig::resolve(&[Layer::parse(&cfg.to_file_string(), "x").unwrap()]).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn task_defaults_follow_the_task() {
    let mut l = Layer::new("flags");
    l.push("task", "frames");
    let cfg = RunConfig::resolve(&[l]).unwrap();
    assert_eq!(cfg.model, ModelKind::ConvLstm);
    assert_eq!(cfg.epochs, 50);
    let mut l = Layer::new("flags");
    l.push("task", "sentiment");
    let cfg = RunConfig::resolve(&[l]).unwrap();
    assert_eq!((cfg.max_features, cfg.maxlen, cfg.batch, cfg.hidden, cfg.epochs), (20_000, 80, 64, 128, 20));
}

#[test]
fn invalid_pairings_are_usage_errors() {
    for (task, model) in [("frames", "lstm"), ("frames", "gru"), ("sum", "convlstm"), ("sentiment", "convlstm")] {
        let err = qrnn(&["train", "--task", task, "--model", model]).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)), "{task}/{model}: {err:?}");
        assert_eq!(err.exit_code(), 2);
        assert!(err.line().starts_with("error[usage]: "));
    }
}

#[test]
fn missing_data_is_an_io_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty");
    let err = qrnn(&["train", "--task", "sentiment", "--data-dir", p(&data), "--out-dir", p(&dir.path().join("o"))]).unwrap_err();
    assert_eq!(err.kind(), "io");
    assert_eq!(err.exit_code(), 3);
    assert!(err.line().contains("sentiment_train.tsv"), "{}", err.line());
}

#[test]
fn bad_values_are_reported_on_one_line() {
    for args in [
        &["train", "--epochs", "many"][..],
        &["train", "--scheme", "xc"],
        &["train", "--shape", "cauchy"],
        &["train", "--lr", "-1"],
        &["train", "--task", "poetry"],
    ] {
        let err = qrnn(args).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{args:?}");
        assert!(!err.line().contains('\n'));
    }
}

#[test]
fn data_dir_defaults_to_the_environment() {
    // Only this test touches the variable.
    std::env::set_var(qrnn_cli::config::DATA_DIR_ENV, "/srv/qrnn-data");
    let cfg = RunConfig::resolve(&[]).unwrap();
    std::env::remove_var(qrnn_cli::config::DATA_DIR_ENV);
    assert_eq!(cfg.data_dir, Path::new("/srv/qrnn-data"));
    assert_eq!(RunConfig::resolve(&[]).unwrap().data_dir, Path::new("data"));
}

#[test]
fn bc_checkpoint_has_two_populated_levels() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_sum(dir.path());
    let out = dir.path().join("bc");
    qrnn(&[
        "train", "--task", "sum", "--model", "gru", "--scheme", "bc", "--hidden", "8", "--epochs", "1", "--progress", "false",
        "--data-dir", &data, "--out-dir", p(&out),
    ])
    .unwrap();
    let summary = qrnn(&["quant-report", "--out-dir", p(&out)]).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in rows {
        assert!(row.ends_with(",2"), "{row}");
    }
    let levels = fs::read_to_string(out.join("quant/levels.csv")).unwrap();
    assert!(levels.starts_with("param,level,count,fraction\n"));
    let hist = fs::read_to_string(out.join("quant/head.W.csv")).unwrap();
    let populated = hist.lines().skip(1).filter(|l| !l.ends_with(",0")).count();
    assert_eq!(populated, 2);
}

#[test]
fn eval_reads_settings_from_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_sum(dir.path());
    let out = dir.path().join("run");
    let trained = qrnn(&[
        "train", "--task", "sum", "--scheme", "tc", "--shape", "uniform", "--hidden", "8", "--epochs", "2",
        "--progress", "false", "--data-dir", &data, "--out-dir", p(&out),
    ])
    .unwrap();
    let evaluated = qrnn(&["eval", "--data-dir", &data, "--out-dir", p(&out)]).unwrap();
    let test_line = |s: &str| s.lines().find(|l| l.starts_with("test,")).unwrap().to_string();
    assert_eq!(test_line(&trained), test_line(&evaluated));
    assert!(out.join("eval.csv").exists());
}

#[test]
fn frames_pipeline_writes_pgm_and_per_frame_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    let common = ["--task", "frames", "--frame-size", "16", "--data-dir", p(&data)];
    let with = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = common.iter().map(|s| s.to_string()).collect();
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let call = |cmd: &str, extra: &[&str]| {
        let args = with(extra);
        let mut all = vec![cmd];
        all.extend(args.iter().map(String::as_str));
        qrnn(&all)
    };
    call("gen-data", &["--train-samples", "8", "--test-samples", "3"]).unwrap();
    call("train", &["--hidden", "4", "--epochs", "1", "--batch", "4", "--progress", "false", "--out-dir", p(&out)]).unwrap();
    let csv = qrnn(&["rollout", "--out-dir", p(&out), "--data-dir", p(&data), "--export", "2"]).unwrap();
    let frames: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(csv.lines().next(), Some("frame,mse"));
    assert_eq!(frames, ["8", "9", "10"]);
    let pgm = fs::read(out.join("rollout/clip001_frame10_pred.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n255\n".len() + 256);
    assert!(!out.join("rollout/clip002_frame08_pred.pgm").exists());
}

#[test]
fn binary_exit_codes_and_error_line() {
    let bin = env!("CARGO_BIN_EXE_qrnn");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin)
        .args(["eval", "--checkpoint", p(&dir.path().join("missing.ckpt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[io]: ") && err.contains("missing.ckpt"), "{err}");

    let out = Command::new(bin).args(["train", "--task", "frames", "--model", "gru"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("quant-report"));
}
