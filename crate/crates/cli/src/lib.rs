//! `qrnn` command-line front end: dataset generation, training, evaluation,
//! weight reports and frame rollouts.

pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Layer, BOOL_KEYS, KEYS};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, settings or task/model pairing.
    Usage(String),
    Core(qrnn::Error),
}

impl From<qrnn::Error> for CliError {
    fn from(e: qrnn::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(qrnn::Error::Config(_)) => 2,
            CliError::Core(qrnn::Error::Io { .. }) => 3,
            CliError::Core(qrnn::Error::Parse { .. } | qrnn::Error::Data(_)) => 4,
            CliError::Core(_) => 1,
        }
    }

    /// `error[<kind>]: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.kind(), msg.trim())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn command() -> Command {
    let with_keys = |mut c: Command| {
        c = c.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("config file of `key = value` lines"),
        );
        for (key, help) in KEYS {
            let mut arg = Arg::new(*key).long(*key).value_name("VALUE").help(*help);
            if BOOL_KEYS.contains(key) {
                arg = arg.num_args(0..=1).default_missing_value("true");
            }
            c = c.arg(arg.action(ArgAction::Set));
        }
        c
    };
    Command::new("qrnn")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Quantization-aware training of LSTM, GRU and ConvLSTM networks")
        .subcommand_required(true)
        .subcommand(with_keys(Command::new("gen-data").about("generate the datasets of a task")))
        .subcommand(with_keys(Command::new("train").about("train a model and write its report and checkpoint")))
        .subcommand(with_keys(Command::new("eval").about("evaluate a checkpoint on the test split")))
        .subcommand(with_keys(
            Command::new("quant-report").about("histograms and level counts of a checkpoint's quantized weights"),
        ))
        .subcommand(with_keys(Command::new("rollout").about("roll out frame predictions from a frames checkpoint")))
}

fn layers(m: &ArgMatches) -> CliResult<Vec<Layer>> {
    let mut out = Vec::new();
    if let Some(path) = m.get_one::<String>("config") {
        out.push(Layer::load(path.as_ref())?);
    }
    let mut flags = Layer::new("command line");
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            flags.push(key, v.clone());
        }
    }
    out.push(flags);
    Ok(out)
}

/// Runs one invocation; `args` includes the program name. Returns what the
/// command prints on stdout.
pub fn run<I, S>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(e.to_string()),
                _ => {
                    let text = e.to_string();
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    Err(CliError::Usage(first.trim_start_matches("error: ").to_string()))
                }
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let layers = layers(sub)?;
    match name {
        "gen-data" => commands::gen_data(&config::RunConfig::resolve(&layers)?),
        "train" => commands::train(&config::RunConfig::resolve(&layers)?),
        "eval" => commands::eval(&layers),
        "quant-report" => commands::quant_report(&layers),
        "rollout" => commands::rollout(&layers),
        other => unreachable!("unknown subcommand {other}"),
    }
}
