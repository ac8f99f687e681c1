mod args;
mod commands;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use texturekit::imageio::read_file;
use texturekit::ErrorKind;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] texturekit::Error),

    #[error("{0}")]
    Usage(String),

    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn kind(&self) -> ErrorKind {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => ErrorKind::Usage,
            CliError::Output(_) => ErrorKind::Io,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Io => 3,
        ErrorKind::Validation => 4,
        ErrorKind::Numeric => 5,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Io => "io",
        ErrorKind::Validation => "validation",
        ErrorKind::Numeric => "numeric",
    }
}

fn read_config(path: &Path) -> CliResult<Map<String, Value>> {
    let bytes = read_file(path)?;
    match serde_json::from_slice(&bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Usage(format!(
            "config {} must hold a JSON object",
            path.display()
        ))),
        Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
    }
}

/// Overlay config entries onto parsed flags. Keys are flag names; `-` and `_`
/// are interchangeable.
fn apply_config<T: Serialize + DeserializeOwned>(cmd: T, config: Option<&Map<String, Value>>) -> CliResult<T> {
    let Some(config) = config else {
        return Ok(cmd);
    };
    let mut value = serde_json::to_value(&cmd).map_err(|e| CliError::Usage(e.to_string()))?;
    let fields = value.as_object_mut().expect("arguments serialize as an object");
    for (key, v) in config {
        let field = key.trim_start_matches("--").replace('-', "_");
        if !fields.contains_key(&field) {
            return Err(CliError::Usage(format!(
                "config key `{key}` is not a flag of this command"
            )));
        }
        fields.insert(field, v.clone());
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let config = config.as_ref();
    match cli.command {
        Command::Preprocess(c) => commands::preprocess(apply_config(c, config)?),
        Command::Glcm(c) => commands::glcm(apply_config(c, config)?),
        Command::Extract(c) => commands::extract(apply_config(c, config)?),
        Command::NmfTrain(c) => commands::nmf_train(apply_config(c, config)?),
        Command::SvmTrain(c) => commands::svm_train(apply_config(c, config)?),
        Command::TrainFusion(c) => commands::train_fusion(apply_config(c, config)?),
        Command::Classify(c) => commands::classify(apply_config(c, config)?),
        Command::Loocv(c) => commands::loocv(apply_config(c, config)?),
        Command::Synth(c) => commands::synth(apply_config(c, config)?),
        Command::Report(c) => commands::report(apply_config(c, config)?),
        Command::Metrics(c) => commands::metrics(apply_config(c, config)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit_code(ErrorKind::Usage)),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let code = exit_code(kind);
            let body = json!({ "error": { "kind": kind_name(kind), "exit_code": code, "message": e.to_string() } });
            let _ = writeln!(std::io::stderr(), "{body}");
            ExitCode::from(code)
        }
    }
}
