//! Experiment runner: config files in, stamped CSV/JSON run directories out.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::config::{Format, Loaded, Validate, VerifyConfig};
pub use crate::error::CliError;
use crate::output::RunWriter;
pub use crate::plot::emit_plot_data;

/// Environment variable overriding every output directory.
pub const OUT_DIR_ENV: &str = "IPSPLICE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Invade,
    Crossings,
    Arms,
    Corrlen,
    Splice,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Invade => "invade",
            Experiment::Crossings => "crossings",
            Experiment::Arms => "arms",
            Experiment::Corrlen => "corrlen",
            Experiment::Splice => "splice",
            Experiment::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Names of failed checks (`verify` only).
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Exit status of a finished run: 0 success, 1 bad config or failed run,
/// 2 failed `verify` checks.
pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(_) => 1,
    }
}

fn resolve_dir(out: Option<&Path>, from_config: Option<&Path>, exp: Experiment) -> PathBuf {
    out.or(from_config)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join(exp.name()))
}

fn prepare<T: DeserializeOwned + Validate>(
    exp: Experiment,
    loaded: &Loaded<T>,
    out: Option<&Path>,
) -> Result<RunWriter, CliError> {
    let dir = resolve_dir(out, loaded.config.output_dir(), exp);
    RunWriter::create(&dir, &loaded.text, &loaded.sha256, loaded.format)
}

/// Run `exp` on the config text. `out` takes precedence over the config's
/// `output_dir`.
pub fn run_text(exp: Experiment, text: &str, format: Format, out: Option<&Path>) -> Result<Outcome, CliError> {
    fn go<T: DeserializeOwned + Validate>(
        exp: Experiment,
        text: &str,
        format: Format,
        out: Option<&Path>,
        f: impl FnOnce(&T, &mut RunWriter) -> Result<Vec<String>, CliError>,
    ) -> Result<Outcome, CliError> {
        let loaded = config::parse::<T>(text, format)?;
        let mut w = prepare(exp, &loaded, out)?;
        let failures = f(&loaded.config, &mut w)?;
        Ok(Outcome {
            dir: w.dir().to_path_buf(),
            files: w.into_files(),
            failures,
        })
    }
    let none = |r: Result<(), CliError>| r.map(|_| Vec::new());
    match exp {
        Experiment::Invade => go(exp, text, format, out, |c, w| none(commands::invade_cmd(c, w))),
        Experiment::Crossings => go(exp, text, format, out, |c, w| none(commands::crossings_cmd(c, w))),
        Experiment::Arms => go(exp, text, format, out, |c, w| none(commands::arms_cmd(c, w))),
        Experiment::Corrlen => go(exp, text, format, out, |c, w| none(commands::corrlen_cmd(c, w))),
        Experiment::Splice => go(exp, text, format, out, |c, w| none(commands::splice_cmd(c, w))),
        Experiment::Verify => go::<VerifyConfig>(exp, text, format, out, |c, w| {
            Ok(commands::verify_cmd(c, w)?
                .into_iter()
                .filter(|r| !r.passed)
                .map(|r| r.name)
                .collect())
        }),
    }
}

/// Run `exp` on a config file. `verify` without a file uses its defaults.
pub fn run(exp: Experiment, config: Option<&Path>, out: Option<&Path>) -> Result<Outcome, CliError> {
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            run_text(exp, &text, Format::of(path), out)
        }
        None if exp == Experiment::Verify => run_text(exp, "", Format::Toml, out),
        None => Err(CliError::Invalid(format!("{} needs --config", exp.name()))),
    }
}
