//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! arguments, 3 malformed input file, 4 incompatible artifact (for example a
//! checkpoint built against a different vocabulary).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_eval, cmd_profile, cmd_regress, cmd_select, cmd_synth, cmd_train, ProfileFlags};
pub use config::{
    apply_override, EvalSection, FitInputs, ProfileSection, RegressSection, RegressorInput,
    RunConfig, SelectSection, SynthSection, TrainSection,
};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "synsurp", version, about = "Generative parsing, syntactic surprisal and GLM comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.schedule.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Override the run seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a parser, writing per-epoch checkpoints and a log.
    Train(Common),
    /// Greedy-parse a treebank and report attachment scores.
    Eval(Common),
    /// Word-by-word surprisal for each k in `k_list`.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Score with a hand-specified JSON table instead of a checkpoint.
        #[arg(long)]
        score_table: Option<PathBuf>,
        /// Input text, overriding `profile.text`.
        #[arg(long)]
        text: Option<PathBuf>,
        /// Also write per-token plot data, the search trace and best
        /// derivations.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Cross-validated r² increase maps and the paired comparison.
    Regress(Common),
    /// Choose a checkpoint by dev accuracy or fit to BOLD data.
    Select(Common),
    /// Write a synthetic planted-effect dataset and its regress config.
    Synth(Common),
}

impl Common {
    fn load(&self) -> crate::Result<RunConfig> {
        let mut ov = self.overrides.clone();
        if let Some(s) = self.seed {
            ov.push(format!("seed={s}"));
        }
        let cfg = RunConfig::load(self.config.as_deref(), &ov)?;
        cfg.validate_common()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) => 2,
        Error::Format(_) | Error::Parse { .. } | Error::NonProjective(_) | Error::Alignment(_) => 3,
        Error::Incompatible(_) => 4,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::Train(c) => cmd_train(&c.load()?),
        Command::Eval(c) => cmd_eval(&c.load()?),
        Command::Profile {
            common,
            score_table,
            text,
            emit_plot_data,
        } => cmd_profile(
            &common.load()?,
            &ProfileFlags {
                score_table,
                text,
                emit_plot_data,
            },
        ),
        Command::Regress(c) => cmd_regress(&c.load()?),
        Command::Select(c) => cmd_select(&c.load()?),
        Command::Synth(c) => cmd_synth(&c.load()?),
    }
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main_from_env() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
