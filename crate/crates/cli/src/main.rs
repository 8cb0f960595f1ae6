use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fce_core::analysis::Hypothesis;

mod commands;

use commands::{CliError, Formats};

/// Persona-conditioned false-consensus experiments for chat models.
#[derive(Parser)]
#[command(name = "fce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Target {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderArg {
    Replay,
    Live,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
    Both,
}

impl From<FormatArg> for Formats {
    fn from(f: FormatArg) -> Self {
        Formats {
            markdown: f != FormatArg::Csv,
            csv: f != FormatArg::Markdown,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the trial matrix and write plan.jsonl.
    Plan(Target),
    /// Execute the planned trials and append to records.jsonl.
    Run {
        #[command(flatten)]
        target: Target,
        /// Skip trials that already have a completed or invalid record.
        #[arg(long)]
        resume: bool,
        #[arg(long, value_enum, default_value = "replay")]
        provider: ProviderArg,
        /// Override the configured parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Stop after this many newly executed trials.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Parse the answers in records.jsonl into parsed.jsonl.
    Parse(Target),
    /// Run hypothesis analyses and write their tables and heatmaps.
    Analyze {
        #[command(flatten)]
        target: Target,
        /// Run every hypothesis of study 1 or 2.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        study: Option<u8>,
        /// h1-1, h1-2, h1-3, h2-1, h2-2, grid or range; repeatable.
        #[arg(long = "hypothesis")]
        hypotheses: Vec<Hypothesis>,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
    },
    /// Re-render tables and heatmaps from saved analyses.
    Report {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
    },
    /// Run the built-in statistics oracle suites.
    VerifyStats {
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Plan(t) => commands::plan(&t.config, t.out.as_deref()),
        Command::Run {
            target,
            resume,
            provider,
            parallelism,
            limit,
        } => commands::run(
            &target.config,
            target.out.as_deref(),
            commands::RunArgs {
                resume,
                live: provider == ProviderArg::Live,
                parallelism,
                limit,
            },
        ),
        Command::Parse(t) => commands::parse(&t.config, t.out.as_deref()),
        Command::Analyze {
            target,
            study,
            hypotheses,
            format,
        } => commands::analyze(
            &target.config,
            target.out.as_deref(),
            study,
            &hypotheses,
            format.into(),
        ),
        Command::Report { target, format } => {
            commands::report(&target.config, target.out.as_deref(), format.into())
        }
        Command::VerifyStats { seed } => commands::verify_stats(seed),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("FCE_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
