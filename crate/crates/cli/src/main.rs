mod commands;
mod config;
mod failure;
mod registry;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{
    BackendArgs, BuildArgs, ConfigFile, ConvertArgs, EvalArgs, FinetuneArgs, McpTrainArgs, ProbeArgs, RunConfig,
    StatsArgs,
};
use failure::Failure;
use run::RunDir;

const DEFAULT_SEED: u64 = 42;

/// Multilingual commonsense probing: build probe corpora, score them with masked LMs,
/// pretrain with multilingual contrastive selection and fine-tune for cross-lingual transfer.
#[derive(Parser, Debug)]
#[command(name = "mickey", version)]
struct Cli {
    /// TOML file with a section per subcommand. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output (info, debug, trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run directory for outputs, config echo and manifest.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an English probe corpus and optionally translate and gate it.
    Build {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: BuildArgs,
    },
    /// Score a probe corpus and report hit@k per language.
    Probe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: ProbeArgs,
    },
    /// Convert a probe corpus into contrastive selection examples.
    McpConvert {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: ConvertArgs,
    },
    /// Pretrain an encoder and selection head on converted examples.
    McpTrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: McpTrainArgs,
    },
    /// Fine-tune a checkpoint on an English multiple-choice task.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: FinetuneArgs,
    },
    /// Evaluate a checkpoint on per-language test files.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: EvalArgs,
    },
    /// Print corpus statistics.
    Stats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: StatsArgs,
    },
}

/// TOML has no null, so unset options are dropped from the echo.
fn params<T: Serialize>(args: &T) -> serde_json::Value {
    fn strip(v: serde_json::Value) -> serde_json::Value {
        match v {
            serde_json::Value::Object(map) => {
                serde_json::Value::Object(map.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, strip(v))).collect())
            }
            other => other,
        }
    }
    strip(serde_json::to_value(args).unwrap_or(serde_json::Value::Null))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = file.seed.unwrap_or(DEFAULT_SEED);
    macro_rules! dispatch {
        ($name:literal, $common:ident, $args:ident, $section:ident, |$run:ident, $backend:ident| $body:expr) => {{
            let mut $args = $args;
            $args.fill_from(&file.$section);
            let mut $backend = $common.backend;
            $backend.fill_from(&file.backend);
            let rc = RunConfig {
                command: $name.into(),
                seed,
                out: $common.out,
                backend: $backend.clone(),
                params: params(&$args),
            };
            let mut $run = RunDir::open(&rc)?;
            let outcome = (|| -> Result<(), Failure> { $body })();
            let finished = $run.finish(&outcome);
            outcome.and(finished)
        }};
    }
    match cli.command {
        Command::Build { common, args } => {
            dispatch!("build", common, args, build, |run, backend| commands::build(&args, &backend, args.seed.unwrap_or(seed), &mut run))
        }
        Command::Probe { common, args } => {
            dispatch!("probe", common, args, probe, |run, backend| commands::probe(&args, &backend, seed, &mut run))
        }
        Command::McpConvert { common, args } => {
            dispatch!("mcp-convert", common, args, mcp_convert, |run, backend| {
                let _ = &backend;
                commands::mcp_convert(&args, seed, &mut run)
            })
        }
        Command::McpTrain { common, args } => {
            dispatch!("mcp-train", common, args, mcp_train, |run, backend| {
                let _ = &backend;
                commands::mcp_train(&args, seed, &mut run)
            })
        }
        Command::Finetune { common, args } => {
            dispatch!("finetune", common, args, finetune, |run, backend| {
                let _ = &backend;
                commands::finetune(&args, seed, &mut run)
            })
        }
        Command::Eval { common, args } => {
            dispatch!("eval", common, args, eval, |run, backend| {
                let _ = &backend;
                commands::eval(&args, &mut run)
            })
        }
        Command::Stats { common, args } => {
            dispatch!("stats", common, args, stats, |run, backend| {
                let _ = &backend;
                commands::stats(&args, &mut run)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
