mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Loaded, Overrides};
use error::CliError;

#[derive(Parser)]
#[command(name = "probefuse", version, about = "Layer probing and fusion experiments for sentence-level flattery detection")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Fail on any sample missing from a pack, score file or transcript.
    #[arg(long, global = true, overrides_with = "no_strict")]
    strict: bool,
    /// Skip samples missing from upstream artifacts instead of failing.
    #[arg(long, global = true, overrides_with = "strict")]
    no_strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project labels onto sentences and write the corpus manifest.
    Assemble,
    /// Speaker-disjoint train/dev/test partition.
    Split,
    /// Two-stage layer probing for every configured pack.
    Probe {
        /// Only this pack.
        #[arg(long)]
        pack: Option<String>,
    },
    /// Full grid search on one layer of a pack.
    Tune {
        #[arg(long)]
        pack: String,
        /// Layer id; defaults to the final layer.
        #[arg(long)]
        layer: Option<u32>,
    },
    /// Concatenate audio and text final layers and train one SVM.
    FuseEarly,
    /// Weighted average of per-source scores.
    FuseLate,
    /// Word error rate of each transcript source against the corpus text.
    Wer,
    /// Collect all results into report.md.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let cwd = std::env::current_dir().unwrap_or_default();
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.map(|o| if o.is_absolute() { o } else { cwd.join(o) }),
        strict: match (cli.strict, cli.no_strict) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        },
        jobs: cli.jobs,
    };
    let cfg = Loaded::load(&path, &overrides)?;
    if let Some(jobs) = cfg.config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Assemble => commands::assemble(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Probe { pack } => commands::probe(&cfg, pack.as_deref()),
        Command::Tune { pack, layer } => commands::tune(&cfg, &pack, layer),
        Command::FuseEarly => commands::fuse_early(&cfg),
        Command::FuseLate => commands::fuse_late(&cfg),
        Command::Wer => commands::wer(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
