//! The `ssrl` command line: synthetic screens, training, embeddings and the
//! downstream analyses, each writing CSV/JSON artifacts plus a `run.json`.

mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, ColorChoice, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION};

#[derive(Debug, Parser)]
#[command(name = "ssrl", version, about = "Critic-feature embeddings for synthetic high-content screens")]
pub struct Cli {
    /// Caps the worker threads used for rendering and feature extraction.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Directory for the artifacts and run.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Featurizer {
    Critic,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxesKind {
    /// Positive vs negative controls.
    Effectiveness,
    /// The two cell lines, on control wells.
    CellLine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic screen: manifest.csv plus one image blob per well.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Overrides screen.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the adversarial model on a screen and write checkpoint.gdl.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        /// Overrides gan.steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Overrides gan.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint instead of a fresh initialization.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
    /// Embed every well of a screen and write embeddings.csv.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Featurizer::Critic)]
        featurizer: Featurizer,
    },
    /// Fit On/Off perturbation axes on control wells.
    FitAxes {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AxesKind::Effectiveness)]
        kind: AxesKind,
    },
    /// Efficacy score of every well against a fitted frame.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        frame: Option<PathBuf>,
    },
    /// Mean efficacy per compound and concentration.
    DoseResponse {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        frame: Option<PathBuf>,
    },
    /// Held-out control and cell-line classification accuracy.
    EvalControls {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        /// Overrides eval.split_seed.
        #[arg(long)]
        split_seed: Option<u64>,
        /// Standardize features before fitting.
        #[arg(long)]
        standardize: bool,
    },
    /// Cell-line classification on a screen the model never saw.
    EvalZeroshot {
        #[command(flatten)]
        common: Common,
        /// Foreign screen; overrides paths.foreign_screen.
        #[arg(long, value_name = "DIR")]
        screen: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Overrides eval.dropped_channel.
        #[arg(long, value_name = "INDEX")]
        drop_channel: Option<usize>,
        /// Overrides eval.zero_shot_classes.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, value_enum, default_value_t = Featurizer::Critic)]
        featurizer: Featurizer,
        /// Overrides eval.split_seed.
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        standardize: bool,
    },
    /// Check every differentiable op and regularizer against finite differences.
    Gradcheck {
        /// Optional directory for gradcheck.csv and run.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Number of seeded cases per op.
        #[arg(long, default_value_t = 4)]
        seeds: u64,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr as one `error:` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cmd = Cli::command();
    if std::env::var_os("NO_COLOR").is_some() {
        cmd = cmd.color(ColorChoice::Never);
    }
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.render().to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or_default();
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            for l in lines {
                eprintln!("{l}");
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprintln!("{}", Cli::command().render_usage());
            }
            return EXIT_USAGE;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: usage: --threads must be positive");
            return EXIT_USAGE;
        }
        // Fails only if a pool already exists, e.g. when called twice in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
