//! Command-line front end: argument parsing, config resolution, exit codes.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use thiserror::Error;

pub use config::{ConfigError, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hmcd", version, about = "HTTP malicious-communication detection pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides for config-file keys. Every flag maps to the key of the same
/// name with dashes turned into underscores.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat key=value config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Worker threads
    #[arg(long, global = true)]
    pub jobs: Option<String>,
    #[arg(long, global = true)]
    pub epochs: Option<String>,
    #[arg(long, global = true)]
    pub batch: Option<String>,
    #[arg(long, global = true)]
    pub lr: Option<String>,
    #[arg(long, global = true)]
    pub folds: Option<String>,
    /// Repeated runs per experiment
    #[arg(long, global = true)]
    pub repeats: Option<String>,
    #[arg(long, global = true)]
    pub gaf_count: Option<String>,
    /// Dictionary frequency threshold, or "inf"
    #[arg(long, global = true)]
    pub p_threshold: Option<String>,
    /// Word slots per encoded field
    #[arg(long, global = true)]
    pub seq_len: Option<String>,
    /// Gradient-penalty weight
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    #[arg(long, global = true)]
    pub gan_iterations: Option<String>,
    #[arg(long, global = true)]
    pub idle_gap_s: Option<String>,
    /// Tolerate bare LF line endings and missing reason phrases
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

impl GlobalArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let flags = [
            ("seed", &self.seed),
            ("jobs", &self.jobs),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("folds", &self.folds),
            ("repeats", &self.repeats),
            ("gaf_count", &self.gaf_count),
            ("p_threshold", &self.p_threshold),
            ("seq_len", &self.seq_len),
            ("lambda", &self.lambda),
            ("gan_iterations", &self.gan_iterations),
            ("idle_gap_s", &self.idle_gap_s),
        ];
        let mut out: Vec<(&str, String)> = flags
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.lenient {
            out.push(("parse_mode", "lenient".into()));
        }
        out
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble raw captured messages into a corpus
    Ingest {
        /// Newline-delimited message records
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Source tag stored in the manifest
        #[arg(long, default_value = "ingest")]
        source: String,
        /// Label for every flow, overriding per-record labels
        #[arg(long)]
        label: Option<String>,
    },
    /// Write per-flow feature records
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Build the per-field word dictionary from a labeled corpus
    BuildDict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train field generators and write adversarial flows
    GenGaf {
        /// Labeled corpus providing the dictionary and benign templates
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        output: PathBuf,
        /// Load a saved generator instead of training one
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Save the trained generator to this directory
        #[arg(long)]
        save_generator: Option<PathBuf>,
    },
    /// Cross-validate and train the classifier
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Adversarial flows added to every training fold
        #[arg(long)]
        gaf_corpus: Option<PathBuf>,
        /// Model checkpoint to write
        #[arg(long)]
        output: PathBuf,
        /// Cross-validation report
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score flows with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Defaults to standard output
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a repeated train/test experiment
    Evaluate {
        /// ep1..ep4 (desk scale), ep1-full..ep4-full (full scale), or custom
        #[arg(long)]
        preset: String,
        /// Training corpus; also the test source when no test corpus is given
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        test_corpus: Option<PathBuf>,
        /// Report file; the per-run table goes next to it with a .csv suffix
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        train_malicious: Option<usize>,
        #[arg(long)]
        train_benign: Option<usize>,
        #[arg(long)]
        test_malicious: Option<usize>,
        #[arg(long)]
        test_benign: Option<usize>,
    },
    /// Check analytic gradients against central differences
    Gradcheck,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if args.len() <= 1 {
        eprintln!("{}", Cli::command().render_help());
        return EXIT_USAGE;
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.quiet);
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            if let CliError::Usage(_) = e {
                eprintln!("{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    // a second call in the same process (tests) keeps the first logger
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let env_seed = std::env::var("HMCD_SEED").ok();
    let settings = Settings::resolve(
        cli.global.config.as_deref(),
        &cli.global.overrides(),
        env_seed.as_deref(),
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command, &settings))
}
