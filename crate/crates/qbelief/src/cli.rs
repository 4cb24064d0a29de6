//! Command-line interface.

use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qbelief_core::nn::CellKind;

use crate::config::{ConfigError, RunConfig};
use crate::formats;
use crate::report;
use crate::runner::Runner;

/// Exit code for usage and configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "qbelief",
    version,
    about = "Train recurrent Q-networks and measure how much their hidden states encode the belief"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every (cell, seed) job and evaluate return and information at each checkpoint.
    Train(RunArgs),
    /// Re-evaluate the stored checkpoints of every job.
    EvalMi(RunArgs),
    /// Estimate information under increasingly noisy behaviour on each job's final checkpoint.
    SweepGeneralization(RunArgs),
    /// Correlation tables and seed-aggregated series from metrics CSV files.
    Report(ReportArgs),
    /// Check a configuration and print it with every default filled in.
    ValidateConfig(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Output root. Defaults to the config's `out`, then `runs`.
    #[arg(long, value_name = "DIR", env = "QBELIEF_OUT")]
    pub out: Option<PathBuf>,
    /// Run this seed only.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run this cell kind only (lstm, gru, brc, nbrc, mgu).
    #[arg(long)]
    pub cell: Option<CellKind>,
    /// Number of parallel jobs; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Checkpoint every this many training episodes.
    #[arg(long)]
    pub cadence: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics CSV files.
    #[arg(long, value_name = "CSV", required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Directory for `correlations.txt` and `summary.csv`; the table is printed either way.
    #[arg(long, value_name = "DIR", env = "QBELIEF_OUT")]
    pub out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl RunArgs {
    fn resolve(&self) -> Result<(RunConfig, PathBuf), Failure> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(cell) = self.cell {
            config.cells = vec![cell];
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        if let Some(c) = self.cadence {
            config.drqn.cadence = c;
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        config.validate()?;
        let root = config.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
        Ok((config, root))
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
        Err(e) => {
            let text = e.render().to_string();
            let _ = writeln!(stderr, "{}", text.lines().next().unwrap_or("invalid arguments"));
            return EXIT_CONFIG;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::ValidateConfig(args) => {
            let (config, _) = args.resolve()?;
            write!(stdout, "{}", config.to_toml()).map_err(runtime)
        }
        Command::Train(args) => {
            let (config, root) = args.resolve()?;
            let path = Runner::new(config, root).train().map_err(runtime)?;
            writeln!(stdout, "{}", path.display()).map_err(runtime)
        }
        Command::EvalMi(args) => {
            let (config, root) = args.resolve()?;
            let path = Runner::new(config, root).eval_mi().map_err(runtime)?;
            writeln!(stdout, "{}", path.display()).map_err(runtime)
        }
        Command::SweepGeneralization(args) => {
            let (config, root) = args.resolve()?;
            let path = Runner::new(config, root).sweep().map_err(runtime)?;
            writeln!(stdout, "{}", path.display()).map_err(runtime)
        }
        Command::Report(args) => report_command(&args, stdout),
    }
}

fn report_command(args: &ReportArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in &args.input {
        let file = fs::File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let rows =
            formats::read_metrics(BufReader::new(file)).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        records.extend(rows);
    }
    let table = report::render_table(&report::correlations(&records));
    write!(stdout, "{table}").map_err(runtime)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(runtime)?;
        fs::write(dir.join("correlations.txt"), &table).map_err(runtime)?;
        let file = fs::File::create(dir.join("summary.csv")).map_err(runtime)?;
        report::write_summary(std::io::BufWriter::new(file), &report::summarize(&records)).map_err(runtime)?;
    }
    Ok(())
}
