//! The `wdesign` command line.
//!
//! Exit statuses: 0 success, 1 certification or equivalence failure, 2 input
//! error.

mod commands;
pub mod problem;
pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use commands::parse_vector;
pub use problem::{ParseError, Problem, ProblemFile};

use report::{num, Obj};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wdesign", version, about = "Weighted and system-of-interest design optimality")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the machine-readable JSON report here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress the text report on standard output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Information matrix, its spectrum and rank, and target estimability.
    Info(FileArg),
    /// Criterion values through the system route and the weighted route.
    Criterion(FileArg),
    /// Primary and secondary weights, and weights of queried functions.
    Weights(WeightsArgs),
    /// Spectral and interpretation certificates on the file and random instances.
    Certify(CertifyArgs),
    /// Optimal exact design search.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
pub struct FileArg {
    #[arg(long, short)]
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long, short)]
    pub file: PathBuf,
    /// Coefficient vector such as "0,-1,1"; may be repeated.
    #[arg(long, allow_hyphen_values = true)]
    pub query: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, short)]
    pub file: Option<PathBuf>,
    /// theorem1, theorem2, theorem3, theorem4, aopt, eopt or all.
    #[arg(long, default_value = "all")]
    pub which: String,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, short)]
    pub file: PathBuf,
    /// Also enumerate through both routes and compare optimal sets.
    #[arg(long)]
    pub both_routes: bool,
    /// Overrides the seed in the search section.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Input(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => f.write_str(m),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<String> for CliError {
    fn from(e: String) -> Self {
        CliError::Input(e)
    }
}

/// A finished command: the full report and its status.
#[derive(Debug, Clone)]
pub struct Execution {
    pub report: Value,
    pub status: Status,
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => EXIT_OK,
            Status::Failed => EXIT_FAILED,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads, parses and validates a problem file; returns it with the SHA-256
/// of its bytes.
pub fn load_problem(path: &Path) -> Result<(Problem, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let digest = hex(&Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| CliError::input(format!("{}: not UTF-8", path.display())))?;
    let file = ProblemFile::parse(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let problem = file
        .resolve()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok((problem, digest))
}

/// Runs one parsed invocation. `argv` is echoed into the report.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<Execution, CliError> {
    let started = Instant::now();
    let (name, file) = match &cli.command {
        Command::Info(a) | Command::Criterion(a) => (command_name(&cli.command), Some(&a.file)),
        Command::Weights(a) => ("weights", Some(&a.file)),
        Command::Certify(a) => ("certify", a.file.as_ref()),
        Command::Search(a) => ("search", Some(&a.file)),
    };
    let loaded = file.map(|f| load_problem(f)).transpose()?;
    let problem = loaded.as_ref().map(|(p, _)| p);
    let need = || problem.ok_or_else(|| CliError::input("a problem file is required"));
    let (body, status) = match &cli.command {
        Command::Info(_) => commands::info(need()?)?,
        Command::Criterion(_) => commands::criterion(need()?)?,
        Command::Weights(a) => commands::weights(need()?, &a.query)?,
        Command::Certify(a) => commands::certify(problem, &a.which, a.trials, a.seed)?,
        Command::Search(a) => commands::search_cmd(need()?, a.both_routes, a.seed)?,
    };
    let mut report = Obj::new().set("command", name).set("arguments", argv.to_vec());
    if let (Some(f), Some((_, digest))) = (file, &loaded) {
        report.put("input", f.display().to_string());
        report.put("input_sha256", digest.clone());
    }
    report.put("results", body);
    if matches!(cli.command, Command::Certify(_)) || status == Status::Failed {
        report.put("passed", status == Status::Ok);
    }
    report.put("wall_time_seconds", num(started.elapsed().as_secs_f64()));
    Ok(Execution {
        report: report.into(),
        status,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Info(_) => "info",
        Command::Criterion(_) => "criterion",
        Command::Weights(_) => "weights",
        Command::Certify(_) => "certify",
        Command::Search(_) => "search",
    }
}

/// Parses arguments, runs the command, prints the text report and writes
/// `--out`. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(exec) => {
            if !cli.quiet {
                print!("{}", report::render_text(&exec.report));
            }
            if let Some(out) = &cli.out {
                let json = serde_json::to_string_pretty(&exec.report).expect("reports serialize");
                if let Err(e) = std::fs::write(out, json + "\n") {
                    eprintln!("error: {}: {e}", out.display());
                    return EXIT_INPUT;
                }
            }
            if exec.status == Status::Failed {
                eprintln!("error: {} reported failures", command_name(&cli.command));
            }
            exec.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
