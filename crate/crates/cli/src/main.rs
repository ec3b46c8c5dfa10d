use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use refgreen::classify::DEFAULT_TOL;
use refgreen::solver::SolveOptions;
use refgreen::Error;

mod commands;
mod input;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_NO_SOLUTION: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match e {
            // evaluation errors come from validating file expressions on the domain
            Error::Parse { .. } | Error::Eval { .. } | Error::InvalidInput(_) | Error::NotApplicable(_) => {
                EXIT_INPUT
            }
            Error::Quadrature(_) | Error::NoConvergence { .. } => EXIT_NUMERICAL,
            Error::Resonance(_) | Error::Singular { .. } => EXIT_NO_SOLUTION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Report,
}

#[derive(Parser)]
#[command(name = "refgreen", version, about = "Green's functions for periodic problems with reflection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Number of grid points for CSV output and residual checks.
    #[arg(long, global = true, default_value_t = 201)]
    grid: usize,
    /// Residual tolerance.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Output file (written atomically); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Detect the coefficient case and report its parameters.
    Classify { file: PathBuf },
    /// Solve the problem and emit the solution.
    Solve { file: PathBuf },
    /// Emit the Green's function on a grid.
    Kernel { file: PathBuf },
    /// Report the sign of the Green's function.
    Sign {
        file: PathBuf,
        /// Frequency for the mixed-case positivity check.
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
    },
    /// Solve, then check residuals and the collocation oracle.
    Verify {
        file: PathBuf,
        /// Collocation intervals for the oracle.
        #[arg(long, default_value_t = 400)]
        oracle_n: usize,
    },
    /// Rewrite a problem with a general involution as a reflection problem.
    Transform { file: PathBuf },
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<commands::Emit, CliError> {
    if cli.grid < 2 {
        return Err(CliError::input("--grid must be at least 2"));
    }
    if !(cli.tol > 0.0) {
        return Err(CliError::input("--tol must be positive"));
    }
    let opts = SolveOptions {
        tol: cli.tol,
        residual_points: cli.grid,
        ..SolveOptions::default()
    };
    match &cli.command {
        Command::Classify { file } => commands::classify(file, DEFAULT_TOL),
        Command::Solve { file } => commands::solve_cmd(file, cli.grid, &opts, cli.format),
        Command::Kernel { file } => commands::kernel(file, cli.grid, DEFAULT_TOL, cli.format),
        Command::Sign { file, omega, w, d } => commands::sign(
            file,
            DEFAULT_TOL,
            &commands::MixedArgs {
                omega: *omega,
                w: *w,
                d: *d,
            },
        ),
        Command::Verify { file, oracle_n } => commands::verify(file, cli.grid, *oracle_n, &opts),
        Command::Transform { file } => commands::transform(file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let emit = match run(&cli) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code);
        }
    };
    let written = match &cli.out {
        Some(path) => write_atomic(path, &emit.text),
        None => std::io::stdout().write_all(emit.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    ExitCode::from(emit.code)
}
