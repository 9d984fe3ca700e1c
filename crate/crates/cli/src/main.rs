//! `atm`: batch sweeps, bound-state searches and Fibonacci stack generation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atm_core::green::GreenOptions;
use atm_core::input::{self, Dimension, StackDescription, Units};
use atm_core::observables::{find_bound_states, BoundStateOptions};
use atm_core::par::Execution;
use atm_core::sl_system::SpectralPoint;
use atm_core::sweep::{run_sweep, SweepOptions, Thresholds};
use atm_core::transfer::{symplectic_report, Transconjugated};
use atm_core::AtmError;
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_VIOLATION: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "atm", version, about = "Transfer-matrix and Green-function solver for layered matrix Sturm-Liouville systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CheckMode {
    /// Exit with status 2 when any identity residual exceeds its threshold.
    Strict,
    /// Report violations but exit successfully.
    Warn,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sweep described in a stack file.
    Run {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (1 runs sequentially).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value_t = CheckMode::Strict)]
        check_identities: CheckMode,
    },
    /// Build a Fibonacci chain of two layers.
    Fib {
        #[arg(long)]
        generation: usize,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Write the stack file here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check the chained transfer matrix at this real energy.
        #[arg(long)]
        omega: Option<String>,
        /// Largest accepted `| |det T|² − 1 |` of the chain.
        #[arg(long, default_value_t = 1e-6)]
        det_threshold: f64,
    },
    /// Find bound states of a stack by sign scan and bisection.
    Bound {
        #[arg(long)]
        stack: PathBuf,
        /// Energy bracket `LO,HI`.
        #[arg(long)]
        bracket: String,
        #[arg(long, default_value = "1e-10")]
        tol: String,
        /// In-plane wavevector `KX,KY`.
        #[arg(long)]
        kappa: Option<String>,
    },
}

enum Failure {
    Input(String),
    Violation(String),
    Other(String),
}

impl From<AtmError> for Failure {
    fn from(e: AtmError) -> Self {
        match e {
            AtmError::Parse(_) | AtmError::InvalidParameter { .. } | AtmError::Io { .. } => Failure::Input(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

/// A quantity given on the command line: a bare number is in natural units.
fn quantity(units: &Units, text: &str, dim: Dimension, field: &str) -> Result<f64, Failure> {
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Ok(units.quantity(text, dim, field)?),
    }
}

fn pair(units: &Units, text: &str, dim: Dimension, field: &str) -> Result<(f64, f64), Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Failure::Input(format!("invalid parameter `{field}`: expected two comma-separated values, got {text:?}")));
    }
    Ok((quantity(units, parts[0], dim, field)?, quantity(units, parts[1], dim, field)?))
}

fn configure_threads(threads: Option<usize>) -> Result<Execution, Failure> {
    match threads {
        Some(0) => Err(Failure::Input("invalid parameter `--threads`: must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(k) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| Failure::Other(format!("cannot start thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::Parallel),
    }
}

fn run(stack: &Path, out: &Path, threads: Option<usize>, mode: CheckMode) -> Result<(), Failure> {
    let execution = configure_threads(threads)?;
    let desc = input::parse_stack_file(stack)?;
    let spec = desc
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Input(format!("{}: no [sweep] table", stack.display())))?;
    let opts = SweepOptions { execution, thresholds: Thresholds::default(), green: GreenOptions::default(), energy_unit_ev: desc.units.energy_ev() };
    let report = run_sweep(&desc.stack, spec, out, &opts)?;
    if let Some(ev) = report.energy_unit_ev {
        eprintln!("energies in units of {ev:e} eV");
    }
    eprintln!(
        "{} points, {} failed, {} identity violations; results in {}",
        report.points,
        report.failed_points.len(),
        report.violations.len(),
        out.display()
    );
    for v in &report.violations {
        eprintln!("  {} residual {:e} >= {:e} at omega = {}, kappa = {:?}", v.quantity, v.value, v.threshold, v.omega, v.kappa);
    }
    if report.has_violations() && mode == CheckMode::Strict {
        return Err(Failure::Violation("identity residuals exceed thresholds".into()));
    }
    Ok(())
}

fn fib(generation: usize, a: &Path, b: &Path, out: Option<&Path>, omega: Option<&str>, det_threshold: f64) -> Result<(), Failure> {
    let la = input::parse_layer_file(a)?;
    let lb = input::parse_layer_file(b)?;
    let raw = input::fibonacci_stack_file(generation, &la, &lb)?;
    let text = input::to_toml(&raw)?;
    let desc: StackDescription = input::build_stack(raw)?;
    match out {
        Some(path) => std::fs::write(path, &text)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?,
        None if omega.is_none() => print!("{text}"),
        None => {}
    }
    let Some(omega) = omega else { return Ok(()) };
    let om = quantity(&desc.units, omega, Dimension::Energy, "--omega")?;
    let stack = &desc.stack;
    let sp = SpectralPoint::real(om);
    let t = stack.transfer(stack.left_edge(), stack.right_edge(), &sp, &Default::default())?;
    let report = symplectic_report(&t, &Transconjugated::from_real_axis(&t)?)?;
    println!(
        "layers {} omega {om:e}: det defect {:e}, symplectic residual {:e}",
        stack.layers().len(),
        report.det_defect,
        report.residual_full
    );
    if report.det_defect.is_nan() || report.det_defect >= det_threshold {
        return Err(Failure::Violation(format!(
            "precision loss: | |det T|^2 - 1 | = {:e} exceeds {det_threshold:e}",
            report.det_defect
        )));
    }
    Ok(())
}

fn bound(stack: &Path, bracket: &str, tol: &str, kappa: Option<&str>) -> Result<(), Failure> {
    let desc = input::parse_stack_file(stack)?;
    let units = desc.units;
    let bracket = pair(&units, bracket, Dimension::Energy, "--bracket")?;
    let tol = quantity(&units, tol, Dimension::Energy, "--tol")?;
    let kappa = match kappa {
        Some(k) => {
            let (kx, ky) = pair(&units, k, Dimension::Wavevector, "--kappa")?;
            [kx, ky]
        }
        None => [0.0, 0.0],
    };
    let opts = BoundStateOptions { kappa, ..Default::default() };
    let roots = find_bound_states(&desc.stack, bracket, tol, &opts)?;
    for om in roots {
        match units.energy_ev() {
            Some(ev) => println!("{om:.15e}\t{:.15e} eV", om * ev),
            None => println!("{om:.15e}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { stack, out, threads, check_identities } => run(stack, out, *threads, *check_identities),
        Command::Fib { generation, a, b, out, omega, det_threshold } => {
            fib(*generation, a, b, out.as_deref(), omega.as_deref(), *det_threshold)
        }
        Command::Bound { stack, bracket, tol, kappa } => bound(stack, bracket, tol, kappa.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
