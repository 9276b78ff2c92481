//! `mgf`: evaluations, sweeps, spectra, node studies and benchmarks of the
//! modal Green's function, emitted as CSV or JSON.
//!
//! Exit status: 0 success, 1 computation failure, 2 usage error.

mod commands;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mgf_core::{EvalConfig, GeometricInput, OracleConfig, Scaling};

use commands::{Axis, BenchSpec, CliError, CliResult, Context, Point, SweepSpec};
use output::Format;

#[derive(Parser, Debug)]
#[command(name = "mgf", version, about = "Modal Green's function evaluator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for batched work; overrides MGF_THREADS.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "raw")]
    scaling: ScalingArg,
    /// Bound on |T_m| over the Bernstein ellipse.
    #[arg(long, global = true, default_value_t = 100.0)]
    m_bound: f64,
    /// Arc Gauss-Legendre nodes per unit of m.
    #[arg(long, global = true, default_value_t = 5.0)]
    node_factor: f64,
    /// Absolute tolerance per panel of the reference evaluator.
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScalingArg {
    Raw,
    Physical,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one mode.
    Eval(EvalArgs),
    /// Evaluate along one parameter axis with the other two fixed.
    Sweep(SweepArgs),
    /// All modes down to a magnitude threshold.
    Spectrum(SpectrumArgs),
    /// Time batches across worker counts after checking they agree bitwise.
    Bench(BenchArgs),
    /// Error against the reference evaluator for several arc node factors.
    Nodes(NodesArgs),
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, allow_negative_numbers = true)]
    m: i64,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, conflicts_with_all = ["r", "rp", "z", "zp", "k"])]
    beta_minus: Option<f64>,
    /// Target radius.
    #[arg(long, requires_all = ["rp", "z", "zp", "k"], conflicts_with = "kappa")]
    r: Option<f64>,
    /// Source radius.
    #[arg(long, requires_all = ["r", "z", "zp", "k"])]
    rp: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires_all = ["r", "rp", "zp", "k"])]
    z: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires_all = ["r", "rp", "z", "k"])]
    zp: Option<f64>,
    /// Wavenumber.
    #[arg(long, requires_all = ["r", "rp", "z", "zp"])]
    k: Option<f64>,
    #[arg(long)]
    compare_oracle: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "log_range", conflicts_with = "log_range")]
    values: Option<Vec<f64>>,
    /// START STOP POINTS, log-spaced.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "POINTS"])]
    log_range: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    m: Option<i64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    beta_minus: Option<f64>,
    #[arg(long)]
    compare_oracle: bool,
    /// Timed runs per row; the median is reported. Must be odd.
    #[arg(long, default_value_t = 11)]
    repeats: usize,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    beta_minus: f64,
    /// Smallest |G_m| kept.
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    #[arg(long, default_value_t = commands::DEFAULT_MAX_MODES)]
    max_modes: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    m: Vec<i64>,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    beta_minus: f64,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads_list: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Timed runs per worker count; the median is reported. Must be odd.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
}

#[derive(Args, Debug)]
struct NodesArgs {
    #[arg(long, allow_negative_numbers = true)]
    m: i64,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    beta_minus: f64,
    /// Comma-separated arc node factors.
    #[arg(long, value_delimiter = ',', required = true)]
    factors: Vec<f64>,
}

const THREADS_ENV: &str = "MGF_THREADS";

fn context(g: &Global) -> CliResult<Context> {
    let config = EvalConfig { m_bound: g.m_bound, node_factor: g.node_factor, ..EvalConfig::default() };
    config.validate()?;
    if !(g.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be > 0, got {}", g.tol)));
    }
    let threads = match (g.threads, std::env::var(THREADS_ENV)) {
        (Some(n), _) => n as usize,
        (None, Ok(v)) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => return Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        (None, Err(_)) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let scaling = match g.scaling {
        ScalingArg::Raw => Scaling::Raw,
        ScalingArg::Physical => Scaling::Physical,
    };
    Ok(Context { config, oracle: OracleConfig { tol: g.tol, ..OracleConfig::default() }, scaling, threads })
}

fn run(cli: Cli) -> CliResult<output::Table> {
    let ctx = context(&cli.global)?;
    match cli.command {
        Command::Eval(a) => {
            let point = match (a.beta_minus, a.r, a.rp, a.z, a.zp, a.k) {
                (Some(beta_minus), None, ..) => {
                    let kappa = a.kappa.ok_or_else(|| CliError::Usage("--beta-minus needs --kappa".into()))?;
                    Point::Direct { kappa, beta_minus }
                }
                (None, Some(r), Some(r_prime), Some(z), Some(z_prime), Some(k)) => {
                    Point::Geometry(GeometricInput { r, r_prime, z, z_prime, k })
                }
                _ => {
                    return Err(CliError::Usage(
                        "give either --kappa with --beta-minus, or all of --r --rp --z --zp --k".into(),
                    ))
                }
            };
            commands::eval(&ctx, a.m, point, a.compare_oracle)
        }
        Command::Sweep(a) => {
            let values = match (a.values, a.log_range) {
                (Some(v), _) => v,
                (None, Some(r)) => {
                    let points = r[2];
                    if points.fract() != 0.0 || points < 1.0 {
                        return Err(CliError::Usage(format!("POINTS must be a positive integer, got {points}")));
                    }
                    commands::log_range(r[0], r[1], points as usize)?
                }
                (None, None) => Vec::new(),
            };
            let spec = SweepSpec {
                axis: a.axis,
                values,
                m: a.m,
                kappa: a.kappa,
                beta_minus: a.beta_minus,
                compare_oracle: a.compare_oracle,
                repeats: a.repeats,
            };
            commands::sweep(&ctx, &spec)
        }
        Command::Spectrum(a) => commands::spectrum(&ctx, a.kappa, a.beta_minus, a.eps, a.max_modes),
        Command::Bench(a) => {
            let spec = BenchSpec {
                ms: a.m,
                kappa: a.kappa,
                beta_minus: a.beta_minus,
                threads: a.threads_list,
                batch: a.batch,
                repeats: a.repeats,
            };
            commands::bench(&ctx, &spec)
        }
        Command::Nodes(a) => commands::nodes(&ctx, a.m, a.kappa, a.beta_minus, &a.factors),
    }
}

fn emit(table: &output::Table, format: Format, out: Option<&Path>) -> io::Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            table.write(format, &mut w)?;
            w.flush()
        }
        None => table.write(format, io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.global.format;
    let out = cli.global.out.clone();
    let table = match run(cli) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("mgf: {}", e.message());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Err(e) = emit(&table, format, out.as_deref()) {
        eprintln!("mgf: cannot write output: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
