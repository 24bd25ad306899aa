//! `fraclab` command line: parse flags and an optional TOML config, run one
//! experiment, write its report.
//!
//! Exit status: 0 when no verdict failed, 1 on a failed verdict or a
//! numerical error, 2 on usage or validation errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::experiments::{
    constants_report, convergence_study, counterexample_scan, interp_sweep, sign_sweep, truncation_bound_probe,
    verify_identity_with, ExperimentError, ExperimentReport, Richardson, Verdict,
};
use crate::grid::GridSpec;
use crate::special_functions::{kernel_constant, FractionalOrder};

const DEFAULT_FUNC: &str = "x*exp(-x^2)";

#[derive(Debug, Parser)]
#[command(name = "fraclab", version, about = "Numerical checks of fractional Laplacian identities on truncations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print C_{n,s} for one or more orders.
    Constants(Common),
    /// Compare spectral and kernel sides of <(-Delta)^s u^+, u^->.
    Identity(Common),
    /// Sign of Q_s(|u|) - Q_s(u) against sign of C_{n,s}.
    SignSweep(Common),
    /// Partial sums of Q_s(phi^+) over growing frequency cutoffs.
    Counterexample(Common),
    /// Q_s((u - eps)^+) along a decreasing eps list.
    TruncationBound(Common),
    /// Interpolation inequality on seeded random functions.
    Interp(Common),
    /// Spectral and kernel values against grid size.
    Convergence(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RichardsonFlag {
    Auto,
    On,
    Off,
}

/// Flags shared by every subcommand; each has a documented default.
#[derive(Debug, Args)]
struct Common {
    /// Test function of x (or x1, x2) [default: x*exp(-x^2)]
    #[arg(long)]
    func: Option<String>,
    /// Spatial dimension [default: 1]
    #[arg(long)]
    n: Option<usize>,
    /// Half-width of the domain [-L, L]^n [default: 20]
    #[arg(long = "L")]
    l: Option<f64>,
    /// Points per axis, a power of two [default: 16384]
    #[arg(long = "N")]
    points: Option<usize>,
    /// Order(s) s, comma separated [default depends on the subcommand]
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<f64>>,
    /// Decreasing eps list for truncation-bound [default: 0.2,0.1,0.05,0.02,0.01]
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Frequency cutoffs for counterexample [default: 64,128,256,512,1024,2048]
    #[arg(long, value_delimiter = ',')]
    cutoffs: Option<Vec<f64>>,
    /// Grid sizes for convergence [default: 1024,2048,4096,8192]
    #[arg(long = "N-list", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Relative tolerance [default: 1e-3]
    #[arg(long)]
    tol: Option<f64>,
    /// Random seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random functions for interp [default: 100]
    #[arg(long)]
    count: Option<usize>,
    /// Largest order drawn by interp [default: 1.45]
    #[arg(long = "s-max")]
    s_max: Option<f64>,
    /// Richardson extrapolation over N for identity [default: auto]
    #[arg(long, value_enum)]
    richardson: Option<RichardsonFlag>,
    /// Report path; printed to stdout when absent [default: none]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format [default: json, or csv for a .csv output path]
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// TOML file with the same keys as the flags; flags win [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Config file keys. Lists may be given as arrays or single numbers.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    func: Option<String>,
    n: Option<usize>,
    #[serde(rename = "L")]
    l: Option<f64>,
    #[serde(rename = "N")]
    points: Option<usize>,
    s: Option<OneOrMany<f64>>,
    eps: Option<OneOrMany<f64>>,
    cutoffs: Option<OneOrMany<f64>>,
    #[serde(rename = "N-list")]
    n_list: Option<OneOrMany<usize>>,
    tol: Option<f64>,
    seed: Option<u64>,
    count: Option<usize>,
    #[serde(rename = "s-max")]
    s_max: Option<f64>,
    richardson: Option<RichardsonFlag>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Fully resolved parameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub func: String,
    pub n: usize,
    pub half_width: f64,
    pub points: usize,
    pub s: Vec<f64>,
    pub eps: Vec<f64>,
    pub cutoffs: Vec<f64>,
    pub n_list: Vec<usize>,
    pub tol: f64,
    pub seed: u64,
    pub count: usize,
    pub s_max: f64,
    pub richardson: Richardson,
    pub out: Option<PathBuf>,
    pub csv: bool,
}

enum CliError {
    Usage(String),
    Failure(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_validation() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

fn default_s(subcommand: &str) -> Vec<f64> {
    match subcommand {
        "sign-sweep" => vec![0.25, 0.5, 0.75, 1.1, 1.25, 1.4],
        "counterexample" => vec![1.3, 1.4, 1.6, 1.7],
        "constants" | "convergence" => vec![0.5],
        _ => vec![1.25],
    }
}

fn resolve(name: &str, flags: Common) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let out = flags.out.or(file.out);
    let format = flags.format.or(file.format);
    let csv = match format {
        Some(f) => f == Format::Csv,
        None => out.as_deref().and_then(Path::extension).is_some_and(|e| e == "csv"),
    };
    let richardson = match flags.richardson.or(file.richardson).unwrap_or(RichardsonFlag::Auto) {
        RichardsonFlag::Auto => Richardson::Auto,
        RichardsonFlag::On => Richardson::On,
        RichardsonFlag::Off => Richardson::Off,
    };
    let cfg = RunConfig {
        subcommand: name.to_string(),
        func: flags.func.or(file.func).unwrap_or_else(|| DEFAULT_FUNC.to_string()),
        n: flags.n.or(file.n).unwrap_or(1),
        half_width: flags.l.or(file.l).unwrap_or(20.0),
        points: flags.points.or(file.points).unwrap_or(16384),
        s: flags.s.or(file.s.map(OneOrMany::into_vec)).unwrap_or_else(|| default_s(name)),
        eps: flags.eps.or(file.eps.map(OneOrMany::into_vec)).unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.02, 0.01]),
        cutoffs: flags
            .cutoffs
            .or(file.cutoffs.map(OneOrMany::into_vec))
            .unwrap_or_else(|| vec![64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0]),
        n_list: flags.n_list.or(file.n_list.map(OneOrMany::into_vec)).unwrap_or_else(|| vec![1024, 2048, 4096, 8192]),
        tol: flags.tol.or(file.tol).unwrap_or(1e-3),
        seed: flags.seed.or(file.seed).unwrap_or(42),
        count: flags.count.or(file.count).unwrap_or(100),
        s_max: flags.s_max.or(file.s_max).unwrap_or(1.45),
        richardson,
        out,
        csv,
    };
    validate(&cfg)?;
    Ok(cfg)
}

/// Checks that need no computation, run before any experiment starts.
fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Usage(msg));
    if cfg.s.is_empty() {
        return bad("--s needs at least one value".into());
    }
    for &s in &cfg.s {
        if !(s.is_finite() && s > 0.0) {
            return bad(format!("order s = {s} must be positive"));
        }
    }
    if !(cfg.tol.is_finite() && cfg.tol > 0.0) {
        return bad(format!("--tol must be positive, got {}", cfg.tol));
    }
    let single = matches!(cfg.subcommand.as_str(), "identity" | "truncation-bound" | "convergence");
    if single && cfg.s.len() != 1 {
        return bad(format!("{} takes a single --s value", cfg.subcommand));
    }
    let needs_fraction = matches!(cfg.subcommand.as_str(), "identity" | "sign-sweep" | "constants");
    if needs_fraction {
        for &s in &cfg.s {
            FractionalOrder::non_integer(s).map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    if cfg.subcommand != "convergence" && cfg.subcommand != "constants" {
        GridSpec::new(cfg.n, cfg.half_width, cfg.points).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if cfg.subcommand == "constants" && !(1..=3).contains(&cfg.n) {
        return bad(format!("--n must be 1, 2 or 3 for constants, got {}", cfg.n));
    }
    Ok(())
}

fn execute(cfg: &RunConfig) -> Result<ExperimentReport, CliError> {
    let grid = || GridSpec::new(cfg.n, cfg.half_width, cfg.points).map_err(|e| CliError::Usage(e.to_string()));
    let report = match cfg.subcommand.as_str() {
        "constants" => constants_report(cfg.n, &cfg.s)?,
        "identity" => verify_identity_with(&cfg.func, cfg.s[0], &grid()?, cfg.tol, cfg.richardson)?,
        "sign-sweep" => sign_sweep(&cfg.func, &cfg.s, &grid()?)?,
        "counterexample" => counterexample_scan(&cfg.func, &cfg.s, &cfg.cutoffs, &grid()?)?,
        "truncation-bound" => truncation_bound_probe(&cfg.func, cfg.s[0], &cfg.eps, &grid()?, cfg.tol)?,
        "interp" => interp_sweep(cfg.count, cfg.seed, cfg.s_max, &grid()?)?,
        "convergence" => convergence_study(&cfg.func, cfg.s[0], &cfg.n_list, cfg.n, cfg.half_width)?,
        other => return Err(CliError::Usage(format!("unknown subcommand {other}"))),
    };
    Ok(report)
}

/// Writes a report as JSON or CSV.
pub fn emit_report<W: Write>(report: &ExperimentReport, out: W, csv: bool) -> io::Result<()> {
    let mut out = out;
    if csv {
        report.write_csv(&mut out).map_err(io::Error::other)?;
    } else {
        out.write_all(report.to_json().as_bytes())?;
    }
    out.flush()
}

fn emit_to_path(report: &ExperimentReport, path: &Path, csv: bool) -> Result<(), CliError> {
    let fail = |e: io::Error| CliError::Failure(format!("cannot write {}: {e}", path.display()));
    let file = File::create(path).map_err(fail)?;
    emit_report(report, BufWriter::new(file), csv).map_err(fail)
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var("FRACLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("FRACLAB_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

fn summary(report: &ExperimentReport) -> String {
    format!(
        "{}: {} pass, {} fail, {} inconclusive, {} info ({:.3} s)",
        report.experiment,
        report.count(Verdict::Pass),
        report.count(Verdict::Fail),
        report.count(Verdict::Inconclusive),
        report.count(Verdict::Info),
        report.runtime_seconds
    )
}

fn run_inner(argv: &[String]) -> Result<i32, CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return Ok(code);
        }
    };
    let (name, flags) = match cli.command {
        Command::Constants(c) => ("constants", c),
        Command::Identity(c) => ("identity", c),
        Command::SignSweep(c) => ("sign-sweep", c),
        Command::Counterexample(c) => ("counterexample", c),
        Command::TruncationBound(c) => ("truncation-bound", c),
        Command::Interp(c) => ("interp", c),
        Command::Convergence(c) => ("convergence", c),
    };
    let cfg = resolve(name, flags)?;
    let threads = thread_count()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Failure(e.to_string()))?;
    let report = pool.install(|| execute(&cfg))?;

    let stdout = io::stdout();
    if cfg.subcommand == "constants" {
        let mut lock = stdout.lock();
        for &s in &cfg.s {
            let c = kernel_constant(cfg.n, FractionalOrder::non_integer(s).map_err(|e| CliError::Usage(e.to_string()))?)
                .map_err(|e| CliError::Failure(e.to_string()))?;
            let _ = writeln!(lock, "C_{{{},{}}} = {}", cfg.n, s, c.value);
        }
        if let Some(path) = &cfg.out {
            emit_to_path(&report, path, cfg.csv)?;
        }
    } else if let Some(path) = &cfg.out {
        emit_to_path(&report, path, cfg.csv)?;
        println!("{}", summary(&report));
    } else {
        emit_report(&report, stdout.lock(), cfg.csv).map_err(|e| CliError::Failure(e.to_string()))?;
        eprintln!("{}", summary(&report));
    }
    Ok(if report.passed() { 0 } else { 1 })
}

/// Runs the command line `argv` (program name first) and returns the exit status.
pub fn run(argv: &[String]) -> i32 {
    match run_inner(argv) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("fraclab").chain(list.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn integer_order_is_a_validation_error() {
        assert_eq!(run(&args(&["identity", "--s", "2.0"])), 2);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(&args(&["identity", "--bogus", "1"])), 2);
        assert_eq!(run(&args(&["nonsense"])), 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(&args(&["identity", "--help"])), 0);
    }

    #[test]
    fn bad_grid_is_rejected_before_running() {
        assert_eq!(run(&args(&["interp", "--N", "1000"])), 2);
        assert_eq!(run(&args(&["identity", "--tol", "-1"])), 2);
    }
}
