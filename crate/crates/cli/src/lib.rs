//! Command-line driver for afkit.
//!
//! [`run`] parses an argument list, executes one subcommand and returns the
//! process exit code: 0 on success, 2 on usage errors (bad flags, invalid
//! parameters, estimator/process pairing violations), 1 on runtime errors
//! (unreadable or malformed files, failed writes).

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use afkit::bench::{run_bench, Estimator};
use afkit::emaf::{compute_emaf, to_db, DbMode, GridKind};
use afkit::moments::{
    analytic_ma_spectrum, autocorrelation_from_spectrum, exact_covariance, flat_analytic_spectrum, naf_for,
    prop1_moments, prop2_moments, prop3_complementary, prop3_moments, um_modulation_spectrum, underspread_mean,
    underspread_relation, underspread_variance, GaussianMoments, MomentTable, MomentTriple, Remainder,
};
use afkit::signal::{generate, ProcessSpec};
use afkit::spread::{indicator, total_spread, SpreadRegion};
use afkit::threshold::{estimate, Method, ThresholdConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{BenchFile, ProcessArgs};
use crate::io::FormatError;

/// Environment variable supplying the default for `--threads`.
pub const THREADS_ENV: &str = "AFKIT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "afkit", version, about = "Thresholded ambiguity-function estimation")]
pub struct Cli {
    /// Worker threads (default: $AFKIT_THREADS, else all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one realization of a benchmark process.
    Gen {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output signal CSV (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Empirical ambiguity function of a signal.
    Emaf {
        #[arg(short, long)]
        input: PathBuf,
        /// Output grid, CSV or `.bin`.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the amplitude in dB.
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Hard-threshold an EMAF grid.
    Threshold {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Teaf)]
        method: MethodArg,
        /// Exponent C in the threshold level.
        #[arg(long = "c", default_value_t = 1.0)]
        c: f64,
        /// Number of square-annulus regions (LTEAF, LBTEAF).
        #[arg(long, default_value_t = 8)]
        regions: usize,
        /// Rim fraction for the noise-level estimate (LBTEAF).
        #[arg(long, default_value_t = 0.1)]
        rim: f64,
        /// Output grid, CSV or `.bin` (stdout CSV when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Sidecar JSON with the threshold estimates.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Also write the amplitude in dB.
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Reference (N-AF) grid of a benchmark process.
    Naf {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Support mask CSV.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Total spread of a grid's nonzero cells.
    Spread {
        #[arg(short, long)]
        input: PathBuf,
        /// Restrict to the lag row tau.
        #[arg(long, allow_negative_numbers = true)]
        tau: Option<i64>,
        /// Output JSON (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Closed-form EMAF moments at one cell.
    Moments(MomentsArgs),
    /// Monte Carlo MSE and spread benchmark.
    Bench {
        /// Flat TOML experiment manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated estimator list.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<String>>,
        #[arg(long = "c")]
        c: Option<f64>,
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long)]
        rim: Option<f64>,
        /// Output report JSON (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Directory for per-cell MSE grids, one CSV per estimator.
        #[arg(long)]
        mse_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Teaf,
    Lteaf,
    Lbteaf,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Teaf => Method::Teaf,
            MethodArg::Lteaf => Method::Lteaf,
            MethodArg::Lbteaf => Method::Lbteaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PropArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    #[value(name = "thm1")]
    Thm1,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long, value_enum)]
    pub prop: PropArg,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub nu: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0)]
    pub tau: i64,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Process (default: chirp for 1, ma for 2 and thm1, um for 3).
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Spread T of the underspread approximation (thm1).
    #[arg(long, default_value_t = 12)]
    pub t_spread: usize,
    /// Also report the exact Gaussian moments.
    #[arg(long)]
    pub exact: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("afkit: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(k) = flag {
        return Ok(k);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{THREADS_ENV}='{v}' is not a thread count"))),
        Err(_) => Ok(0),
    }
}

/// Executes a parsed command inside a thread pool of the requested size.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(runtime)?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen { process, n, seed, output } => {
            let spec = process.resolve(None)?;
            spec.validate(n).map_err(usage)?;
            let x = generate(&spec, n, seed).map_err(runtime)?;
            emit(output.as_deref(), io::signal_to_csv(&x, Some(spec.name())).into_bytes())
        }
        Command::Emaf { input, output, db } => {
            let (x, header) = io::signal_from_csv(&io::read_text(&input)?)?;
            let g = compute_emaf(&x);
            let mut outputs = vec![(output.as_path(), grid_bytes(&output, &g, header.process.as_deref()))];
            let db_bytes;
            if let Some(path) = &db {
                db_bytes = io::real_grid_to_csv(&to_db(&g, DbMode::Amplitude).map_err(runtime)?, g.n(), "db").into_bytes();
                outputs.push((path.as_path(), db_bytes));
            }
            io::write_all(&outputs)?;
            Ok(())
        }
        Command::Threshold { input, method, c, regions, rim, output, meta, db } => {
            let cfg = ThresholdConfig {
                c_exponent: c,
                region_count: regions,
                rim_fraction: rim,
                method: method.into(),
            };
            cfg.validate().map_err(usage)?;
            let (g, header) = io::read_grid(&input)?;
            if let Some(name) = &header.process {
                let spec = config::preset(name).map_err(runtime)?;
                let e = Estimator::from(cfg.method);
                if !e.supports(&spec) {
                    return Err(usage(format!(
                        "estimator {} does not apply to the {name} process",
                        e.as_str()
                    )));
                }
            }
            if g.kind() != GridKind::Raw {
                return Err(usage(format!("threshold needs a raw EMAF grid, got kind={}", g.kind().as_str())));
            }
            let est = estimate(&g, &cfg).map_err(runtime)?;
            let process = header.process.as_deref();
            let mut outputs: Vec<(&Path, Vec<u8>)> = Vec::new();
            if let Some(path) = &output {
                outputs.push((path.as_path(), grid_bytes(path, &est.grid, process)));
            }
            if let Some(path) = &meta {
                outputs.push((path.as_path(), json_bytes(&est.report)?));
            }
            if let Some(path) = &db {
                let v = to_db(&est.grid, DbMode::Amplitude).map_err(runtime)?;
                outputs.push((path.as_path(), io::real_grid_to_csv(&v, g.n(), "db").into_bytes()));
            }
            io::write_all(&outputs)?;
            if output.is_none() {
                emit(None, io::grid_to_csv(&est.grid, process).into_bytes())?;
            }
            Ok(())
        }
        Command::Naf { process, n, output, mask } => {
            let spec = process.resolve(None)?;
            spec.validate(n).map_err(usage)?;
            let naf = naf_for(&spec, n).map_err(runtime)?;
            let mut outputs = vec![(output.as_path(), grid_bytes(&output, &naf.grid, Some(spec.name())))];
            if let Some(path) = &mask {
                outputs.push((path.as_path(), io::mask_to_csv(&naf.support, n).into_bytes()));
            }
            io::write_all(&outputs)?;
            Ok(())
        }
        Command::Spread { input, tau, output } => {
            let (g, _) = io::read_grid(&input)?;
            let region = tau.map_or(SpreadRegion::All, SpreadRegion::Lag);
            let report = total_spread(&indicator(&g), g.n(), &region).map_err(usage)?;
            emit(output.as_deref(), json_bytes(&report)?)
        }
        Command::Moments(args) => moments(args),
        Command::Bench {
            config,
            process,
            n,
            trials,
            seed,
            estimators,
            c,
            regions,
            rim,
            output,
            mse_dir,
        } => {
            let mut file = match &config {
                Some(path) => BenchFile::parse(&io::read_text(path)?).map_err(runtime)?,
                None => BenchFile::default(),
            };
            file.apply_overrides(&process, n, trials, seed, estimators, c, regions, rim);
            let cfg = file.into_config()?;
            let report = run_bench(&cfg).map_err(usage)?;
            let mut outputs = vec![];
            let mut paths = vec![];
            if let Some(dir) = &mse_dir {
                std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
                for s in &report.estimators {
                    if let Some(grid) = &s.mse_grid {
                        paths.push(dir.join(format!("mse_{}.csv", s.estimator.as_str())));
                        outputs.push(io::grid_to_csv(grid, Some(cfg.process.name())).into_bytes());
                    }
                }
            }
            let report_bytes = json_bytes(&report)?;
            let mut staged: Vec<(&Path, Vec<u8>)> = paths.iter().map(PathBuf::as_path).zip(outputs).collect();
            match &output {
                Some(path) => staged.push((path.as_path(), report_bytes)),
                None => {
                    io::write_all(&staged)?;
                    return emit(None, report_bytes);
                }
            }
            io::write_all(&staged)?;
            Ok(())
        }
    }
}

fn grid_bytes(path: &Path, g: &afkit::AmbiguityGrid, process: Option<&str>) -> Vec<u8> {
    if io::is_binary(path) {
        io::grid_to_binary(g)
    } else {
        io::grid_to_csv(g, process).into_bytes()
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn emit(path: Option<&Path>, bytes: Vec<u8>) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(io::write_all(&[(p, bytes)])?),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes).and_then(|_| out.flush()).map_err(runtime)
        }
    }
}

#[derive(Serialize)]
struct MomentsOutput {
    prop: &'static str,
    process: ProcessSpec,
    n: usize,
    nu: f64,
    tau: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_spread: Option<usize>,
    closed_form: MomentTriple,
    /// Pseudo-covariance terms of the UM process, absent from the closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    complementary: Option<Complementary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<MomentTriple>,
}

#[derive(Serialize)]
struct Complementary {
    variance: f64,
    relation: Complex64,
}

fn moments(args: MomentsArgs) -> Result<(), CliError> {
    let default = match args.prop {
        PropArg::One => "chirp",
        PropArg::Two | PropArg::Thm1 => "ma",
        PropArg::Three => "um",
    };
    let spec = args.process.resolve(Some(default))?;
    let n = args.n;
    spec.validate(n).map_err(usage)?;
    let (nu, tau) = (args.nu, args.tau);
    if !(-0.5..=0.5).contains(&nu) {
        return Err(usage(format!("nu = {nu} is outside [-1/2, 1/2]")));
    }
    let mut complementary = None;
    let mut t_spread = None;
    let closed_form = match args.prop {
        PropArg::One => {
            let ProcessSpec::ChirpInNoise { noise_psd, .. } = spec else {
                return Err(usage("--prop 1 needs the chirp process"));
            };
            prop1_moments(&spec.deterministic_part(n), noise_psd, nu, tau, n).map_err(usage)?
        }
        PropArg::Two => {
            let spectrum = match &spec {
                ProcessSpec::MovingAverage { weights, xi_var } => analytic_ma_spectrum(weights, *xi_var),
                ProcessSpec::AnalyticWhiteNoise { psd } => flat_analytic_spectrum(*psd),
                _ => return Err(usage("--prop 2 needs a stationary process (ma or noise)")),
            }
            .map_err(runtime)?;
            prop2_moments(|t| autocorrelation_from_spectrum(&spectrum, t), &spectrum, nu, tau, n).map_err(usage)?
        }
        PropArg::Three => {
            let ProcessSpec::UniformlyModulated { f0 } = spec else {
                return Err(usage("--prop 3 needs the um process"));
            };
            let sigma = um_modulation_spectrum(f0, n).map_err(runtime)?;
            let (variance, relation) = prop3_complementary(&sigma, nu, tau, n).map_err(usage)?;
            complementary = Some(Complementary { variance, relation });
            prop3_moments(&sigma, nu, tau, n).map_err(usage)?
        }
        PropArg::Thm1 => {
            if !spec.is_stochastic() {
                return Err(usage("--prop thm1 needs a zero-mean stochastic process"));
            }
            let t = args.t_spread;
            t_spread = Some(t);
            let cov = exact_covariance(&spec, n).map_err(runtime)?;
            let table = MomentTable::from_covariance(&cov, n, t).map_err(usage)?;
            MomentTriple {
                mean: underspread_mean(&table, nu, tau),
                variance: underspread_variance(&table, t, nu, tau).map_err(usage)?,
                relation: underspread_relation(&table, t, nu, tau).map_err(usage)?,
                omitted: Remainder::LogNOverT,
            }
        }
    };
    let exact = if args.exact {
        Some(GaussianMoments::new(&spec, n).and_then(|g| g.at(nu, tau)).map_err(usage)?)
    } else {
        None
    };
    let prop = match args.prop {
        PropArg::One => "1",
        PropArg::Two => "2",
        PropArg::Three => "3",
        PropArg::Thm1 => "thm1",
    };
    let out = MomentsOutput {
        prop,
        process: spec,
        n,
        nu,
        tau,
        t_spread,
        closed_form,
        complementary,
        exact,
    };
    emit(args.output.as_deref(), json_bytes(&out)?)
}
