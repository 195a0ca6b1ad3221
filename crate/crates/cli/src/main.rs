//! `subschro`: batch verification front end for `subschro-core`.

mod commands;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{Report, Verdict};

#[derive(Debug, Parser)]
#[command(name = "subschro", version, about = "Subordinator kernels, 4G bounds and Schrödinger perturbation series")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads (0 = machine parallelism). Results do not depend on it.
    #[arg(long, env = "SUBSCHRO_THREADS", default_value_t = 0, global = true)]
    pub threads: usize,
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Relative quadrature tolerance overriding the per-command default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PointArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub s: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub y: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub x_lo: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub x_hi: f64,
    #[arg(long, default_value_t = 512)]
    pub x_points: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t_lo: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub t_hi: f64,
    #[arg(long, default_value_t = 9)]
    pub t_points: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition density ρ_c(0, 0, t, z), or the α-stable density with --alpha.
    Density(DensityArgs),
    /// Chapman-Kolmogorov residuals of ρ_c on a (c, u, y) grid with s = x = 0, t = 1.
    CkCheck(CkArgs),
    /// 4G constants: α, l(α), D, D′ and the Gaussian M for each d.
    Constants(ConstantsArgs),
    /// Random scan of the 4G inequality.
    #[command(name = "check-4g")]
    Check4g(Check4gArgs),
    /// 3G failure ratio along the diagonal configuration.
    #[command(name = "scan-3g")]
    Scan3g(Scan3gArgs),
    /// Kato functionals I_r^α(q) or N_h^c(q).
    Kato(KatoArgs),
    /// Admissibility certificate from N, I or an L^r norm.
    Certify(CertifyArgs),
    /// Perturbation series terms, partial sum and bounds at a point.
    Series(SeriesArgs),
    /// Bridge ratio, window scan, or the counterexample witness scan.
    Bridge(BridgeArgs),
    /// Fundamental-solution residual for a product test function.
    Fundsol(FundsolArgs),
    /// Monte Carlo cross-check of the bridge ratio, optionally with a KS test.
    McOracle(McArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub t: f64,
    /// One or more evaluation points (comma separated).
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub z: Vec<f64>,
    /// Dilation c of ρ_c.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Stability index in (0, 1); selects the α-stable density.
    #[arg(long, conflicts_with_all = ["lambda", "delta", "c"])]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CkArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub c: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75])]
    pub u: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub y: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub max_residual: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstantsArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    /// Dimensions for the Gaussian constant M.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32])]
    pub d: Vec<u32>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Check4gArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Times are drawn from (0, time_hi), positions from (0, space_hi).
    #[arg(long, default_value_t = 2.0)]
    pub time_hi: f64,
    #[arg(long, default_value_t = 3.0)]
    pub space_hi: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Scan3gArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0, 8.0])]
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    I,
    N,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KatoArgs {
    /// Potential descriptor, e.g. `powerlaw:eps=0.25` or `const:beta=2`.
    #[arg(long)]
    pub potential: String,
    #[arg(long, value_enum)]
    pub functional: Functional,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Dilation for N.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Time horizon for N.
    #[arg(long)]
    pub h: Option<f64>,
    /// Exponent α for I.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Radius r for I.
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertMethod {
    N,
    I,
    Lr,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CertifyArgs {
    #[arg(long, value_enum)]
    pub method: CertMethod,
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    /// Required for the N and I methods.
    #[arg(long)]
    pub potential: Option<String>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Target η for N and L^r.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Horizon h for N and I.
    #[arg(long)]
    pub h: Option<f64>,
    /// ‖q‖_r for L^r.
    #[arg(long)]
    pub norm: Option<f64>,
    /// Exponent r > 2 for L^r.
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeriesArgs {
    #[arg(long)]
    pub potential: String,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tail_tol: f64,
    #[arg(long, default_value_t = 16)]
    pub grid_nodes: usize,
    /// Certify from N with (a, b, η, h) and build the series over ρ_b.
    #[arg(long, num_args = 4, value_names = ["A", "B", "ETA", "H"])]
    pub certify_n: Option<Vec<f64>>,
    /// ε for the bound check that a certificate enables.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BridgeMode {
    Ratio,
    SupScan,
    Counterexample,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BridgeArgs {
    #[arg(long, value_enum)]
    pub mode: BridgeMode,
    #[arg(long)]
    pub potential: Option<String>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub s: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<f64>,
    /// Window centre for sup-scan.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub center: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.1, 0.01])]
    pub widths: Vec<f64>,
    /// Counterexample parameters.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eta_target: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1, 0.05])]
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FundsolArgs {
    /// Time factor of φ: a catalog name or `bump:<center>:<radius>`.
    #[arg(long, default_value = "bump:1:0.5")]
    pub time_fn: String,
    /// Space factor of φ.
    #[arg(long, default_value = "bump:1:0.5")]
    pub space_fn: String,
    #[arg(long)]
    pub potential: Option<String>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    pub s: f64,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub max_residual: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    #[arg(long)]
    pub potential: String,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long, default_value_t = 50_000)]
    pub samples_per_stream: u64,
    #[arg(long, default_value_t = 4)]
    pub streams: u64,
    /// Agreement threshold in combined standard errors.
    #[arg(long, default_value_t = 4.0)]
    pub k: f64,
    /// Also KS-test this many increments over t − s against the density.
    #[arg(long)]
    pub ks_samples: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub ks_alpha: f64,
}

/// Failures that map to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn emit(report: &Report, global: &Global) -> anyhow::Result<()> {
    let mut out: Box<dyn Write> = match &global.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    match global.format {
        Format::Json => report.write_json(&mut *out)?,
        Format::Csv => report.write_csv(&mut *out)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build_global() {
        eprintln!("error: cannot start the thread pool: {e}");
        return ExitCode::from(2);
    }
    let report = match commands::run(&cli) {
        Ok(r) => r,
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            let mut r = Report::new(commands::name(&cli.command), commands::inputs(&cli));
            r.error = Some(format!("{e:#}"));
            r.verdict(false);
            r
        }
    };
    if let Err(e) = emit(&report, &cli.global) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match report.pass_fail {
        Some(Verdict::Fail) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    }
}
