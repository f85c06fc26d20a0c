mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{parse_potential, parse_tol, RunConfig};
use error::CliError;
use output::{Manifest, Outputs};

#[derive(Parser)]
#[command(name = "polyprop", version, about = "Kernels, zero-energy classification and propagators for (-Δ)^m + V")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    m: Option<i64>,
    #[arg(long, global = true)]
    n: Option<i64>,
    /// Expected resonance kind.
    #[arg(long, global = true)]
    k: Option<i64>,
    /// Name (zero, gauss_well, small_bump, bump_resonant, kind_one_resonant), inline JSON or @file.json.
    #[arg(long, global = true)]
    potential: Option<String>,
    #[arg(long = "grid-L", global = true)]
    grid_l: Option<f64>,
    #[arg(long = "grid-N", global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true)]
    lambda_min: Option<f64>,
    #[arg(long, global = true)]
    lambda_max: Option<f64>,
    #[arg(long, global = true)]
    t_max: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Tolerance override, NAME=VALUE; repeatable.
    #[arg(long = "tol", global = true, value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Free resolvent kernel samples, or the free propagator with --free.
    Kernel {
        #[arg(long)]
        free: bool,
        /// Largest r (scaled variable t^{-1/2m} r with --free).
        #[arg(long, default_value_t = 10.0)]
        r_max: f64,
        #[arg(long, default_value_t = 21)]
        r_points: usize,
        #[arg(long, default_value_t = 9)]
        lambda_points: usize,
    },
    /// Threshold expansion coefficients of the free resolvent.
    Coeffs,
    /// Resonance kind of zero energy.
    Classify,
    /// Block expansion of the inverse Birman-Schwinger operator near zero.
    MinvExpand,
    /// Perturbed propagator kernel at the sample points.
    Propagate {
        /// Compare against the Bloch-Floquet eigendecomposition.
        #[arg(long)]
        oracle: bool,
    },
    /// Long-time decay exponent of the perturbed propagator.
    DecayFit {
        #[arg(long)]
        oracle: bool,
    },
    /// Decay exponents of the model oscillatory integrals.
    LemmaCheck {
        #[arg(long, value_delimiter = ',', default_value = "0")]
        b: Vec<f64>,
    },
    /// Quick consistency suite.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel { .. } => "kernel",
            Command::Coeffs => "coeffs",
            Command::Classify => "classify",
            Command::MinvExpand => "minv-expand",
            Command::Propagate { .. } => "propagate",
            Command::DecayFit { .. } => "decay-fit",
            Command::LemmaCheck { .. } => "lemma-check",
            Command::Selftest => "selftest",
        }
    }
}

fn resolve(common: Common) -> Result<RunConfig, CliError> {
    let mut c = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = common.m {
        c.m = v;
    }
    if let Some(v) = common.n {
        c.n = v;
    }
    if common.k.is_some() {
        c.k = common.k;
    }
    if let Some(p) = &common.potential {
        c.potential = parse_potential(p).map_err(CliError::Validation)?;
    }
    if common.grid_l.is_some() {
        c.grid_half_width = common.grid_l;
    }
    if common.grid_n.is_some() {
        c.grid_points = common.grid_n;
    }
    if common.lambda_min.is_some() {
        c.lambda_min = common.lambda_min;
    }
    if common.lambda_max.is_some() {
        c.lambda_max = common.lambda_max;
    }
    if common.t_max.is_some() {
        c.t_max = common.t_max;
    }
    if let Some(o) = common.out {
        c.out = o;
    }
    if common.svg {
        c.svg = true;
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    c.tolerances.extend(common.tol);
    for name in c.tolerances.keys() {
        if !commands::TOLERANCES.contains(&name.as_str()) {
            return Err(CliError::Validation(format!(
                "unknown tolerance '{name}'; known: {}",
                commands::TOLERANCES.join(", ")
            )));
        }
    }
    Ok(c)
}

fn threads() -> Result<usize, CliError> {
    match std::env::var("POLYPROP_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Validation(format!("POLYPROP_THREADS='{v}' is not a positive integer")))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            Ok(n)
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let clock = Instant::now();
    let threads = threads()?;
    let name = cli.command.name();
    let config = resolve(cli.common)?;
    let mut out = Outputs::new(&config.out)?;
    let checks = match cli.command {
        Command::Kernel {
            free,
            r_max,
            r_points,
            lambda_points,
        } => {
            if free {
                commands::free_kernel(&config, &mut out, r_max, r_points)?
            } else {
                commands::kernel(&config, &mut out, r_max, r_points, lambda_points)?
            }
        }
        Command::Coeffs => commands::coeffs(&config, &mut out)?,
        Command::Classify => commands::classify(&config, &mut out)?,
        Command::MinvExpand => commands::minv_expand(&config, &mut out)?,
        Command::Propagate { oracle } => commands::propagate(&config, &mut out, oracle)?,
        Command::DecayFit { oracle } => commands::decay(&config, &mut out, oracle)?,
        Command::LemmaCheck { b } => commands::lemma(&config, &mut out, &b)?,
        Command::Selftest => commands::selftest(&config)?,
    };
    let failed: Vec<&output::Check> = checks.iter().filter(|c| !c.pass).collect();
    let fit = failed.iter().any(|c| c.kind == output::CheckKind::Fit);
    let failed_names: Vec<String> = failed.iter().map(|c| format!("{} = {:e} (tolerance {:e})", c.name, c.value, c.tolerance)).collect();
    let mut outputs = out.files.clone();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config: &config,
        threads,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        outputs,
        pass: failed.is_empty(),
        checks,
    };
    out.json("manifest.json", &manifest)?;
    for c in &manifest.checks {
        println!("{:<4} {} = {:.3e} (tolerance {:.1e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    println!("wrote {} files to {}", manifest.outputs.len(), config.out.display());
    if failed_names.is_empty() {
        Ok(())
    } else {
        Err(CliError::Checks { failed: failed_names, fit })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polyprop: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
