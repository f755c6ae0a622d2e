//! Command-line front end: `csa2sls estimate` and `csa2sls montecarlo`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::amse::{csa2sls, Csa2slsOptions, PrelimMode};
use crate::dataframe::{build_model_frame, expand_varlist, load_csv};
use crate::error::{Error, Result};
use crate::estimators::{EstimationResult, ProjectionMode};
use crate::montecarlo::{run_grid_with, write_tsv_file, McCellResult, McConfig};
use crate::numfmt::format_g;
use crate::{DEFAULT_MAX_SUBSETS, DEFAULT_SEED};

mod report;
mod stored;

pub use report::render_report;
pub use stored::{emit_json, StoredResults};

#[derive(Parser, Debug)]
#[command(name = "csa2sls", version, about = "Complete subset averaging 2SLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a model from a CSV file.
    Estimate(EstimateArgs),
    /// Run the OLS / 2SLS / CSA2SLS simulation and write a TSV.
    Montecarlo(MontecarloArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Dependent variable.
    #[arg(long)]
    dep: String,
    /// Included exogenous regressors.
    #[arg(long, num_args = 1..)]
    exog: Vec<String>,
    /// Endogenous regressors.
    #[arg(long, num_args = 1.., required = true)]
    endo: Vec<String>,
    /// Excluded instruments, ranges like z1-z14 allowed.
    #[arg(long, num_args = 1.., required = true)]
    iv: Vec<String>,
    /// Suppress the constant term.
    #[arg(long)]
    noconstant: bool,
    /// Accumulate projections without forming N x N matrices.
    #[arg(long)]
    large: bool,
    /// Use all-instrument 2SLS as the preliminary estimator.
    #[arg(long)]
    onestep: bool,
    /// Suppress all non-error output.
    #[arg(long)]
    quiet: bool,
    /// Maximum number of subsets averaged per k.
    #[arg(long, default_value_t = DEFAULT_MAX_SUBSETS as u64,
          value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    /// Seed for subset sampling.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write stored results as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MontecarloArgs {
    /// Comma separated instrument counts.
    #[arg(long = "K", value_delimiter = ',', default_values_t = [5usize, 10, 15, 20])]
    k: Vec<usize>,
    /// Comma separated instrument correlations.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0f64, 0.5, 0.9])]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// Sample size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_SUBSETS as u64,
          value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    #[arg(long)]
    onestep: bool,
    /// Form dense N x N projectors instead of streaming accumulation.
    #[arg(long)]
    dense: bool,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta0: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    beta1: f64,
    /// Covariance between the structural and first-stage errors.
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    cov: f64,
    /// Population first-stage R-squared.
    #[arg(long, default_value_t = 0.1)]
    r1sq: f64,
    #[arg(long, default_value = "csa2sls_montecarlo.tsv")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliSpec {
    Estimate(EstimateSpec),
    Montecarlo(MontecarloSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSpec {
    pub data_path: PathBuf,
    pub dep: String,
    /// Unexpanded varlists; resolved against the file header at run time.
    pub exog: String,
    pub endo: String,
    pub iv: String,
    pub noconstant: bool,
    pub large: bool,
    pub onestep: bool,
    pub quiet: bool,
    pub r: usize,
    pub seed: u64,
    pub json_out: Option<PathBuf>,
    /// argv joined by single spaces.
    pub cmdline: String,
}

impl EstimateSpec {
    pub fn options(&self) -> Csa2slsOptions {
        Csa2slsOptions {
            r: self.r,
            seed: self.seed,
            prelim: if self.onestep {
                PrelimMode::OneStep
            } else {
                PrelimMode::Mallows
            },
            projection: self.large.then_some(ProjectionMode::Streaming),
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MontecarloSpec {
    pub config: McConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

fn parse_clap(argv: &[String]) -> std::result::Result<CliSpec, clap::Error> {
    let cli = Cli::try_parse_from(argv)?;
    Ok(match cli.command {
        Command::Estimate(a) => CliSpec::Estimate(EstimateSpec {
            data_path: a.data,
            dep: a.dep,
            exog: a.exog.join(" "),
            endo: a.endo.join(" "),
            iv: a.iv.join(" "),
            noconstant: a.noconstant,
            large: a.large,
            onestep: a.onestep,
            quiet: a.quiet,
            r: a.r as usize,
            seed: a.seed,
            json_out: a.json,
            cmdline: argv.join(" "),
        }),
        Command::Montecarlo(a) => CliSpec::Montecarlo(MontecarloSpec {
            config: McConfig {
                k_grid: a.k,
                rho_grid: a.rho,
                n: a.n,
                reps: a.reps as usize,
                beta0: a.beta0,
                beta1: a.beta1,
                cov_eps_u: a.cov,
                r1sq: a.r1sq,
                seed: a.seed,
                r: a.r as usize,
                prelim: if a.onestep {
                    PrelimMode::OneStep
                } else {
                    PrelimMode::Mallows
                },
                projection: if a.dense {
                    ProjectionMode::Dense
                } else {
                    ProjectionMode::Streaming
                },
            },
            out: a.out,
            quiet: a.quiet,
        }),
    })
}

/// Parses a full argv (program name first). Clap failures, including
/// help requests, come back as [`Error::Usage`].
pub fn parse_args(argv: &[String]) -> Result<CliSpec> {
    parse_clap(argv).map_err(|e| Error::Usage(e.to_string().trim_end().to_string()))
}

/// Loads the data, selects k, estimates, prints the report (unless quiet)
/// and writes JSON when requested.
pub fn run_estimate<W: Write>(
    spec: &EstimateSpec,
    out: &mut W,
) -> Result<(EstimationResult, StoredResults)> {
    let table = load_csv(&spec.data_path)?;
    let names = table.column_names();
    let dep = expand_varlist(&spec.dep, names)?;
    if dep.len() != 1 {
        return Err(Error::Usage(format!(
            "--dep must name one variable, got '{}'",
            spec.dep
        )));
    }
    let exog = expand_varlist(&spec.exog, names)?;
    let endo = expand_varlist(&spec.endo, names)?;
    let iv = expand_varlist(&spec.iv, names)?;
    let frame = build_model_frame(&table, &dep[0], &exog, &endo, &iv, !spec.noconstant)?;
    let opts = spec.options();
    let result = csa2sls(&frame, &opts)?;
    let stored = StoredResults::new(&result, &frame, opts.prelim, &spec.cmdline);
    let write_err = |source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    if !spec.quiet {
        writeln!(out, "{}", table.summary()).map_err(write_err)?;
        write!(out, "{}", render_report(&result, &frame)).map_err(write_err)?;
    }
    if let Some(path) = &spec.json_out {
        emit_json(&stored, path)?;
    }
    Ok((result, stored))
}

pub fn cell_summary(cell: &McCellResult) -> String {
    let g = |x: f64| format_g(x, 5);
    format!(
        "K={} rho={}: bias ols={} tsls={} csa2sls={}; mse ols={} tsls={} csa2sls={}; mean k={}",
        cell.k,
        format_g(cell.rho, 6),
        g(cell.ols.mean_bias),
        g(cell.tsls.mean_bias),
        g(cell.csa2sls.mean_bias),
        g(cell.ols.mse),
        g(cell.tsls.mse),
        g(cell.csa2sls.mse),
        format_g(cell.mean_k_opt, 4)
    )
}

/// Runs the simulation grid and writes the TSV.
pub fn run_montecarlo<W: Write>(spec: &MontecarloSpec, out: &mut W) -> Result<Vec<McCellResult>> {
    let mut io_failure = None;
    let cells = run_grid_with(&spec.config, |cell| {
        if !spec.quiet && io_failure.is_none() {
            if let Err(e) = writeln!(out, "{}", cell_summary(cell)) {
                io_failure = Some(e);
            }
        }
    })?;
    if let Some(source) = io_failure {
        return Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        });
    }
    write_tsv_file(&spec.config, &cells, &spec.out)?;
    if !spec.quiet {
        writeln!(out, "wrote {}", spec.out.display()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?;
    }
    Ok(cells)
}

/// Entry point used by the binary. Returns the process exit status.
pub fn run<W: Write, E: Write>(argv: &[String], stdout: &mut W, stderr: &mut E) -> i32 {
    let spec = match parse_clap(argv) {
        Ok(spec) => spec,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let outcome = match &spec {
        CliSpec::Estimate(s) => run_estimate(s, stdout).map(|_| ()),
        CliSpec::Montecarlo(s) => run_montecarlo(s, stdout).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if matches!(e, Error::Usage(_) | Error::Config(_)) {
                2
            } else {
                1
            }
        }
    }
}
