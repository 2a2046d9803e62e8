use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use polypareto_cli::config::{parse_degrees, parse_eps, parse_lambda_grid, parse_orders, parse_p_list};
use polypareto_cli::{parse_problem, run, RunConfig, EXIT_FATAL};

/// Robust multiobjective polynomial optimization: approximates the robust
/// Pareto front of a problem file. Every flag can also be set through the
/// matching `POLYPARETO_*` environment variable.
#[derive(Debug, Parser)]
#[command(name = "polypareto", version)]
struct Cli {
    /// Problem file.
    #[arg(long, env = "POLYPARETO_PROBLEM")]
    problem: PathBuf,
    /// Output directory for records.csv, records.json and front.dat.
    #[arg(long, env = "POLYPARETO_OUT", default_value = "out")]
    out: PathBuf,
    /// Approximation degrees `d_1,..,d_l;e_1,..,e_m`; repeat to keep the
    /// best certified cell over several choices.
    #[arg(long, env = "POLYPARETO_DEGREES", value_delimiter = '|')]
    degrees: Vec<String>,
    /// Relaxation orders: `auto`, `auto+k`, one order, or one per function.
    #[arg(long, env = "POLYPARETO_ORDERS", default_value = "auto")]
    orders: String,
    /// Weight grid `a:b:step` for lambda_1.
    #[arg(long, env = "POLYPARETO_LAMBDA_GRID")]
    lambda_grid: Option<String>,
    /// Scalarization exponents, e.g. `1,2,4` or `inf`.
    #[arg(long, env = "POLYPARETO_P_LIST", default_value = "1,2,3,4")]
    p_list: String,
    /// Utopia margin: one value, one per objective, or `rel:r`.
    #[arg(long, env = "POLYPARETO_EPS", default_value = "rel:0.05")]
    eps: String,
    #[arg(long, env = "POLYPARETO_SEED", default_value_t = 0x5eed)]
    seed: u64,
    /// Interior-point stopping tolerance.
    #[arg(long, env = "POLYPARETO_TOL", default_value_t = 1e-8)]
    tol: f64,
    /// Also write each cell's moment relaxation in SDPA sparse format.
    #[arg(long, env = "POLYPARETO_EXPORT_SDPA")]
    export_sdpa: Option<PathBuf>,
}

fn config(cli: &Cli) -> Result<RunConfig, polypareto_cli::config::ConfigError> {
    Ok(RunConfig {
        degrees: cli.degrees.iter().map(|d| parse_degrees(d)).collect::<Result<_, _>>()?,
        orders: parse_orders(&cli.orders)?,
        lambda_grid: cli.lambda_grid.as_deref().map(parse_lambda_grid).transpose()?,
        p_list: parse_p_list(&cli.p_list)?,
        eps: parse_eps(&cli.eps)?,
        seed: cli.seed,
        tol: cli.tol,
        out: cli.out.clone(),
        export_sdpa: cli.export_sdpa.clone(),
        ..RunConfig::default()
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FATAL as u8);
        }
    };
    let problem = match parse_problem(&cli.problem) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FATAL as u8);
        }
    };
    ExitCode::from(run(&cfg, &problem) as u8)
}
