//! Problem-file ingestion, sweep orchestration and result files for the
//! `polypareto` binary.

pub mod config;
pub mod output;
pub mod problem;

use std::fs;
use std::path::Path;

use polypareto::lasserre;
use polypareto::pipeline::{
    build_gamma, omega_bar, pareto_indices, sweep, CellStatus, PValue, PipelineError, ScalarizationConfig,
    SweepConfig, SweepResult,
};
use polypareto::sdp::export_sdpa;

pub use config::RunConfig;
use output::{emit, Emission, OutputPaths};
pub use problem::{parse_problem, parse_problem_str, serialize_problem, ProblemFile};

/// Conditions the tool relies on but cannot check from floating-point data.
pub const USER_OBLIGATIONS: &str = "\
user obligations (not verified):
  - the robust feasible set is nonempty and compact
  - the robust feasible set is the closure of its interior
  - no constraint value function vanishes on an open subset of X";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_NO_CERTIFIED: i32 = 2;

/// Runs the sweep, writes the result files and returns the process exit
/// code.
pub fn run(cfg: &RunConfig, problem: &ProblemFile) -> i32 {
    match run_inner(cfg, problem) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

fn run_inner(cfg: &RunConfig, problem: &ProblemFile) -> Result<i32, Box<dyn std::error::Error>> {
    let spec = &problem.spec;
    let sweep_cfg = cfg.sweep_config(spec)?;
    eprintln!("{USER_OBLIGATIONS}");
    let paths = OutputPaths::in_dir(&cfg.out);
    let l = spec.num_objectives();
    let n = spec.dim();

    let result = match sweep(spec, &sweep_cfg) {
        Ok(r) => r,
        Err(PipelineError::EmptyFeasibleSet) => {
            emit(
                &Emission {
                    records: &[],
                    pareto: &[],
                    cells: &[],
                    utopia: None,
                    l,
                    n,
                },
                &paths,
            )?;
            eprintln!("empty feasible set: the relaxations of the inner feasible-set approximation are infeasible");
            return Ok(EXIT_NO_CERTIFIED);
        }
        Err(e) => return Err(e.into()),
    };

    for c in &result.cells {
        match &c.status {
            CellStatus::Solved => {}
            CellStatus::Skipped(why) => eprintln!("cell p={} lambda={:?} skipped: {why}", c.p, c.lambda),
            CellStatus::Failed(why) => eprintln!("cell p={} lambda={:?} failed: {why}", c.p, c.lambda),
        }
    }
    if let Some(dir) = &cfg.export_sdpa {
        export_relaxations(spec, &sweep_cfg, &result, dir)?;
    }

    let certified: Vec<usize> = (0..result.records.len()).filter(|&i| result.records[i].certified).collect();
    let certified_records: Vec<_> = certified.iter().map(|&i| result.records[i].clone()).collect();
    let pareto: Vec<usize> = pareto_indices(&certified_records, cfg.dominance_tol)
        .into_iter()
        .map(|k| certified[k])
        .collect();
    emit(
        &Emission {
            records: &result.records,
            pareto: &pareto,
            cells: &result.cells,
            utopia: Some(&result.utopia),
            l,
            n,
        },
        &paths,
    )?;
    println!(
        "{} records, {} certified, {} on the certified front; results in {}",
        result.records.len(),
        certified.len(),
        pareto.len(),
        cfg.out.display()
    );
    if certified.is_empty() {
        let empty = "feasible set is empty";
        let all_empty = !result.cells.is_empty()
            && result
                .cells
                .iter()
                .all(|c| matches!(&c.status, CellStatus::Failed(m) if m == empty));
        if all_empty {
            eprintln!("empty feasible set: every scalarized relaxation is infeasible");
        } else {
            eprintln!("no certified records");
        }
        return Ok(EXIT_NO_CERTIFIED);
    }
    Ok(EXIT_OK)
}

/// Writes the first-order moment relaxation of every finite-`p` cell, for
/// the first degree choice, in SDPA sparse format.
fn export_relaxations(
    spec: &polypareto::pipeline::ProblemSpec,
    cfg: &SweepConfig,
    result: &SweepResult,
    dir: &Path,
) -> Result<(), Box<dyn std::error::Error>> {
    fs::create_dir_all(dir)?;
    let approx = &result.approximations[0];
    let omega = omega_bar(spec, &approx.gbar)?;
    for (k, c) in result.cells.iter().enumerate() {
        if c.p == PValue::Chebyshev {
            continue;
        }
        let sc = ScalarizationConfig::new(c.lambda.clone(), c.p)?;
        let gamma = build_gamma(&approx.fbar, &result.utopia.y_u, &sc)?;
        let order = cfg.hierarchy.t_min.unwrap_or(0).max(lasserre::min_order(&gamma, &omega));
        let relax = lasserre::relax(&gamma, &omega, order)?;
        fs::write(dir.join(format!("cell{k:03}_p{}.dat-s", c.p)), export_sdpa(&relax.problem))?;
    }
    Ok(())
}
