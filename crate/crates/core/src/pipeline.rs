//! Robust vector optimization driver: utopia point, scalarization, the
//! `(p, lambda)` sweep, robust-value certification and dominance filtering.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jm::{self, JmError, JmOptions, ValueApprox};
use crate::lasserre::{self, HierarchyOptions, HierarchyResult, LasserreError};
use crate::poly::{basis_len, PolyError, Polynomial, VarList};
use crate::semialg::{SetDescriptor, SetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("problem needs at least one objective")]
    NoObjectives,
    #[error("feasible set is empty")]
    EmptyFeasibleSet,
    #[error("invalid weights: {0}")]
    InvalidLambda(String),
    #[error("invalid exponent p: {0}")]
    InvalidP(String),
    #[error("epsilon must be positive and finite")]
    InvalidEps,
    #[error("{0}")]
    Config(String),
    #[error("moment matrix would have {rows} rows (limit {limit})")]
    DegreeGuard { rows: usize, limit: usize },
    #[error(transparent)]
    Jm(#[from] JmError),
    #[error(transparent)]
    Lasserre(LasserreError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Set(#[from] SetError),
}

impl From<LasserreError> for PipelineError {
    fn from(e: LasserreError) -> Self {
        match e {
            LasserreError::EmptySet => PipelineError::EmptyFeasibleSet,
            e => PipelineError::Lasserre(e),
        }
    }
}

/// `min_x sup_u f_i(x, u)` subject to `inf_v g_j(x, v) >= 0`, `x in X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    x_set: SetDescriptor,
    u_set: Option<SetDescriptor>,
    v_set: Option<SetDescriptor>,
    objectives: Vec<Polynomial>,
    constraints: Vec<Polynomial>,
}

impl ProblemSpec {
    /// Objectives are re-expressed over `x` then `u`, constraints over `x`
    /// then `v`; a missing uncertainty set means the functions are
    /// deterministic.
    pub fn new(
        x_set: SetDescriptor,
        u_set: Option<SetDescriptor>,
        v_set: Option<SetDescriptor>,
        objectives: Vec<Polynomial>,
        constraints: Vec<Polynomial>,
    ) -> Result<Self, PipelineError> {
        if objectives.is_empty() {
            return Err(PipelineError::NoObjectives);
        }
        let xu = joint(&x_set, u_set.as_ref())?;
        let xv = joint(&x_set, v_set.as_ref())?;
        let objectives = objectives
            .iter()
            .map(|f| f.remap(&xu))
            .collect::<Result<_, _>>()?;
        let constraints = constraints
            .iter()
            .map(|g| g.remap(&xv))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            x_set,
            u_set,
            v_set,
            objectives,
            constraints,
        })
    }

    pub fn x_set(&self) -> &SetDescriptor {
        &self.x_set
    }

    pub fn u_set(&self) -> Option<&SetDescriptor> {
        self.u_set.as_ref()
    }

    pub fn v_set(&self) -> Option<&SetDescriptor> {
        self.v_set.as_ref()
    }

    pub fn objectives(&self) -> &[Polynomial] {
        &self.objectives
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.constraints
    }

    pub fn x_vars(&self) -> &Arc<VarList> {
        self.x_set.vars()
    }

    pub fn dim(&self) -> usize {
        self.x_set.dim()
    }

    pub fn num_objectives(&self) -> usize {
        self.objectives.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Degree of each objective and constraint in the decision variables.
    pub fn natural_degrees(&self) -> DegreeChoice {
        let xdeg = |p: &Polynomial| {
            p.terms()
                .map(|(m, _)| m.exponents()[..self.dim()].iter().sum::<u32>() as usize)
                .max()
                .unwrap_or(0)
                .max(1)
        };
        DegreeChoice {
            objectives: self.objectives.iter().map(xdeg).collect(),
            constraints: self.constraints.iter().map(xdeg).collect(),
        }
    }
}

fn joint(x: &SetDescriptor, other: Option<&SetDescriptor>) -> Result<Arc<VarList>, PolyError> {
    match other {
        Some(o) => x.vars().concat(o.vars()),
        None => Ok(x.vars().clone()),
    }
}

/// Approximation degrees `d_i` per objective and `e_j` per constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeChoice {
    pub objectives: Vec<usize>,
    pub constraints: Vec<usize>,
}

/// Relaxation orders of the joint+marginal SDPs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderSpec {
    /// Smallest admissible order plus `slack`.
    Auto { slack: usize },
    /// One order for every approximation.
    Uniform(usize),
    /// One order per objective, then one per constraint.
    PerFunction(Vec<usize>),
}

impl Default for OrderSpec {
    fn default() -> Self {
        OrderSpec::Auto { slack: 1 }
    }
}

impl OrderSpec {
    fn resolve(&self, job: usize, min: usize) -> Result<usize, PipelineError> {
        let r = match self {
            OrderSpec::Auto { slack } => return Ok(min + slack),
            OrderSpec::Uniform(r) => *r,
            OrderSpec::PerFunction(v) => *v.get(job).ok_or_else(|| {
                PipelineError::Config(format!("no relaxation order given for approximation {}", job + 1))
            })?,
        };
        if r < min {
            return Err(PipelineError::Config(format!(
                "relaxation order {r} for approximation {} is below the minimum {min}",
                job + 1
            )));
        }
        Ok(r)
    }
}

/// Polynomial stand-ins for `F_i` and `G_j` over the decision variables.
#[derive(Debug, Clone)]
pub struct Approximations {
    pub degrees: DegreeChoice,
    pub fbar: Vec<Polynomial>,
    pub gbar: Vec<Polynomial>,
    /// Joint+marginal details; `None` where the function is deterministic.
    pub f_details: Vec<Option<ValueApprox>>,
    pub g_details: Vec<Option<ValueApprox>>,
}

/// Builds `F_bar` (upper) and `G_bar` (lower) for one degree choice; the
/// joint+marginal SDPs run in parallel.
pub fn approximate(
    spec: &ProblemSpec,
    degrees: &DegreeChoice,
    orders: &OrderSpec,
    opts: &JmOptions,
) -> Result<Approximations, PipelineError> {
    let l = spec.num_objectives();
    let m = spec.num_constraints();
    if degrees.objectives.len() != l || degrees.constraints.len() != m {
        return Err(PipelineError::Config(format!(
            "expected {l} objective and {m} constraint degrees, got {} and {}",
            degrees.objectives.len(),
            degrees.constraints.len()
        )));
    }
    let jobs: Vec<usize> = (0..l + m).collect();
    let results: Vec<Result<(Polynomial, Option<ValueApprox>), PipelineError>> = jobs
        .par_iter()
        .map(|&job| {
            let (f, other, d) = if job < l {
                (&spec.objectives[job], spec.u_set.as_ref(), degrees.objectives[job])
            } else {
                (&spec.constraints[job - l], spec.v_set.as_ref(), degrees.constraints[job - l])
            };
            let Some(other) = other else {
                return Ok((f.remap(spec.x_vars())?, None));
            };
            let order = orders.resolve(job, jm::min_order(f, &spec.x_set, other, d))?;
            let a = if job < l {
                jm::upper_value_approx(f, &spec.x_set, other, d, order, opts)?
            } else {
                jm::lower_value_approx(f, &spec.x_set, other, d, order, opts)?
            };
            Ok((a.poly.clone(), Some(a)))
        })
        .collect();
    let mut out = Approximations {
        degrees: degrees.clone(),
        fbar: Vec::with_capacity(l),
        gbar: Vec::with_capacity(m),
        f_details: Vec::with_capacity(l),
        g_details: Vec::with_capacity(m),
    };
    for (job, r) in results.into_iter().enumerate() {
        let (p, det) = r?;
        if job < l {
            out.fbar.push(p);
            out.f_details.push(det);
        } else {
            out.gbar.push(p);
            out.g_details.push(det);
        }
    }
    Ok(out)
}

/// How the utopia margin `eps` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsSpec {
    /// `eps_i = r (1 + |bound_i|)`.
    Relative(f64),
    Absolute(Vec<f64>),
}

impl Default for EpsSpec {
    fn default() -> Self {
        EpsSpec::Relative(0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtopiaPoint {
    pub y_u: Vec<f64>,
    /// Lower bounds on the ideal point before the margin.
    pub bounds: Vec<f64>,
    pub eps: Vec<f64>,
}

/// `y_U = bounds - eps` where `bounds_i <= sup_u min_{x in X} f_i(x, u)`,
/// a lower bound of the ideal point.
pub fn utopia_point(
    spec: &ProblemSpec,
    eps: &EpsSpec,
    jm_opts: &JmOptions,
    h_opts: &HierarchyOptions,
) -> Result<UtopiaPoint, PipelineError> {
    let l = spec.num_objectives();
    let bounds: Vec<f64> = (0..l)
        .into_par_iter()
        .map(|i| utopia_bound(spec, i, jm_opts, h_opts))
        .collect::<Result<_, _>>()?;
    let eps: Vec<f64> = match eps {
        EpsSpec::Relative(r) => bounds.iter().map(|b| r * (1.0 + b.abs())).collect(),
        EpsSpec::Absolute(v) if v.len() == 1 => vec![v[0]; l],
        EpsSpec::Absolute(v) if v.len() == l => v.clone(),
        EpsSpec::Absolute(_) => {
            return Err(PipelineError::Config(format!("eps needs 1 or {l} entries")))
        }
    };
    if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(PipelineError::InvalidEps);
    }
    Ok(UtopiaPoint {
        y_u: bounds.iter().zip(&eps).map(|(b, e)| b - e).collect(),
        bounds,
        eps,
    })
}

fn utopia_bound(
    spec: &ProblemSpec,
    i: usize,
    jm_opts: &JmOptions,
    h_opts: &HierarchyOptions,
) -> Result<f64, PipelineError> {
    let f = &spec.objectives[i];
    let Some(u) = spec.u_set.as_ref() else {
        return Ok(lasserre::minimize(&f.remap(spec.x_vars())?, &spec.x_set, h_opts)?.bound);
    };
    // q(u) <= min_{x in X} f(x, u): roles of x and u swapped
    let dq = u
        .vars()
        .blocks()
        .iter()
        .map(|b| f.degree_in(&b.name))
        .sum::<usize>()
        .max(1);
    let order = jm::default_order(f, u, &spec.x_set, dq);
    let q = jm::lower_value_approx(f, u, &spec.x_set, dq, order, jm_opts)?;
    let r = lasserre::maximize(&q.poly, u, h_opts)?;
    // q at any point of U is below sup_u min_x f; use the best candidate so
    // the bound stays valid even without certification
    let mut best = f64::NEG_INFINITY;
    for p in &r.minimizers {
        best = best.max(q.poly.eval(&u.project(p))?);
    }
    Ok(best)
}

/// Exponent of the scalarization; `Chebyshev` is the `p = infinity` case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
pub enum PValue {
    Finite(u32),
    Chebyshev,
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PValue::Finite(p) => write!(f, "{p}"),
            PValue::Chebyshev => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for PValue {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "chebyshev" => Ok(PValue::Chebyshev),
            t => match t.parse::<u32>() {
                Ok(p) if p >= 1 => Ok(PValue::Finite(p)),
                _ => Err(PipelineError::InvalidP(t.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizationConfig {
    lambda: Vec<f64>,
    p: PValue,
}

impl ScalarizationConfig {
    pub fn new(lambda: Vec<f64>, p: PValue) -> Result<Self, PipelineError> {
        if lambda.is_empty() || lambda.iter().any(|l| !(*l > 0.0)) {
            return Err(PipelineError::InvalidLambda(format!("{lambda:?} has a non-positive entry")));
        }
        let s: f64 = lambda.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(PipelineError::InvalidLambda(format!("{lambda:?} sums to {s}")));
        }
        if p == PValue::Finite(0) {
            return Err(PipelineError::InvalidP("0".into()));
        }
        Ok(Self { lambda, p })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn p(&self) -> PValue {
        self.p
    }
}

/// `Gamma(x) = sum_i (lambda_i (F_i(x) - y_U_i))^p`.
pub fn build_gamma(
    fbar: &[Polynomial],
    y_u: &[f64],
    cfg: &ScalarizationConfig,
) -> Result<Polynomial, PipelineError> {
    let PValue::Finite(p) = cfg.p else {
        return Err(PipelineError::InvalidP("use chebyshev_scalarize for p = inf".into()));
    };
    if fbar.len() != y_u.len() || fbar.len() != cfg.lambda.len() || fbar.is_empty() {
        return Err(PipelineError::Config("objective count mismatch".into()));
    }
    let mut gamma = Polynomial::zero(fbar[0].vars());
    for ((f, y), l) in fbar.iter().zip(y_u).zip(&cfg.lambda) {
        let base = f.add_constant(-y).scale(*l);
        gamma = gamma.add(&base.pow(p))?;
    }
    Ok(gamma)
}

/// `Omega_bar = X intersected with {G_bar_j >= 0}`, with X's bounding ball
/// as the Archimedean witness.
pub fn omega_bar(spec: &ProblemSpec, gbar: &[Polynomial]) -> Result<SetDescriptor, PipelineError> {
    let mut ineqs: Vec<Polynomial> = spec.x_set.inequalities().to_vec();
    for g in gbar {
        ineqs.push(g.remap(spec.x_vars())?);
    }
    let mut k = SetDescriptor::general(spec.x_vars(), ineqs)?;
    if let Some(r) = spec.x_set.bounding_radius() {
        k = k.with_witness(r.max(1e-12) * (1.0 + 1e-9))?;
    }
    Ok(k)
}

#[derive(Debug, Clone)]
pub struct Scalarized {
    pub bound: f64,
    pub order: usize,
    /// Candidate minimizers with their certification flag.
    pub candidates: Vec<(Vec<f64>, bool)>,
    pub hierarchy: HierarchyResult,
}

/// Minimizes `gamma` over `omega` with the Lasserre hierarchy.
pub fn solve_scalarized(
    gamma: &Polynomial,
    omega: &SetDescriptor,
    opts: &HierarchyOptions,
) -> Result<Scalarized, PipelineError> {
    let r = lasserre::minimize(gamma, omega, opts)?;
    Ok(Scalarized {
        bound: r.bound,
        order: r.order,
        candidates: r.minimizers.iter().map(|p| (p.clone(), r.certified)).collect(),
        hierarchy: r,
    })
}

/// Epigraph form of `min_x max_i lambda_i (F_i(x) - y_U_i)`: minimize an
/// auxiliary `t` subject to `t >= lambda_i (F_i(x) - y_U_i)` over `K`.
/// Returned minimizers are restricted to the variables of `K`.
pub fn chebyshev_scalarize(
    fbar: &[Polynomial],
    y_u: &[f64],
    lambda: &[f64],
    k: &SetDescriptor,
    opts: &HierarchyOptions,
) -> Result<HierarchyResult, PipelineError> {
    if fbar.len() != y_u.len() || fbar.len() != lambda.len() || fbar.is_empty() {
        return Err(PipelineError::Config("objective count mismatch".into()));
    }
    let aux = VarList::new([("aux", vec!["t_aux"])])?;
    let vars = k.vars().concat(&aux)?;
    let t = Polynomial::var(&vars, "t_aux")?;
    let radius = k
        .bounding_radius()
        .ok_or(PipelineError::Lasserre(LasserreError::NotArchimedean))?;
    // crude bound on |lambda_i (F_i - y_i)| over the ball of that radius
    let mut tmax: f64 = 0.0;
    let mut ineqs = k.lift(&vars)?;
    for ((f, y), l) in fbar.iter().zip(y_u).zip(lambda) {
        let fl = f.remap(&vars)?;
        let mag: f64 = fl
            .terms()
            .map(|(m, c)| c.abs() * radius.max(1.0).powi(m.degree() as i32))
            .sum();
        tmax = tmax.max(l * (mag + y.abs()));
        ineqs.push(t.sub(&fl.add_constant(-y).scale(*l))?);
    }
    let tmax = tmax.max(1.0);
    ineqs.push(t.mul(&t)?.neg().add_constant(tmax * tmax));
    let set = SetDescriptor::general(&vars, ineqs)?
        .with_witness((radius * radius + tmax * tmax).sqrt() * (1.0 + 1e-9))?;
    let mut r = lasserre::minimize(&t, &set, opts)?;
    let n = k.dim();
    for p in r.minimizers.iter_mut() {
        p.truncate(n);
    }
    Ok(r)
}

/// `sup_{u in U} f_i(x_star, u)` and whether it is certified.
pub fn robust_value(
    spec: &ProblemSpec,
    x_star: &[f64],
    i: usize,
    opts: &HierarchyOptions,
) -> Result<(f64, bool), PipelineError> {
    let f = &spec.objectives[i];
    let Some(u) = spec.u_set.as_ref() else {
        return Ok((f.eval(x_star)?, true));
    };
    let mut fu = f.clone();
    for b in spec.x_vars().blocks() {
        let vals = &x_star[b.range.clone()];
        fu = fu.substitute_block(&b.name, vals)?;
    }
    let fu = fu.remap(u.vars())?;
    if fu.degree() == 0 {
        return Ok((fu.coefficient(&crate::poly::Monomial::one(u.dim())), true));
    }
    let r = lasserre::maximize(&fu, u, opts)?;
    Ok((r.bound, r.certified))
}

/// One output point of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRecord {
    pub lambda: Vec<f64>,
    pub p: PValue,
    pub x_star: Vec<f64>,
    /// `F_bar(x_star)`.
    pub approx_values: Vec<f64>,
    /// `sup_u f_i(x_star, u)`.
    pub robust_values: Vec<f64>,
    /// Scalarized minimizer and every robust value certified.
    pub certified: bool,
    /// Optimal scalarized value reported by the hierarchy.
    pub gamma_bound: f64,
    /// Index of the degree choice the record came from.
    pub degree_choice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellStatus {
    Solved,
    Skipped(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub lambda: Vec<f64>,
    pub p: PValue,
    pub status: CellStatus,
    pub records: usize,
    pub certified: usize,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub lambdas: Vec<Vec<f64>>,
    pub p_list: Vec<PValue>,
    /// Each choice is solved per cell; the one with the smallest certified
    /// scalarized value is kept.
    pub degrees: Vec<DegreeChoice>,
    pub orders: OrderSpec,
    pub eps: EpsSpec,
    pub jm: JmOptions,
    pub hierarchy: HierarchyOptions,
    /// Cells whose moment matrix would exceed this many rows are skipped.
    pub max_moment_rows: usize,
}

impl SweepConfig {
    /// Default grid and exponents for `spec` with its natural degrees.
    pub fn defaults(spec: &ProblemSpec) -> Self {
        Self {
            lambdas: default_lambda_grid(spec.num_objectives()),
            p_list: (1..=4).map(PValue::Finite).collect(),
            degrees: vec![spec.natural_degrees()],
            orders: OrderSpec::default(),
            eps: EpsSpec::default(),
            jm: JmOptions::default(),
            hierarchy: HierarchyOptions::default(),
            max_moment_rows: 500,
        }
    }
}

/// `lambda_1` in `{0.05, ..., 0.85}` for two objectives; for more, the
/// positive points of the simplex lattice with step 0.1.
pub fn default_lambda_grid(l: usize) -> Vec<Vec<f64>> {
    match l {
        2 => lambda_range(0.05, 0.85, 0.05, 2).expect("valid default range"),
        _ => simplex_lattice(l, 10),
    }
}

/// Two objectives: `lambda_1` runs over `a..=b` by `step`. Otherwise the
/// positive simplex lattice with spacing `step`, restricted to `[a, b]`.
pub fn lambda_range(a: f64, b: f64, step: f64, l: usize) -> Result<Vec<Vec<f64>>, PipelineError> {
    if !(step > 0.0) || !(a > 0.0) || !(b < 1.0) || a > b {
        return Err(PipelineError::InvalidLambda(format!(
            "range {a}:{b}:{step} must satisfy 0 < a <= b < 1 and step > 0"
        )));
    }
    let round = |v: f64| (v * 1e12).round() / 1e12;
    if l == 1 {
        return Ok(vec![vec![1.0]]);
    }
    if l == 2 {
        let count = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=count)
            .map(|k| {
                let l1 = round(a + k as f64 * step);
                vec![l1, 1.0 - l1]
            })
            .collect());
    }
    let n = (1.0 / step).round() as usize;
    Ok(simplex_lattice(l, n)
        .into_iter()
        .filter(|lam| lam.iter().all(|v| *v >= a - 1e-12 && *v <= b + 1e-12))
        .collect())
}

fn simplex_lattice(l: usize, n: usize) -> Vec<Vec<f64>> {
    if l == 1 {
        return vec![vec![1.0]];
    }
    let mut out = Vec::new();
    let mut parts = vec![1usize; l];
    fn rec(i: usize, left: usize, parts: &mut [usize], n: usize, out: &mut Vec<Vec<f64>>) {
        let l = parts.len();
        if i == l - 1 {
            if left >= 1 {
                parts[i] = left;
                let mut v: Vec<f64> = parts.iter().map(|&p| p as f64 / n as f64).collect();
                let head: f64 = v[..l - 1].iter().sum();
                v[l - 1] = 1.0 - head;
                out.push(v);
            }
            return;
        }
        for k in 1..left {
            parts[i] = k;
            rec(i + 1, left - k, parts, n, out);
        }
    }
    rec(0, n, &mut parts, n, &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub utopia: UtopiaPoint,
    pub approximations: Vec<Approximations>,
    pub records: Vec<ParetoRecord>,
    pub cells: Vec<CellReport>,
}

struct CellOutcome {
    records: Vec<ParetoRecord>,
    status: CellStatus,
}

/// Runs the full method: approximations and utopia point once, then every
/// `(p, lambda)` cell in parallel. Records are ordered by `p`, then
/// `lambda`, then candidate, independently of scheduling.
pub fn sweep(spec: &ProblemSpec, cfg: &SweepConfig) -> Result<SweepResult, PipelineError> {
    if cfg.lambdas.is_empty() || cfg.p_list.is_empty() || cfg.degrees.is_empty() {
        return Err(PipelineError::Config("empty lambda grid, p list or degree list".into()));
    }
    let l = spec.num_objectives();
    for lam in &cfg.lambdas {
        if lam.len() != l {
            return Err(PipelineError::InvalidLambda(format!("{lam:?} has length != {l}")));
        }
        ScalarizationConfig::new(lam.clone(), PValue::Finite(1))?;
    }
    let approximations: Vec<Approximations> = cfg
        .degrees
        .iter()
        .map(|d| approximate(spec, d, &cfg.orders, &cfg.jm))
        .collect::<Result<_, _>>()?;
    let utopia = utopia_point(spec, &cfg.eps, &cfg.jm, &cfg.hierarchy)?;
    let omegas: Vec<SetDescriptor> = approximations
        .iter()
        .map(|a| omega_bar(spec, &a.gbar))
        .collect::<Result<_, _>>()?;

    let cells: Vec<(PValue, &Vec<f64>)> = cfg
        .p_list
        .iter()
        .flat_map(|p| cfg.lambdas.iter().map(move |lam| (*p, lam)))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|(p, lam)| run_cell(spec, cfg, &approximations, &omegas, &utopia, *p, lam))
        .collect();

    let mut records = Vec::new();
    let mut reports = Vec::new();
    for ((p, lam), o) in cells.iter().zip(outcomes) {
        reports.push(CellReport {
            lambda: (*lam).clone(),
            p: *p,
            status: o.status,
            records: o.records.len(),
            certified: o.records.iter().filter(|r| r.certified).count(),
        });
        records.extend(o.records);
    }
    Ok(SweepResult {
        utopia,
        approximations,
        records,
        cells: reports,
    })
}

fn run_cell(
    spec: &ProblemSpec,
    cfg: &SweepConfig,
    approximations: &[Approximations],
    omegas: &[SetDescriptor],
    utopia: &UtopiaPoint,
    p: PValue,
    lambda: &[f64],
) -> CellOutcome {
    let mut best: Option<(bool, f64, Vec<ParetoRecord>)> = None;
    let mut last_err: Option<PipelineError> = None;
    for (k, (approx, omega)) in approximations.iter().zip(omegas).enumerate() {
        match solve_cell(spec, cfg, approx, omega, utopia, p, lambda, k) {
            Ok((certified, value, recs)) => {
                let better = match &best {
                    None => true,
                    Some((bc, bv, _)) => (certified && !bc) || (certified == *bc && value < *bv),
                };
                if better {
                    best = Some((certified, value, recs));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, _, records)), _) => CellOutcome {
            records,
            status: CellStatus::Solved,
        },
        (None, Some(PipelineError::DegreeGuard { rows, limit })) => CellOutcome {
            records: Vec::new(),
            status: CellStatus::Skipped(format!("moment matrix would have {rows} rows (limit {limit})")),
        },
        (None, Some(e)) => CellOutcome {
            records: Vec::new(),
            status: CellStatus::Failed(e.to_string()),
        },
        (None, None) => CellOutcome {
            records: Vec::new(),
            status: CellStatus::Failed("no degree choice".into()),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_cell(
    spec: &ProblemSpec,
    cfg: &SweepConfig,
    approx: &Approximations,
    omega: &SetDescriptor,
    utopia: &UtopiaPoint,
    p: PValue,
    lambda: &[f64],
    choice: usize,
) -> Result<(bool, f64, Vec<ParetoRecord>), PipelineError> {
    let n = spec.dim();
    let fdeg = approx.fbar.iter().map(|f| f.degree()).max().unwrap_or(1).max(1);
    let (nvars, deg) = match p {
        PValue::Finite(p) => (n, p as usize * fdeg),
        PValue::Chebyshev => (n + 1, fdeg),
    };
    let needed = omega.inequalities().iter().map(|h| h.degree()).max().unwrap_or(0);
    let rows = basis_len(nvars, deg.max(needed).div_ceil(2));
    if rows > cfg.max_moment_rows {
        return Err(PipelineError::DegreeGuard {
            rows,
            limit: cfg.max_moment_rows,
        });
    }
    let (bound, candidates) = match p {
        PValue::Finite(_) => {
            let sc = ScalarizationConfig::new(lambda.to_vec(), p)?;
            let gamma = build_gamma(&approx.fbar, &utopia.y_u, &sc)?;
            let s = solve_scalarized(&gamma, omega, &cfg.hierarchy)?;
            (s.bound, s.candidates)
        }
        PValue::Chebyshev => {
            let r = chebyshev_scalarize(&approx.fbar, &utopia.y_u, lambda, omega, &cfg.hierarchy)?;
            let c = r.minimizers.iter().map(|x| (x.clone(), r.certified)).collect();
            (r.bound, c)
        }
    };
    let mut records = Vec::with_capacity(candidates.len());
    let mut all_certified = true;
    for (x, cert) in candidates {
        let x = if cert { x } else { spec.x_set.project(&x) };
        let approx_values = approx
            .fbar
            .iter()
            .map(|f| f.eval(&x))
            .collect::<Result<Vec<_>, _>>()?;
        let mut robust_values = Vec::with_capacity(spec.num_objectives());
        let mut robust_ok = true;
        for i in 0..spec.num_objectives() {
            let (v, c) = robust_value(spec, &x, i, &cfg.hierarchy)?;
            robust_values.push(v);
            robust_ok &= c;
        }
        let certified = cert && robust_ok;
        all_certified &= certified;
        records.push(ParetoRecord {
            lambda: lambda.to_vec(),
            p,
            x_star: x,
            approx_values,
            robust_values,
            certified,
            gamma_bound: bound,
            degree_choice: choice,
        });
    }
    Ok((all_certified && !records.is_empty(), bound, records))
}

/// Drops records whose robust values are dominated: some other record is
/// componentwise no larger and smaller by more than `tol` somewhere. Ties
/// and near-ties are kept.
pub fn pareto_filter(records: &[ParetoRecord], tol: f64) -> Vec<ParetoRecord> {
    pareto_indices(records, tol).into_iter().map(|i| records[i].clone()).collect()
}

/// Positions of the records kept by [`pareto_filter`], in input order.
pub fn pareto_indices(records: &[ParetoRecord], tol: f64) -> Vec<usize> {
    let dominates = |q: &ParetoRecord, r: &ParetoRecord| {
        q.robust_values.iter().zip(&r.robust_values).all(|(a, b)| *a <= *b)
            && q.robust_values.iter().zip(&r.robust_values).any(|(a, b)| *a < *b - tol)
    };
    (0..records.len())
        .filter(|&i| !records.iter().any(|q| dominates(q, &records[i])))
        .collect()
}
