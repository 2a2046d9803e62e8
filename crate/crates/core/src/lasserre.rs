//! Moment-SOS hierarchy for polynomial minimization over compact basic
//! semialgebraic sets, certified by flat truncation.

use std::sync::Arc;

use thiserror::Error;

use crate::moment::{
    extract_atoms, flat_truncation, ExtractionConfig, MomentError, TruncatedMomentSequence,
    DEFAULT_RANK_RATIO,
};
use crate::poly::{basis_len, MonomialIndex, PolyError, Polynomial};
use crate::sdp::{solve, Equality, LmiBlock, SdpError, SdpProblem, SdpSettings, SdpSolution, SdpStatus};
use crate::semialg::{SetDescriptor, SetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LasserreError {
    #[error("relaxation order {t} is below the minimum {needed}")]
    OrderTooSmall { t: usize, needed: usize },
    #[error("feasible set is empty")]
    EmptySet,
    #[error("set has no Archimedean witness")]
    NotArchimedean,
    #[error("SDP solver stopped with status {0:?}")]
    Solver(SdpStatus),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Moment relaxation of order `t` together with its variable indexing.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub problem: SdpProblem,
    /// Index of the moment variables, `basis(n, 2t)`.
    pub index: Arc<MonomialIndex>,
    pub order: usize,
    /// `max(1, max_k ceil(deg h_k / 2))`.
    pub d0: usize,
}

fn half_up(d: usize) -> usize {
    d.div_ceil(2)
}

/// Smallest admissible relaxation order for `f` over `k`.
pub fn min_order(f: &Polynomial, k: &SetDescriptor) -> usize {
    k.inequalities()
        .iter()
        .map(|h| half_up(h.degree()))
        .chain([half_up(f.degree()), 1])
        .max()
        .unwrap_or(1)
}

fn localizer_half_degree(k: &SetDescriptor) -> usize {
    k.inequalities()
        .iter()
        .map(|h| half_up(h.degree()))
        .max()
        .unwrap_or(1)
        .max(1)
}

/// Triplets of the localizing block `M_{t - ceil(deg h/2)}(h y)` over the
/// moment index `idx`; `h = 1` yields the moment matrix.
pub(crate) fn localizing_block(idx: &MonomialIndex, h: &Polynomial, size_order: usize) -> LmiBlock {
    let n = idx.nvars();
    let s = basis_len(n, size_order);
    let mut trip = Vec::new();
    for a in 0..s {
        for b in a..s {
            let ab = idx.monomial(a).mul(idx.monomial(b));
            for (kappa, c) in h.terms() {
                let var = idx.get(&ab.mul(kappa)).expect("relaxation degree covers block");
                trip.push((Some(var), a, b, c));
            }
        }
    }
    LmiBlock::from_triplets(s, trip)
}

/// `min L_y(f)` s.t. `M_t(y) >= 0`, `M_{t - ceil(deg h_k/2)}(h_k y) >= 0`,
/// `y_0 = 1`, over moments `y` indexed by `basis(n, 2t)`.
pub fn relax(f: &Polynomial, k: &SetDescriptor, t: usize) -> Result<Relaxation, LasserreError> {
    let f = f.remap(k.vars())?;
    let needed = min_order(&f, k);
    if t < needed {
        return Err(LasserreError::OrderTooSmall { t, needed });
    }
    let n = k.dim();
    let index = Arc::new(MonomialIndex::new(n, 2 * t));
    let m = index.len();
    let one = Polynomial::constant(k.vars(), 1.0);
    let mut blocks = vec![localizing_block(&index, &one, t)];
    for h in k.inequalities() {
        blocks.push(localizing_block(&index, h, t - half_up(h.degree())));
    }
    let mut objective = vec![0.0; m];
    for (mono, c) in f.terms() {
        objective[index.get(mono).expect("degree checked")] += c;
    }
    let mut e0 = vec![0.0; m];
    e0[0] = 1.0;
    Ok(Relaxation {
        problem: SdpProblem {
            num_vars: m,
            objective,
            blocks,
            equalities: vec![Equality { coeffs: e0, rhs: 1.0 }],
        },
        index,
        order: t,
        d0: localizer_half_degree(k),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct HierarchyOptions {
    /// First order; defaults to the smallest admissible one.
    pub t_min: Option<usize>,
    /// Last order; defaults to `t_min + 3`.
    pub t_max: Option<usize>,
    /// Feasibility tolerance for certifying atoms.
    pub feas_tol: f64,
    pub rank_ratio: f64,
    pub sdp: SdpSettings,
    pub extraction: ExtractionConfig,
    /// Solutions whose solver accuracy is below this are accepted even when
    /// the solver did not report `Optimal`.
    pub accept_accuracy: f64,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            t_min: None,
            t_max: None,
            feas_tol: 1e-6,
            rank_ratio: DEFAULT_RANK_RATIO,
            sdp: SdpSettings::default(),
            extraction: ExtractionConfig::default(),
            accept_accuracy: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyResult {
    /// Order at which the run stopped.
    pub order: usize,
    /// Lower bound on the minimum (upper bound for maximization).
    pub bound: f64,
    /// Certified minimizers, or the single projected first-moment candidate
    /// when `certified` is false.
    pub minimizers: Vec<Vec<f64>>,
    pub certified: bool,
    /// Bound obtained at each order tried, starting at the first.
    pub bounds: Vec<f64>,
    /// Moments of the last relaxation solved.
    pub moments: TruncatedMomentSequence,
}

fn accept(sol: &SdpSolution, opts: &HierarchyOptions) -> Result<(), LasserreError> {
    match sol.status {
        SdpStatus::Optimal => Ok(()),
        SdpStatus::PrimalInfeasible => Err(LasserreError::EmptySet),
        _ if sol.accuracy() <= opts.accept_accuracy => Ok(()),
        s => Err(LasserreError::Solver(s)),
    }
}

/// Runs the hierarchy on `min f` over `k` for orders `t_min..=t_max`,
/// stopping at the first order whose solution is certified.
pub fn minimize(
    f: &Polynomial,
    k: &SetDescriptor,
    opts: &HierarchyOptions,
) -> Result<HierarchyResult, LasserreError> {
    if !k.is_archimedean() {
        return Err(LasserreError::NotArchimedean);
    }
    let f = f.remap(k.vars())?;
    let lo = min_order(&f, k);
    let t_min = opts.t_min.unwrap_or(lo).max(lo);
    let t_max = opts.t_max.unwrap_or(t_min + 3).max(t_min);
    let mut bounds = Vec::new();
    let mut last: Option<HierarchyResult> = None;
    let mut failed = None;
    for t in t_min..=t_max {
        let relax = relax(&f, k, t)?;
        let sol = solve(&relax.problem, &opts.sdp)?;
        if let Err(e) = accept(&sol, opts) {
            // a later order failing numerically keeps the earlier result; a
            // failing first order moves on to the next one
            match (e, last.take()) {
                (LasserreError::Solver(_), Some(prev)) => return Ok(prev),
                (LasserreError::Solver(s), None) if t < t_max => {
                    failed = Some(s);
                    continue;
                }
                (e, _) => return Err(e),
            }
        }
        let mut y = sol.y.clone();
        y[0] = 1.0;
        let moments = TruncatedMomentSequence::with_index(relax.index.clone(), y)?;
        // every order is a valid lower bound, keep the running maximum
        let bound = bounds.iter().copied().fold(sol.primal_objective, f64::max);
        bounds.push(sol.primal_objective);

        if let Some(points) = certify(&f, k, &moments, relax.d0, bound, opts) {
            return Ok(HierarchyResult {
                order: t,
                bound,
                minimizers: points,
                certified: true,
                bounds,
                moments,
            });
        }
        let candidate = k.project(&moments.first_moments());
        last = Some(HierarchyResult {
            order: t,
            bound,
            minimizers: vec![candidate],
            certified: false,
            bounds: bounds.clone(),
            moments,
        });
    }
    match (last, failed) {
        (Some(r), _) => Ok(r),
        (None, Some(s)) => Err(LasserreError::Solver(s)),
        (None, None) => unreachable!("at least one order runs"),
    }
}

/// `max f` over `k`: the hierarchy on `-f` with the bound negated.
pub fn maximize(
    f: &Polynomial,
    k: &SetDescriptor,
    opts: &HierarchyOptions,
) -> Result<HierarchyResult, LasserreError> {
    let mut r = minimize(&f.neg(), k, opts)?;
    r.bound = -r.bound;
    r.bounds.iter_mut().for_each(|b| *b = -*b);
    Ok(r)
}

/// Flat truncation, extraction and the feasibility/objective checks.
fn certify(
    f: &Polynomial,
    k: &SetDescriptor,
    y: &TruncatedMomentSequence,
    d0: usize,
    bound: f64,
    opts: &HierarchyOptions,
) -> Option<Vec<Vec<f64>>> {
    let (t, r) = flat_truncation(y, d0, opts.rank_ratio)?;
    let atoms = extract_atoms(y, t, r, &opts.extraction).ok()?;
    let points = atoms.points();
    for p in &points {
        if !k.contains(p, opts.feas_tol).ok()? {
            return None;
        }
        let v = f.eval(p).ok()?;
        if (v - bound).abs() > 1e-5 * (1.0 + bound.abs()) {
            return None;
        }
    }
    Some(points)
}
