//! Joint+marginal polynomial approximations of robust value functions.
//!
//! For `F(x) = sup_{u in U} f(x, u)` the upper approximation of degree `d`
//! solves
//!
//! ```text
//! minimize  sum_alpha mu_alpha gamma_alpha
//! s.t.      sum_alpha mu_alpha x^alpha - f(x, u)  in  Q_{2r}(X x U)
//! ```
//!
//! where `gamma` are the moments of the uniform probability measure on `X`.
//! The SDP is assembled on the moment side (`max L_z(f)` with the x-marginal
//! moments of `z` pinned to `gamma`), and `mu` is read off the multipliers of
//! the pinning equalities. Lower approximations of `inf_v g` use `-g`.

use std::sync::Arc;

use thiserror::Error;

use crate::lasserre::localizing_block;
use crate::moment::{MomentError, TruncatedMomentSequence};
use crate::poly::{basis, Monomial, MonomialIndex, PolyError, Polynomial};
use crate::sdp::{solve, Equality, SdpError, SdpProblem, SdpSettings, SdpSolution, SdpStatus};
use crate::semialg::{SetDescriptor, SetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JmError {
    #[error("relaxation order {order} is below the minimum {needed}")]
    OrderTooSmall { order: usize, needed: usize },
    #[error("no certificate at relaxation order {0}; raise the order")]
    RaiseOrder(usize),
    #[error("product set is empty")]
    EmptySet,
    #[error("SDP solver stopped with status {0:?}")]
    Solver(SdpStatus),
    #[error("envelope members must share one direction")]
    MixedDirections,
    #[error("envelope needs at least one member")]
    EmptyEnvelope,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    Upper,
    Lower,
}

/// One-sided polynomial approximation of a robust value function.
#[derive(Debug, Clone)]
pub struct ValueApprox {
    /// Polynomial over the variables of `X`; its coefficients are the
    /// `mu_alpha` (upper) or `nu_alpha` (lower).
    pub poly: Polynomial,
    pub direction: Direction,
    pub d: usize,
    pub order: usize,
    /// `sum_alpha coeff_alpha gamma_alpha`, the SOS-side objective.
    pub integral: f64,
    /// `L_z(f)` of the moment side (negated for lower approximations).
    pub moment_objective: f64,
    /// Solver accuracy (largest of gap and infeasibilities).
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct JmOptions {
    pub sdp: SdpSettings,
    /// Solutions not flagged optimal are still accepted below this accuracy.
    pub accept_accuracy: f64,
}

impl Default for JmOptions {
    fn default() -> Self {
        Self {
            sdp: SdpSettings::default(),
            accept_accuracy: 1e-6,
        }
    }
}

fn half_up(d: usize) -> usize {
    d.div_ceil(2)
}

/// `max(ceil(d/2), ceil(deg f/2), ceil(deg h/2) over X and U)`.
pub fn min_order(f: &Polynomial, x: &SetDescriptor, u: &SetDescriptor, d: usize) -> usize {
    x.inequalities()
        .iter()
        .chain(u.inequalities())
        .map(|h| half_up(h.degree()))
        .chain([half_up(d), half_up(f.degree()), 1])
        .max()
        .unwrap_or(1)
}

/// Minimum order plus one slack order.
pub fn default_order(f: &Polynomial, x: &SetDescriptor, u: &SetDescriptor, d: usize) -> usize {
    min_order(f, x, u, d) + 1
}

struct Marginal {
    index: Arc<MonomialIndex>,
    /// Monomials of `basis(dim X, d)`, matching the equality rows.
    x_basis: Vec<Monomial>,
    gamma: Vec<f64>,
    solution: SdpSolution,
}

fn solve_marginal(
    f: &Polynomial,
    x: &SetDescriptor,
    u: &SetDescriptor,
    d: usize,
    order: usize,
    opts: &JmOptions,
) -> Result<Marginal, JmError> {
    let joint = x.vars().concat(u.vars())?;
    let f = f.remap(&joint)?;
    let needed = min_order(&f, x, u, d);
    if order < needed {
        return Err(JmError::OrderTooSmall { order, needed });
    }
    let n = x.dim();
    let m = u.dim();
    let index = Arc::new(MonomialIndex::new(n + m, 2 * order));
    let nv = index.len();

    let one = Polynomial::constant(&joint, 1.0);
    let mut blocks = vec![localizing_block(&index, &one, order)];
    for h in x.lift(&joint)?.iter().chain(u.lift(&joint)?.iter()) {
        blocks.push(localizing_block(&index, h, order - half_up(h.degree())));
    }
    let mut objective = vec![0.0; nv];
    for (mono, c) in f.terms() {
        objective[index.get(mono).expect("degree checked")] -= c;
    }
    let x_basis = basis(n, d);
    let gamma = x.uniform_moments(d)?;
    let equalities = x_basis
        .iter()
        .zip(&gamma)
        .map(|(a, g)| {
            let mut e = a.exponents().to_vec();
            e.resize(n + m, 0);
            let mut coeffs = vec![0.0; nv];
            coeffs[index.get(&Monomial::new(e)).expect("d <= 2 order")] = 1.0;
            Equality { coeffs, rhs: *g }
        })
        .collect();
    let problem = SdpProblem {
        num_vars: nv,
        objective,
        blocks,
        equalities,
    };
    let solution = solve(&problem, &opts.sdp)?;
    match solution.status {
        SdpStatus::Optimal => {}
        SdpStatus::PrimalInfeasible => return Err(JmError::EmptySet),
        SdpStatus::DualInfeasible => return Err(JmError::RaiseOrder(order)),
        _ if solution.accuracy() <= opts.accept_accuracy => {}
        s => return Err(JmError::Solver(s)),
    }
    Ok(Marginal {
        index,
        x_basis,
        gamma,
        solution,
    })
}

/// Upper approximation of `sup_{u in U} f(x, u)` of degree `d` at relaxation
/// order `order`. `f` must be expressible over the variables of `X` and `U`.
pub fn upper_value_approx(
    f: &Polynomial,
    x: &SetDescriptor,
    u: &SetDescriptor,
    d: usize,
    order: usize,
    opts: &JmOptions,
) -> Result<ValueApprox, JmError> {
    let mg = solve_marginal(f, x, u, d, order, opts)?;
    let mu: Vec<f64> = mg.solution.equality_duals.iter().map(|w| -w).collect();
    let integral = mu.iter().zip(&mg.gamma).map(|(m, g)| m * g).sum();
    let poly = Polynomial::from_terms(
        x.vars(),
        mg.x_basis.iter().map(|m| m.exponents().to_vec()).zip(mu.iter().copied()),
    )?;
    Ok(ValueApprox {
        poly,
        direction: Direction::Upper,
        d,
        order,
        integral,
        moment_objective: -mg.solution.primal_objective,
        accuracy: mg.solution.accuracy(),
    })
}

/// Lower approximation of `inf_{v in V} g(x, v)`: the upper approximation of
/// `-g`, negated.
pub fn lower_value_approx(
    g: &Polynomial,
    x: &SetDescriptor,
    v: &SetDescriptor,
    e: usize,
    order: usize,
    opts: &JmOptions,
) -> Result<ValueApprox, JmError> {
    let up = upper_value_approx(&g.neg(), x, v, e, order, opts)?;
    Ok(ValueApprox {
        poly: up.poly.neg(),
        direction: Direction::Lower,
        d: e,
        order,
        integral: -up.integral,
        moment_objective: -up.moment_objective,
        accuracy: up.accuracy,
    })
}

/// Moment side of the upper approximation: `max L_z(f)` with the x-marginal
/// moments of `z` up to degree `d` pinned to `gamma`. Returns `L_z(f)` and
/// `z` (over the joint variables of `X` then `U`).
pub fn dual_marginal(
    f: &Polynomial,
    x: &SetDescriptor,
    u: &SetDescriptor,
    d: usize,
    order: usize,
    opts: &JmOptions,
) -> Result<(f64, TruncatedMomentSequence), JmError> {
    let mg = solve_marginal(f, x, u, d, order, opts)?;
    let mut z = mg.solution.y.clone();
    z[0] = 1.0;
    let z = TruncatedMomentSequence::with_index(mg.index, z)?;
    Ok((-mg.solution.primal_objective, z))
}

/// Pointwise minimum (upper) or maximum (lower) of several approximations.
#[derive(Debug, Clone)]
pub struct Envelope {
    direction: Direction,
    members: Vec<Polynomial>,
}

impl Envelope {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        let mut best: Option<f64> = None;
        for p in &self.members {
            let v = p.eval(point)?;
            best = Some(match (best, self.direction) {
                (None, _) => v,
                (Some(b), Direction::Upper) => b.min(v),
                (Some(b), Direction::Lower) => b.max(v),
            });
        }
        Ok(best.expect("nonempty"))
    }
}

pub fn monotone_envelope(approxes: &[ValueApprox]) -> Result<Envelope, JmError> {
    let first = approxes.first().ok_or(JmError::EmptyEnvelope)?;
    if approxes.iter().any(|a| a.direction != first.direction) {
        return Err(JmError::MixedDirections);
    }
    Ok(Envelope {
        direction: first.direction,
        members: approxes.iter().map(|a| a.poly.clone()).collect(),
    })
}
