//! Block-diagonal semidefinite programs and an embedded primal-dual
//! interior-point solver.
//!
//! Problems are stated in the form
//!
//! ```text
//! minimize    c.y
//! subject to  A_0^b + sum_k y_k A_k^b  >= 0   for every block b
//!             a_r.y = b_r                      for every equality r
//! ```
//!
//! whose conic dual is
//!
//! ```text
//! maximize    -sum_b <A_0^b, X_b> + b.w
//! subject to  sum_b <A_k^b, X_b> + (E^T w)_k = c_k,   X_b >= 0.
//! ```
//!
//! For moment relaxations `y` are pseudo-moments, the block slacks are moment
//! and localizing matrices, and `(X, w)` carry the sum-of-squares certificate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("SDPA line {line}: {message}")]
    Sdpa { line: usize, message: String },
}

/// Symmetric matrix stored as its upper-triangular nonzeros, sorted by
/// `(row, col)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Canonicalizes arbitrary `(i, j, v)` triplets: `(j, i)` is folded onto
    /// `(i, j)`, duplicates are summed and exact zeros dropped.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in entries {
            *map.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
        }
        Self {
            entries: map
                .into_iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|((i, j), v)| (i, j, v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.add_scaled_to(&mut m, 1.0);
        m
    }

    pub fn add_scaled_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    /// `<A, M>` for symmetric `M`.
    pub fn inner(&self, m: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * m[(i, i)] } else { v * (m[(i, j)] + m[(j, i)]) })
            .sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_entries(self.entries.iter().map(|&(i, j, v)| (perm[i], perm[j], v)))
    }
}

/// One affine matrix map `A_0 + sum_k y_k A_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: SparseSym,
    /// `(variable, A_k)` sorted by variable, each variable at most once.
    pub coeffs: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    /// Builds a block from `(variable, i, j, value)` triplets; `None` marks
    /// the constant term.
    pub fn from_triplets(
        size: usize,
        triplets: impl IntoIterator<Item = (Option<usize>, usize, usize, f64)>,
    ) -> Self {
        let mut groups: BTreeMap<Option<usize>, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (k, i, j, v) in triplets {
            groups.entry(k).or_default().push((i, j, v));
        }
        let mut constant = SparseSym::default();
        let mut coeffs = Vec::new();
        for (k, entries) in groups {
            let m = SparseSym::from_entries(entries);
            match k {
                None => constant = m,
                Some(k) if !m.is_empty() => coeffs.push((k, m)),
                Some(_) => {}
            }
        }
        Self {
            size,
            constant,
            coeffs,
        }
    }

    /// `A_0 + sum_k y_k A_k` as a dense matrix.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.to_dense(self.size);
        for (k, a) in &self.coeffs {
            if y[*k] != 0.0 {
                a.add_scaled_to(&mut m, y[*k]);
            }
        }
        m
    }

    /// Applies the same row/column permutation to every coefficient matrix.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            size: self.size,
            constant: self.constant.permuted(perm),
            coeffs: self
                .coeffs
                .iter()
                .map(|(k, a)| (*k, a.permuted(perm)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
    pub equalities: Vec<Equality>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |m: String| Err(SdpError::Malformed(m));
        if self.objective.len() != self.num_vars {
            return bad(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            ));
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            if blk.size == 0 {
                return bad(format!("block {b} has size 0"));
            }
            let mats = std::iter::once(&blk.constant).chain(blk.coeffs.iter().map(|(_, a)| a));
            for a in mats {
                if a.entries.iter().any(|&(i, j, v)| i > j || j >= blk.size || !v.is_finite()) {
                    return bad(format!("block {b} has an out-of-range or non-finite entry"));
                }
            }
            let mut last = None;
            for (k, _) in &blk.coeffs {
                if *k >= self.num_vars {
                    return bad(format!("block {b} references variable {k}"));
                }
                if last.is_some_and(|l| l >= *k) {
                    return bad(format!("block {b} coefficients are not sorted by variable"));
                }
                last = Some(*k);
            }
        }
        for (r, e) in self.equalities.iter().enumerate() {
            if e.coeffs.len() != self.num_vars {
                return bad(format!("equality {r} has {} coefficients", e.coeffs.len()));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, y)| c * y).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    /// Slack matrices `A_0 + sum_k y_k A_k`, one per block.
    pub slacks: Vec<DMatrix<f64>>,
    /// Dual matrices `X_b`.
    pub block_duals: Vec<DMatrix<f64>>,
    /// Multipliers `w` of the equality rows.
    pub equality_duals: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|c.y - dual| / (1 + |c.y| + |dual|)`.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

impl SdpSolution {
    /// Largest of the relative gap and the two infeasibility measures.
    pub fn accuracy(&self) -> f64 {
        self.gap
            .max(self.primal_infeasibility)
            .max(self.dual_infeasibility)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Print one progress line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

const STATIC_REGULARIZATION: f64 = 1e-9;
const DIVERGENCE: f64 = 1e10;

/// Variable layout precomputed once per solve.
struct Layout<'a> {
    problem: &'a SdpProblem,
    eq: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    c: DVector<f64>,
    total_size: usize,
    a0_norm: f64,
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    w: DVector<f64>,
}

struct Residuals {
    rp: Vec<DMatrix<f64>>,
    rd: DVector<f64>,
    re: DVector<f64>,
    pobj: f64,
    dobj: f64,
    pinf: f64,
    dinf: f64,
    gap: f64,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dw: DVector<f64>,
}

/// Factorization of the Newton system. Without equalities this is the
/// Cholesky factor of `M`; otherwise an LU of `[[M, -E^T], [E, 0]]`.
enum SchurFactor {
    Plain {
        m: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
    Augmented {
        kkt: DMatrix<f64>,
        lu: LU<f64, Dyn, Dyn>,
        nvars: usize,
    },
}

impl SchurFactor {
    /// Solves `M dy - E^T dw = h`, `E dy = re` with one step of iterative
    /// refinement.
    fn solve(&self, h: &DVector<f64>, re: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            SchurFactor::Plain { m, chol } => {
                let mut z = chol.solve(h);
                let r = h - m * &z;
                z += chol.solve(&r);
                Some((z, DVector::zeros(0)))
            }
            SchurFactor::Augmented { kkt, lu, nvars } => {
                let mut rhs = DVector::zeros(kkt.nrows());
                rhs.rows_mut(0, *nvars).copy_from(h);
                rhs.rows_mut(*nvars, re.len()).copy_from(re);
                let mut z = lu.solve(&rhs)?;
                let r = &rhs - kkt * &z;
                z += lu.solve(&r)?;
                let dy = z.rows(0, *nvars).into_owned();
                let dw = z.rows(*nvars, re.len()).into_owned();
                Some((dy, dw))
            }
        }
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

impl<'a> Layout<'a> {
    fn new(problem: &'a SdpProblem) -> Self {
        let m = problem.num_vars;
        let q = problem.equalities.len();
        let eq = DMatrix::from_fn(q, m, |r, k| problem.equalities[r].coeffs[k]);
        let eq_rhs = DVector::from_iterator(q, problem.equalities.iter().map(|e| e.rhs));
        let c = DVector::from_column_slice(&problem.objective);
        let total_size = problem.blocks.iter().map(|b| b.size).sum();
        let a0_norm = problem
            .blocks
            .iter()
            .map(|b| b.constant.frobenius().powi(2))
            .sum::<f64>()
            .sqrt();
        Self {
            problem,
            eq,
            eq_rhs,
            c,
            total_size,
            a0_norm,
        }
    }

    fn blocks(&self) -> &[LmiBlock] {
        &self.problem.blocks
    }

    fn apply(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks().iter().map(|b| b.evaluate(y.as_slice())).collect()
    }

    fn apply_linear(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks()
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.size, b.size);
                for (k, a) in &b.coeffs {
                    if y[*k] != 0.0 {
                        a.add_scaled_to(&mut m, y[*k]);
                    }
                }
                m
            })
            .collect()
    }

    /// `(sum_b <A_k^b, G_b>)_k` for symmetric `G_b`.
    fn adjoint(&self, g: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.problem.num_vars);
        for (b, blk) in self.blocks().iter().enumerate() {
            for (k, a) in &blk.coeffs {
                out[*k] += a.inner(&g[b]);
            }
        }
        out
    }

    fn initial_point(&self) -> Iterate {
        let p = self.problem;
        let mut x = Vec::new();
        let mut s = Vec::new();
        for blk in p.blocks.iter() {
            let n = blk.size as f64;
            let mut xi: f64 = 10f64.max(n.sqrt());
            let mut eta: f64 = 10f64.max(n.sqrt()).max(blk.constant.frobenius());
            for (k, a) in &blk.coeffs {
                let fa = a.frobenius();
                xi = xi.max(n * (1.0 + p.objective[*k].abs()) / (1.0 + fa));
                eta = eta.max(fa);
            }
            x.push(DMatrix::identity(blk.size, blk.size) * xi);
            s.push(DMatrix::identity(blk.size, blk.size) * eta);
        }
        Iterate {
            x,
            s,
            y: DVector::zeros(p.num_vars),
            w: DVector::zeros(p.equalities.len()),
        }
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let ay = self.apply(&it.y);
        let rp: Vec<DMatrix<f64>> = ay.into_iter().zip(&it.s).map(|(a, s)| a - s).collect();
        let rd = &self.c - self.adjoint(&it.x) - self.eq.transpose() * &it.w;
        let re = &self.eq_rhs - &self.eq * &it.y;
        let pobj = self.c.dot(&it.y);
        let a0x: f64 = self
            .blocks()
            .iter()
            .zip(&it.x)
            .map(|(b, x)| b.constant.inner(x))
            .sum();
        let dobj = -a0x + self.eq_rhs.dot(&it.w);
        let rp_norm = rp.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        let pinf = (rp_norm / (1.0 + self.a0_norm)).max(re.norm() / (1.0 + self.eq_rhs.norm()));
        let dinf = rd.norm() / (1.0 + self.c.norm());
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        Residuals {
            rp,
            rd,
            re,
            pobj,
            dobj,
            pinf,
            dinf,
            gap,
        }
    }

    /// `M_kj = sum_b tr(A_k X A_j S^{-1})`.
    fn schur(&self, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.problem.num_vars;
        let mut out = DMatrix::zeros(m, m);
        for (b, blk) in self.blocks().iter().enumerate() {
            let n = blk.size;
            let (xb, sb) = (&x[b], &sinv[b]);
            let columns: Vec<(usize, Vec<f64>)> = blk
                .coeffs
                .par_iter()
                .map(|(j, aj)| {
                    let mut touched: Vec<usize> =
                        aj.entries().iter().flat_map(|&(p, q, _)| [p, q]).collect();
                    touched.sort_unstable();
                    touched.dedup();
                    let pos = |c: usize| touched.binary_search(&c).expect("touched column");
                    let mut t = DMatrix::<f64>::zeros(n, touched.len());
                    for &(p, q, v) in aj.entries() {
                        let cq = pos(q);
                        for r in 0..n {
                            t[(r, cq)] += v * xb[(r, p)];
                        }
                        if p != q {
                            let cp = pos(p);
                            for r in 0..n {
                                t[(r, cp)] += v * xb[(r, q)];
                            }
                        }
                    }
                    let rows = sb.select_rows(touched.iter());
                    let prod = t * rows;
                    let col = blk.coeffs.iter().map(|(_, ak)| ak.inner(&prod)).collect();
                    (*j, col)
                })
                .collect();
            for (j, col) in columns {
                for ((k, _), v) in blk.coeffs.iter().zip(col) {
                    out[(*k, j)] += v;
                }
            }
        }
        sym(out)
    }

    fn factor(&self, m: DMatrix<f64>) -> Option<SchurFactor> {
        let max_diag = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let nvars = m.nrows();
        let q = self.eq.nrows();
        if q == 0 {
            let mut delta = STATIC_REGULARIZATION;
            loop {
                let mut reg = m.clone();
                for i in 0..nvars {
                    reg[(i, i)] += delta;
                }
                if let Some(chol) = Cholesky::new(reg) {
                    return Some(SchurFactor::Plain { m, chol });
                }
                delta *= 100.0;
                if delta > 1e-2 * max_diag.max(1.0) {
                    return None;
                }
            }
        }
        let mut kkt = DMatrix::zeros(nvars + q, nvars + q);
        kkt.view_mut((0, 0), (nvars, nvars)).copy_from(&m);
        kkt.view_mut((nvars, 0), (q, nvars)).copy_from(&self.eq);
        kkt.view_mut((0, nvars), (nvars, q)).copy_from(&(-self.eq.transpose()));
        let mut reg = kkt.clone();
        for i in 0..nvars {
            reg[(i, i)] += STATIC_REGULARIZATION;
        }
        let lu = reg.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(SchurFactor::Augmented { kkt, lu, nvars })
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        sinv: &[DMatrix<f64>],
        res: &Residuals,
        sigma_mu: f64,
        corr: Option<&[DMatrix<f64>]>,
        f: &SchurFactor,
    ) -> Option<Direction> {
        let nb = it.x.len();
        let mut g = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut gb = &sinv[b] * sigma_mu - &it.x[b];
            gb -= &it.x[b] * &res.rp[b] * &sinv[b];
            if let Some(corr) = corr {
                gb -= &corr[b] * &sinv[b];
            }
            g.push(sym(gb));
        }
        let h = self.adjoint(&g) - &res.rd;
        let (dy, dw) = f.solve(&h, &res.re)?;
        let ady = self.apply_linear(&dy);
        let mut dx = Vec::with_capacity(nb);
        let mut ds = Vec::with_capacity(nb);
        for b in 0..nb {
            let dsb = &res.rp[b] + &ady[b];
            let dxb = sym(&g[b] - &it.x[b] * &ady[b] * &sinv[b]);
            dx.push(dxb);
            ds.push(dsb);
        }
        Some(Direction { dx, ds, dy, dw })
    }
}

/// Largest `a` (possibly infinite) with `m + a * dm` positive semidefinite.
fn max_step(m: &[DMatrix<f64>], dm: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (mb, db) in m.iter().zip(dm) {
        let Some(chol) = Cholesky::new(mb.clone()) else {
            return 0.0;
        };
        let l = chol.l();
        let Some(t) = l.solve_lower_triangular(db) else {
            return 0.0;
        };
        let Some(w) = l.solve_lower_triangular(&t.transpose()) else {
            return 0.0;
        };
        let lmin = SymmetricEigen::new(sym(w)).eigenvalues.min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

fn finish(layout: &Layout<'_>, it: Iterate, res: &Residuals, status: SdpStatus, iterations: usize) -> SdpSolution {
    let slacks = layout.apply(&it.y);
    SdpSolution {
        status,
        y: it.y.as_slice().to_vec(),
        slacks,
        block_duals: it.x,
        equality_duals: it.w.as_slice().to_vec(),
        primal_objective: res.pobj,
        dual_objective: res.dobj,
        gap: res.gap,
        primal_infeasibility: res.pinf,
        dual_infeasibility: res.dinf,
        iterations,
    }
}

/// One predictor-corrector step: the direction and the primal and dual step
/// lengths.
fn newton_step(layout: &Layout<'_>, it: &Iterate, res: &Residuals) -> Option<(Direction, f64, f64)> {
    let mu: f64 = it.x.iter().zip(&it.s).map(|(x, s)| inner(x, s)).sum::<f64>() / layout.total_size as f64;
    let mut sinv = Vec::with_capacity(it.s.len());
    for s in &it.s {
        sinv.push(sym(Cholesky::new(s.clone())?.inverse()));
    }
    let factor = layout.factor(layout.schur(&it.x, &sinv))?;

    let pred = layout.direction(it, &sinv, res, 0.0, None, &factor)?;
    let ap = max_step(&it.x, &pred.dx).min(1.0);
    let ad = max_step(&it.s, &pred.ds).min(1.0);
    let mut mu_aff = 0.0;
    for b in 0..it.x.len() {
        let xa = &it.x[b] + &pred.dx[b] * ap;
        let sa = &it.s[b] + &pred.ds[b] * ad;
        mu_aff += inner(&xa, &sa);
    }
    mu_aff /= layout.total_size as f64;
    let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
    let corr: Vec<DMatrix<f64>> = pred.dx.iter().zip(&pred.ds).map(|(dx, ds)| dx * ds).collect();

    let dir = layout.direction(it, &sinv, res, sigma * mu, Some(&corr), &factor)?;
    let ap_max = max_step(&it.x, &dir.dx);
    let ad_max = max_step(&it.s, &dir.ds);
    let gamma = 0.9 + 0.09 * ap_max.min(ad_max).min(1.0);
    Some((dir, (gamma * ap_max).min(1.0), (gamma * ad_max).min(1.0)))
}

/// Solves `problem` with an infeasible-start primal-dual path-following
/// method (HKM direction, Mehrotra predictor-corrector).
///
/// Equalities that pin a single variable are eliminated before the
/// iteration and their multipliers recovered from dual feasibility.
pub fn solve(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    if settings.tol <= 0.0 {
        return Err(SdpError::Malformed("tolerance must be positive".into()));
    }
    if problem.blocks.is_empty() {
        return Err(SdpError::Malformed("problem has no semidefinite block".into()));
    }
    match Reduction::new(problem) {
        Some(red) => {
            let sol = solve_core(&red.problem, settings);
            Ok(red.expand(problem, sol))
        }
        None => Ok(solve_core(problem, settings)),
    }
}

/// Problem with pinned variables substituted out.
struct Reduction {
    problem: SdpProblem,
    /// Original index of each remaining variable.
    keep: Vec<usize>,
    /// `(variable, value, row, coefficient)` of each pinned variable.
    pinned: Vec<(usize, f64, usize, f64)>,
    /// Original indices of the equality rows that remain.
    rows: Vec<usize>,
}

impl Reduction {
    fn new(p: &SdpProblem) -> Option<Self> {
        let mut pin_rows: Vec<Vec<usize>> = vec![Vec::new(); p.num_vars];
        let mut single = vec![None; p.equalities.len()];
        for (r, e) in p.equalities.iter().enumerate() {
            let mut nz = e.coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0);
            if let (Some((k, _)), None) = (nz.next(), nz.next()) {
                single[r] = Some(k);
                pin_rows[k].push(r);
            }
        }
        let mut pinned = Vec::new();
        let mut value = vec![None; p.num_vars];
        for (k, rows) in pin_rows.iter().enumerate() {
            if let [r] = rows.as_slice() {
                let a = p.equalities[*r].coeffs[k];
                let v = p.equalities[*r].rhs / a;
                pinned.push((k, v, *r, a));
                value[k] = Some(v);
            }
        }
        if pinned.is_empty() {
            return None;
        }
        let keep: Vec<usize> = (0..p.num_vars).filter(|k| value[*k].is_none()).collect();
        let mut new_index = vec![usize::MAX; p.num_vars];
        for (i, &k) in keep.iter().enumerate() {
            new_index[k] = i;
        }
        let blocks = p
            .blocks
            .iter()
            .map(|blk| {
                let mut constant: Vec<(usize, usize, f64)> = blk.constant.entries().to_vec();
                let mut coeffs = Vec::new();
                for (k, a) in &blk.coeffs {
                    match value[*k] {
                        Some(v) => constant.extend(a.entries().iter().map(|&(i, j, x)| (i, j, x * v))),
                        None => coeffs.push((new_index[*k], a.clone())),
                    }
                }
                LmiBlock {
                    size: blk.size,
                    constant: SparseSym::from_entries(constant),
                    coeffs,
                }
            })
            .collect();
        let rows: Vec<usize> = (0..p.equalities.len())
            .filter(|r| !single[*r].is_some_and(|k| value[k].is_some() && pin_rows[k] == [*r]))
            .collect();
        let equalities = rows
            .iter()
            .map(|&r| {
                let e = &p.equalities[r];
                let shift: f64 = (0..p.num_vars).filter_map(|k| value[k].map(|v| e.coeffs[k] * v)).sum();
                Equality {
                    coeffs: keep.iter().map(|&k| e.coeffs[k]).collect(),
                    rhs: e.rhs - shift,
                }
            })
            .collect();
        let problem = SdpProblem {
            num_vars: keep.len(),
            objective: keep.iter().map(|&k| p.objective[k]).collect(),
            blocks,
            equalities,
        };
        Some(Self {
            problem,
            keep,
            pinned,
            rows,
        })
    }

    fn expand(&self, p: &SdpProblem, sol: SdpSolution) -> SdpSolution {
        let mut y = vec![0.0; p.num_vars];
        for (i, &k) in self.keep.iter().enumerate() {
            y[k] = sol.y[i];
        }
        for &(k, v, ..) in &self.pinned {
            y[k] = v;
        }
        let mut w = vec![0.0; p.equalities.len()];
        for (i, &r) in self.rows.iter().enumerate() {
            w[r] = sol.equality_duals[i];
        }
        // the pinned row absorbs the dual residual of its variable
        let mut ax = vec![0.0; p.num_vars];
        for (blk, x) in p.blocks.iter().zip(&sol.block_duals) {
            for (k, a) in &blk.coeffs {
                ax[*k] += a.inner(x);
            }
        }
        for &(k, _, row, a) in &self.pinned {
            let others: f64 = self.rows.iter().map(|&r| p.equalities[r].coeffs[k] * w[r]).sum();
            w[row] = (p.objective[k] - ax[k] - others) / a;
        }
        let layout = Layout::new(p);
        let it = Iterate {
            x: sol.block_duals,
            s: sol.slacks.clone(),
            y: DVector::from_vec(y),
            w: DVector::from_vec(w),
        };
        let res = layout.residuals(&it);
        SdpSolution {
            status: sol.status,
            y: it.y.as_slice().to_vec(),
            slacks: sol.slacks,
            block_duals: it.x,
            equality_duals: it.w.as_slice().to_vec(),
            primal_objective: res.pobj,
            dual_objective: res.dobj,
            gap: res.gap,
            primal_infeasibility: sol.primal_infeasibility.max(res.pinf),
            dual_infeasibility: res.dinf,
            iterations: sol.iterations,
        }
    }
}

fn solve_core(problem: &SdpProblem, settings: &SdpSettings) -> SdpSolution {
    let layout = Layout::new(problem);
    let tol = settings.tol;
    let mut it = layout.initial_point();
    let mut best: Option<(f64, Iterate, Residuals, usize)> = None;
    let mut stalls = 0;
    let mut failure = false;

    let keep_best = |best: &mut Option<(f64, Iterate, Residuals, usize)>, it: &Iterate, res: Residuals, k: usize| {
        let err = res.gap.max(res.pinf).max(res.dinf);
        if best.as_ref().is_none_or(|(e, ..)| err < *e) {
            let copy = Iterate {
                x: it.x.clone(),
                s: it.s.clone(),
                y: it.y.clone(),
                w: it.w.clone(),
            };
            *best = Some((err, copy, res, k));
        }
    };

    for iter in 0..settings.max_iter {
        let res = layout.residuals(&it);
        if settings.verbose {
            eprintln!("{iter:3} pobj {:+.6e} dobj {:+.6e} pinf {:.2e} dinf {:.2e} gap {:.2e}", res.pobj, res.dobj, res.pinf, res.dinf, res.gap);
        }
        if res.pinf <= 10.0 * tol && res.dinf <= 10.0 * tol && res.gap <= tol {
            return finish(&layout, it, &res, SdpStatus::Optimal, iter);
        }
        // divergence of one side signals infeasibility of the other
        let xnorm: f64 = it.x.iter().map(|x| x.trace()).sum::<f64>() + it.w.amax();
        if xnorm > DIVERGENCE && res.dobj > 0.0 && res.dinf * (1.0 + layout.c.norm()) < 1e-6 * res.dobj.abs() {
            return finish(&layout, it, &res, SdpStatus::PrimalInfeasible, iter);
        }
        if it.y.amax() > DIVERGENCE && res.pobj < 0.0 && res.pinf < 1e-6 {
            return finish(&layout, it, &res, SdpStatus::DualInfeasible, iter);
        }
        let Some((dir, ap, ad)) = newton_step(&layout, &it, &res) else {
            failure = true;
            keep_best(&mut best, &it, res, iter);
            break;
        };
        keep_best(&mut best, &it, res, iter);

        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                failure = true;
                break;
            }
        } else {
            stalls = 0;
        }
        for b in 0..it.x.len() {
            let x = &it.x[b] + &dir.dx[b] * ap;
            let s = &it.s[b] + &dir.ds[b] * ad;
            it.x[b] = sym(x);
            it.s[b] = sym(s);
        }
        it.w += &dir.dw * ap;
        it.y += &dir.dy * ad;
    }
    if failure {
        let (_, bi, br, bk) = best.expect("stored before failing");
        return finish(&layout, bi, &br, SdpStatus::NumericalFailure, bk);
    }
    let res = layout.residuals(&it);
    let converged = res.pinf <= 10.0 * tol && res.dinf <= 10.0 * tol && res.gap <= tol;
    if converged {
        return finish(&layout, it, &res, SdpStatus::Optimal, settings.max_iter);
    }
    keep_best(&mut best, &it, res, settings.max_iter);
    let (_, bi, br, bk) = best.expect("stored at least once");
    finish(&layout, bi, &br, SdpStatus::MaxIterations, bk)
}

// ---------------------------------------------------------------------------
// SDPA sparse format
// ---------------------------------------------------------------------------

const EQ_TAG: &str = "* equality-block";

/// Writes `problem` in SDPA sparse format (`.dat-s`).
///
/// SDPA's primal is `min c.x s.t. sum_i F_i x_i - F_0 >= 0`, so `F_i = A_i`
/// and `F_0 = -A_0`. Each equality `a.y = b` becomes two diagonal entries
/// `a.y - b >= 0` and `b - a.y >= 0` of a trailing diagonal block.
pub fn export_sdpa(problem: &SdpProblem) -> String {
    let mut out = String::new();
    let neq = problem.equalities.len();
    let nblocks = problem.blocks.len() + usize::from(neq > 0);
    let _ = writeln!(out, "\"polypareto SDP: min c.y s.t. sum_k y_k F_k - F_0 >= 0");
    if neq > 0 {
        let _ = writeln!(
            out,
            "{EQ_TAG} {nblocks} rows {neq}: diagonal entries (2r-1, 2r) encode a_r.y - b_r >= 0 and b_r - a_r.y >= 0"
        );
    }
    let _ = writeln!(out, "{}", problem.num_vars);
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = problem.blocks.iter().map(|b| b.size.to_string()).collect();
    if neq > 0 {
        sizes.push(format!("-{}", 2 * neq));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let cs: Vec<String> = problem.objective.iter().map(|c| fmt17(*c)).collect();
    let _ = writeln!(out, "{}", cs.join(" "));

    // entries grouped by matrix number then block
    let mut lines: BTreeMap<(usize, usize), Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (b, blk) in problem.blocks.iter().enumerate() {
        for &(i, j, v) in blk.constant.entries() {
            lines.entry((0, b + 1)).or_default().push((i + 1, j + 1, -v));
        }
        for (k, a) in &blk.coeffs {
            for &(i, j, v) in a.entries() {
                lines.entry((k + 1, b + 1)).or_default().push((i + 1, j + 1, v));
            }
        }
    }
    if neq > 0 {
        for (r, e) in problem.equalities.iter().enumerate() {
            let (d1, d2) = (2 * r + 1, 2 * r + 2);
            if e.rhs != 0.0 {
                lines.entry((0, nblocks)).or_default().push((d1, d1, e.rhs));
                lines.entry((0, nblocks)).or_default().push((d2, d2, -e.rhs));
            }
            for (k, &a) in e.coeffs.iter().enumerate() {
                if a != 0.0 {
                    lines.entry((k + 1, nblocks)).or_default().push((d1, d1, a));
                    lines.entry((k + 1, nblocks)).or_default().push((d2, d2, -a));
                }
            }
        }
    }
    for ((mat, blk), mut entries) in lines {
        entries.sort_by_key(|e| (e.0, e.1));
        for (i, j, v) in entries {
            let _ = writeln!(out, "{mat} {blk} {i} {j} {}", fmt17(v));
        }
    }
    out
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a file produced by [`export_sdpa`] (or any SDPA sparse file; a
/// diagonal block is only turned back into equalities when tagged).
pub fn import_sdpa(text: &str) -> Result<SdpProblem, SdpError> {
    let mut eq_block: Option<usize> = None;
    let mut data: Vec<(usize, &str)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix(EQ_TAG) {
            let b = rest
                .split_whitespace()
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or(SdpError::Sdpa {
                    line: ln + 1,
                    message: "bad equality-block tag".into(),
                })?;
            eq_block = Some(b);
            continue;
        }
        if t.is_empty() || t.starts_with('"') || t.starts_with('*') {
            continue;
        }
        data.push((ln + 1, t));
    }
    let err = |line: usize, message: &str| SdpError::Sdpa {
        line,
        message: message.to_string(),
    };
    let mut rows = data.into_iter();
    let clean = |s: &str| s.replace([',', '{', '}', '(', ')'], " ");
    let (l, t) = rows.next().ok_or(err(0, "missing mDIM"))?;
    let m: usize = clean(t)
        .split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(err(l, "bad mDIM"))?;
    let (l, t) = rows.next().ok_or(err(l, "missing nBLOCK"))?;
    let nblocks: usize = clean(t)
        .split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(err(l, "bad nBLOCK"))?;
    let (l, t) = rows.next().ok_or(err(l, "missing block structure"))?;
    let sizes: Vec<i64> = clean(t)
        .split_whitespace()
        .take(nblocks)
        .map(|s| s.parse().map_err(|_| err(l, "bad block size")))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nblocks {
        return Err(err(l, "block structure too short"));
    }
    let mut objective = Vec::with_capacity(m);
    let mut last = l;
    while objective.len() < m {
        let (l, t) = rows.next().ok_or(err(last, "objective vector too short"))?;
        last = l;
        for tok in clean(t).split_whitespace() {
            if objective.len() < m {
                objective.push(tok.parse::<f64>().map_err(|_| err(l, "bad objective entry"))?);
            }
        }
    }
    let mut triplets: Vec<Vec<(Option<usize>, usize, usize, f64)>> = vec![Vec::new(); nblocks];
    for (l, t) in rows {
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() < 5 {
            return Err(err(l, "expected `matno blkno i j value`"));
        }
        let p = |s: &str| s.parse::<usize>().map_err(|_| err(l, "bad index"));
        let (mat, blk, i, j) = (p(f[0])?, p(f[1])?, p(f[2])?, p(f[3])?);
        let v: f64 = f[4].parse().map_err(|_| err(l, "bad value"))?;
        if blk == 0 || blk > nblocks || mat > m || i == 0 || j == 0 {
            return Err(err(l, "index out of range"));
        }
        let size = sizes[blk - 1].unsigned_abs() as usize;
        if i > size || j > size {
            return Err(err(l, "entry outside block"));
        }
        let var = if mat == 0 { None } else { Some(mat - 1) };
        let v = if mat == 0 { -v } else { v };
        triplets[blk - 1].push((var, i - 1, j - 1, v));
    }
    let mut blocks = Vec::new();
    let mut equalities = Vec::new();
    for (b, trip) in triplets.into_iter().enumerate() {
        let size = sizes[b].unsigned_abs() as usize;
        if eq_block == Some(b + 1) {
            let rows = size / 2;
            equalities = vec![
                Equality {
                    coeffs: vec![0.0; m],
                    rhs: 0.0
                };
                rows
            ];
            for (var, i, j, v) in trip {
                if i != j || i % 2 == 1 {
                    continue; // second entry of each pair is the mirror image
                }
                let r = i / 2;
                match var {
                    None => equalities[r].rhs = -v,
                    Some(k) => equalities[r].coeffs[k] = v,
                }
            }
        } else {
            blocks.push(LmiBlock::from_triplets(size, trip));
        }
    }
    let p = SdpProblem {
        num_vars: m,
        objective,
        blocks,
        equalities,
    };
    p.validate()?;
    Ok(p)
}
