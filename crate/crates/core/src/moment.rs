//! Truncated moment sequences, moment and localizing matrices, flat
//! truncation and atom extraction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{basis_len, Monomial, MonomialIndex, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("need moments up to degree {needed}, sequence has degree {available}")]
    DegreeOverflow { needed: usize, available: usize },
    #[error("expected {expected} moments, got {got}")]
    Length { expected: usize, got: usize },
    #[error("moment sequence is not normalized (y_0 = {0})")]
    NotNormalized(f64),
    #[error("polynomial has {got} variables, sequence has {expected}")]
    VariableCount { expected: usize, got: usize },
    #[error("atom extraction failed: {0}")]
    Extraction(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Moments `y_alpha` for `alpha` in `basis(n, degree)`, with `y_0 = 1`.
#[derive(Debug, Clone)]
pub struct TruncatedMomentSequence {
    index: Arc<MonomialIndex>,
    values: Vec<f64>,
}

impl TruncatedMomentSequence {
    pub fn new(n: usize, degree: usize, values: Vec<f64>) -> Result<Self, MomentError> {
        Self::with_index(Arc::new(MonomialIndex::new(n, degree)), values)
    }

    pub fn with_index(index: Arc<MonomialIndex>, values: Vec<f64>) -> Result<Self, MomentError> {
        if values.len() != index.len() {
            return Err(MomentError::Length {
                expected: index.len(),
                got: values.len(),
            });
        }
        if (values[0] - 1.0).abs() > 1e-6 {
            return Err(MomentError::NotNormalized(values[0]));
        }
        Ok(Self { index, values })
    }

    pub fn nvars(&self) -> usize {
        self.index.nvars()
    }

    pub fn degree(&self) -> usize {
        self.index.degree()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self) -> &Arc<MonomialIndex> {
        &self.index
    }

    pub fn get(&self, m: &Monomial) -> Option<f64> {
        self.index.get(m).map(|i| self.values[i])
    }

    /// First-order moments `(y_{e_1}, ..., y_{e_n})`.
    pub fn first_moments(&self) -> Vec<f64> {
        let n = self.nvars();
        (0..n)
            .map(|i| self.get(&Monomial::unit(n, i)).unwrap_or(0.0))
            .collect()
    }

    fn need(&self, degree: usize) -> Result<(), MomentError> {
        if degree > self.degree() {
            Err(MomentError::DegreeOverflow {
                needed: degree,
                available: self.degree(),
            })
        } else {
            Ok(())
        }
    }
}

/// `L_y(p) = sum_alpha p_alpha y_alpha`.
pub fn riesz(y: &TruncatedMomentSequence, p: &Polynomial) -> Result<f64, MomentError> {
    if p.nvars() != y.nvars() {
        return Err(MomentError::VariableCount {
            expected: y.nvars(),
            got: p.nvars(),
        });
    }
    y.need(p.degree())?;
    Ok(p
        .terms()
        .map(|(m, c)| c * y.get(m).expect("degree checked"))
        .sum())
}

/// `M_d(y)` with entry `(alpha, beta) = y_{alpha+beta}`.
pub fn moment_matrix(y: &TruncatedMomentSequence, d: usize) -> Result<DMatrix<f64>, MomentError> {
    y.need(2 * d)?;
    let s = basis_len(y.nvars(), d);
    let idx = &y.index;
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let v = y.values[idx.get(&idx.monomial(a).mul(idx.monomial(b))).expect("in range")];
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(m)
}

/// `M_d(g y)` with entry `(alpha, beta) = sum_kappa g_kappa y_{alpha+beta+kappa}`.
pub fn localizing_matrix(
    y: &TruncatedMomentSequence,
    g: &Polynomial,
    d: usize,
) -> Result<DMatrix<f64>, MomentError> {
    if g.nvars() != y.nvars() {
        return Err(MomentError::VariableCount {
            expected: y.nvars(),
            got: g.nvars(),
        });
    }
    y.need(2 * d + g.degree())?;
    let s = basis_len(y.nvars(), d);
    let idx = &y.index;
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let ab = idx.monomial(a).mul(idx.monomial(b));
            let v: f64 = g
                .terms()
                .map(|(k, c)| c * y.values[idx.get(&ab.mul(k)).expect("degree checked")])
                .sum();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(m)
}

/// Number of singular values at least `ratio` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>, ratio: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= ratio * max).count()
}

/// Default singular-value cutoff relative to the largest singular value.
pub const DEFAULT_RANK_RATIO: f64 = 1e-6;

/// Smallest `t` in `d0..=degree/2` with `rank M_{t-d0}(y) = rank M_t(y)`;
/// returns `(t, rank)`.
pub fn flat_truncation(y: &TruncatedMomentSequence, d0: usize, ratio: f64) -> Option<(usize, usize)> {
    let dmax = y.degree() / 2;
    for t in d0.max(1)..=dmax {
        let hi = numerical_rank(&moment_matrix(y, t).ok()?, ratio);
        let lo = numerical_rank(&moment_matrix(y, t - d0).ok()?, ratio);
        if hi == lo {
            return Some((t, hi));
        }
    }
    None
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl AtomicMeasure {
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.atoms.iter().map(|(p, _)| p.clone()).collect()
    }

    /// Moments of the measure up to `degree`.
    pub fn moments(&self, n: usize, degree: usize) -> Vec<f64> {
        let idx = MonomialIndex::new(n, degree);
        idx.monomials()
            .iter()
            .map(|m| self.atoms.iter().map(|(p, w)| w * m.eval(p)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractionConfig {
    pub seed: u64,
    /// Pivot threshold for the column echelon reduction, relative to the
    /// largest entry.
    pub pivot_tol: f64,
    /// Allowed relative mismatch between `y` and the re-synthesized moments.
    pub residual_tol: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            pivot_tol: 1e-6,
            residual_tol: 1e-5,
        }
    }
}

/// Henrion-Lasserre extraction of an `r`-atomic measure from a flat
/// `M_t(y)`.
pub fn extract_atoms(
    y: &TruncatedMomentSequence,
    t: usize,
    r: usize,
    config: &ExtractionConfig,
) -> Result<AtomicMeasure, MomentError> {
    let fail = |m: &str| Err(MomentError::Extraction(m.to_string()));
    let n = y.nvars();
    let mt = moment_matrix(y, t)?;
    let s = mt.nrows();
    if r == 0 || r > s {
        return fail("rank out of range");
    }

    // M_t = V V^T with V of rank r
    let eig = SymmetricEigen::new(mt);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut v = DMatrix::zeros(s, r);
    for (c, &k) in order.iter().take(r).enumerate() {
        let lam = eig.eigenvalues[k];
        if lam <= 0.0 {
            return fail("moment matrix has fewer positive eigenvalues than the rank");
        }
        v.set_column(c, &(eig.eigenvectors.column(k) * lam.sqrt()));
    }

    // column echelon form: U = V T with identity rows at the basis monomials
    let (u, pivots) = column_echelon(&v, config.pivot_tol).ok_or(MomentError::Extraction(
        "echelon reduction found fewer pivots than the rank".into(),
    ))?;
    let idx = y.index();
    let basis: Vec<&Monomial> = pivots.iter().map(|&p| idx.monomial(p)).collect();

    // multiplication matrices N_i with rows x_i * b_j
    let tlen = basis_len(n, t);
    let mut mult = Vec::with_capacity(n);
    for i in 0..n {
        let xi = Monomial::unit(n, i);
        let mut ni = DMatrix::zeros(r, r);
        for (j, b) in basis.iter().enumerate() {
            let row = idx.get(&b.mul(&xi)).filter(|&k| k < tlen).ok_or(
                MomentError::Extraction("shifted basis monomial exceeds the truncation".into()),
            )?;
            ni.set_row(j, &u.row(row));
        }
        mult.push(ni);
    }

    // simultaneous triangularization via a random combination
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut combo = DMatrix::zeros(r, r);
    for (w, ni) in weights.iter().zip(&mult) {
        combo += ni * *w;
    }
    let (q, tri) = Schur::new(combo).unpack();
    let scale = tri.amax().max(1.0);
    for k in 1..r {
        if tri[(k, k - 1)].abs() > 1e-8 * scale {
            return fail("multiplication matrices have complex eigenvalues");
        }
    }
    let points: Vec<Vec<f64>> = (0..r)
        .map(|k| {
            let qk = q.column(k);
            mult.iter().map(|ni| (qk.transpose() * ni * qk)[(0, 0)]).collect()
        })
        .collect();

    // weights by least squares on moments up to degree 2t
    let rows = idx.prefix_len(2 * t);
    let a = DMatrix::from_fn(rows, r, |row, k| idx.monomial(row).eval(&points[k]));
    let rhs = DVector::from_column_slice(&y.values()[..rows]);
    let w = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| MomentError::Extraction(e.to_string()))?;
    if w.iter().any(|&wk| wk <= 0.0) {
        return fail("non-positive atom weight");
    }
    let synth = &a * &w;
    for (s, yv) in synth.iter().zip(rhs.iter()) {
        if (s - yv).abs() > config.residual_tol * (1.0 + yv.abs()) {
            return fail("re-synthesized moments do not match");
        }
    }
    Ok(AtomicMeasure {
        atoms: points.into_iter().zip(w.iter().copied()).collect(),
    })
}

/// Reduces the columns of `v` (s x r) to echelon form by Gauss-Jordan
/// elimination with partial pivoting on `v^T`. Returns `U` with
/// `U[pivots[j], :] = e_j` and the pivot rows in increasing order.
fn column_echelon(v: &DMatrix<f64>, tol: f64) -> Option<(DMatrix<f64>, Vec<usize>)> {
    let mut a = v.transpose();
    let (r, s) = a.shape();
    let thresh = tol * a.amax().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::with_capacity(r);
    let mut row = 0;
    for col in 0..s {
        if row == r {
            break;
        }
        let (best, val) = (row..r)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= thresh {
            for i in row..r {
                a[(i, col)] = 0.0;
            }
            continue;
        }
        a.swap_rows(row, best);
        let p = a[(row, col)];
        for j in 0..s {
            a[(row, j)] /= p;
        }
        for i in 0..r {
            if i != row {
                let f = a[(i, col)];
                if f != 0.0 {
                    for j in 0..s {
                        a[(i, j)] -= f * a[(row, j)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() < r {
        return None;
    }
    Some((a.transpose(), pivots))
}
