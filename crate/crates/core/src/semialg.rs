//! Compact basic semialgebraic sets and moments of the uniform measure on
//! boxes and balls.

use std::sync::Arc;

use thiserror::Error;

use crate::poly::{basis, Monomial, PolyError, Polynomial, VarList};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("degenerate box: lower[{0}] must be < upper[{0}]")]
    DegenerateBox(usize),
    #[error("ball radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("uniform moments need a box or ball shape")]
    NotSimple,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    General,
}

/// `{z : h_k(z) >= 0 for all k}` over an ambient variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct SetDescriptor {
    vars: Arc<VarList>,
    inequalities: Vec<Polynomial>,
    shape: Shape,
    witness: Option<Polynomial>,
    witness_radius: Option<f64>,
}

impl SetDescriptor {
    /// Box with one quadratic constraint `(z_i - l_i)(u_i - z_i) >= 0` per
    /// coordinate.
    pub fn new_box(vars: &Arc<VarList>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        if lower.len() == upper.len() {
            if let Some(i) = (0..lower.len()).find(|&i| lower[i] >= upper[i]) {
                return Err(SetError::DegenerateBox(i));
            }
        }
        Self::box_allowing_degenerate(vars, lower, upper)
    }

    /// Box that may collapse to a point in some coordinates (`l_i = u_i`).
    /// Useful for uncertainty sets; such a set is not a valid `X`.
    pub fn box_allowing_degenerate(
        vars: &Arc<VarList>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, SetError> {
        let n = vars.len();
        for v in [&lower, &upper] {
            if v.len() != n {
                return Err(SetError::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        if let Some(i) = (0..n).find(|&i| lower[i] > upper[i]) {
            return Err(SetError::DegenerateBox(i));
        }
        let inequalities = (0..n)
            .map(|i| {
                let z = Polynomial::var_at(vars, i);
                let a = z.add_constant(-lower[i]);
                let b = z.neg().add_constant(upper[i]);
                a.mul(&b).expect("same variables")
            })
            .collect();
        Ok(Self {
            vars: vars.clone(),
            inequalities,
            shape: Shape::Box { lower, upper },
            witness: None,
            witness_radius: None,
        })
    }

    /// Ball `R^2 - ||z - c||^2 >= 0`.
    pub fn new_ball(vars: &Arc<VarList>, center: Vec<f64>, radius: f64) -> Result<Self, SetError> {
        if center.len() != vars.len() {
            return Err(SetError::DimensionMismatch {
                expected: vars.len(),
                got: center.len(),
            });
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(SetError::BadRadius(radius));
        }
        let h = ball_polynomial(vars, &center, radius);
        Ok(Self {
            vars: vars.clone(),
            inequalities: vec![h],
            shape: Shape::Ball { center, radius },
            witness: None,
            witness_radius: None,
        })
    }

    /// General set; callers that feed it to a hierarchy should attach an
    /// Archimedean witness with [`SetDescriptor::with_witness`].
    pub fn general(vars: &Arc<VarList>, inequalities: Vec<Polynomial>) -> Result<Self, SetError> {
        let inequalities = inequalities
            .into_iter()
            .map(|h| h.remap(vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            vars: vars.clone(),
            inequalities,
            shape: Shape::General,
            witness: None,
            witness_radius: None,
        })
    }

    /// Adds the ball constraint `R^2 - ||z||^2 >= 0`.
    pub fn with_witness(mut self, radius: f64) -> Result<Self, SetError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(SetError::BadRadius(radius));
        }
        let w = ball_polynomial(&self.vars, &vec![0.0; self.vars.len()], radius);
        if let Some(old) = self.witness.take() {
            self.inequalities.retain(|h| *h != old);
        }
        self.inequalities.push(w.clone());
        self.witness = Some(w);
        self.witness_radius = Some(radius);
        Ok(self)
    }

    pub fn vars(&self) -> &Arc<VarList> {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn inequalities(&self) -> &[Polynomial] {
        &self.inequalities
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn witness(&self) -> Option<&Polynomial> {
        self.witness.as_ref()
    }

    pub fn witness_radius(&self) -> Option<f64> {
        self.witness_radius
    }

    /// Box and ball sets are compact by construction; general sets need a
    /// witness.
    pub fn is_archimedean(&self) -> bool {
        !matches!(self.shape, Shape::General) || self.witness.is_some()
    }

    /// Radius of a ball centred at the origin containing the set, if known.
    pub fn bounding_radius(&self) -> Option<f64> {
        match &self.shape {
            Shape::Box { lower, upper } => Some(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            ),
            Shape::Ball { center, radius } => {
                Some(center.iter().map(|c| c * c).sum::<f64>().sqrt() + radius)
            }
            Shape::General => self.witness.as_ref().map(|w| {
                // witness = R^2 - ||z||^2
                w.coefficient(&Monomial::one(self.dim())).sqrt()
            }),
        }
    }

    pub fn add_inequality(&mut self, h: Polynomial) -> Result<(), SetError> {
        self.inequalities.push(h.remap(&self.vars)?);
        Ok(())
    }

    /// Re-expresses all inequalities over `target` (typically a product
    /// space containing these variables). Shape information is kept only when
    /// the variable lists coincide.
    pub fn lift(&self, target: &Arc<VarList>) -> Result<Vec<Polynomial>, SetError> {
        Ok(self
            .inequalities
            .iter()
            .map(|h| h.remap(target))
            .collect::<Result<Vec<_>, _>>()?)
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> Result<bool, SetError> {
        if point.len() != self.dim() {
            return Err(SetError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        for h in &self.inequalities {
            if h.eval(point)? < -tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Moments of the uniform probability measure on this set up to `maxdeg`,
    /// indexed by `basis(dim, maxdeg)`.
    pub fn uniform_moments(&self, maxdeg: usize) -> Result<Vec<f64>, SetError> {
        match &self.shape {
            Shape::Box { lower, upper } => uniform_box_moments(lower, upper, maxdeg),
            Shape::Ball { center, radius } => uniform_ball_moments(center, *radius, maxdeg),
            Shape::General => Err(SetError::NotSimple),
        }
    }

    /// Crude projection used for fallback candidates: clamp into a box or
    /// pull radially into a ball; general sets are left as is.
    pub fn project(&self, point: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (l, u))| x.clamp(*l, *u))
                .collect(),
            Shape::Ball { center, radius } => {
                let d: f64 = point
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if d <= *radius {
                    point.to_vec()
                } else {
                    point
                        .iter()
                        .zip(center)
                        .map(|(x, c)| c + (x - c) * radius / d)
                        .collect()
                }
            }
            Shape::General => point.to_vec(),
        }
    }
}

fn ball_polynomial(vars: &Arc<VarList>, center: &[f64], radius: f64) -> Polynomial {
    let mut h = Polynomial::constant(vars, radius * radius);
    for (i, c) in center.iter().enumerate() {
        let d = Polynomial::var_at(vars, i).add_constant(-c);
        h = h.sub(&d.mul(&d).expect("same variables")).expect("same variables");
    }
    h
}

/// `gamma_alpha = prod_i (u_i^{a_i+1} - l_i^{a_i+1}) / ((a_i+1)(u_i - l_i))`.
pub fn uniform_box_moments(lower: &[f64], upper: &[f64], maxdeg: usize) -> Result<Vec<f64>, SetError> {
    if lower.len() != upper.len() {
        return Err(SetError::DimensionMismatch {
            expected: lower.len(),
            got: upper.len(),
        });
    }
    if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
        return Err(SetError::DegenerateBox(i));
    }
    // per-coordinate 1-D moments
    let one_d: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            (0..=maxdeg)
                .map(|k| {
                    let k1 = (k + 1) as i32;
                    (u.powi(k1) - l.powi(k1)) / ((k + 1) as f64 * (u - l))
                })
                .collect()
        })
        .collect();
    Ok(basis(lower.len(), maxdeg)
        .iter()
        .map(|m| {
            m.exponents()
                .iter()
                .enumerate()
                .map(|(i, &e)| one_d[i][e as usize])
                .product()
        })
        .collect())
}

/// Moments of the uniform distribution on the ball `||z - c|| <= R`.
pub fn uniform_ball_moments(center: &[f64], radius: f64, maxdeg: usize) -> Result<Vec<f64>, SetError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(SetError::BadRadius(radius));
    }
    let n = center.len();
    let mons = basis(n, maxdeg);
    let centred: Vec<f64> = mons.iter().map(|m| centred_ball_moment(m.exponents(), radius)).collect();
    if center.iter().all(|&c| c == 0.0) {
        return Ok(centred);
    }
    // E[(c+z)^a] = sum_{b <= a} prod_i C(a_i, b_i) c_i^{a_i-b_i} E[z^b]
    let index: std::collections::HashMap<&[u32], usize> = mons
        .iter()
        .enumerate()
        .map(|(i, m)| (m.exponents(), i))
        .collect();
    Ok(mons
        .iter()
        .map(|m| {
            let a = m.exponents();
            let mut total = 0.0;
            for sub in &mons {
                let b = sub.exponents();
                if b.iter().zip(a).any(|(bi, ai)| bi > ai) {
                    continue;
                }
                let mut w = centred[index[b]];
                if w == 0.0 {
                    continue;
                }
                for i in 0..n {
                    w *= binomial(a[i], b[i]) * center[i].powi((a[i] - b[i]) as i32);
                }
                total += w;
            }
            total
        })
        .collect())
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `E[z^a]` for `z` uniform on the origin-centred ball of radius `R` in
/// `R^n`:
/// `R^|a| * n/(|a|+n) * prod_i G((a_i+1)/2)/G(1/2) * G(n/2)/G((|a|+n)/2)`,
/// zero when any exponent is odd.
fn centred_ball_moment(a: &[u32], radius: f64) -> f64 {
    if a.iter().any(|e| e % 2 == 1) {
        return 0.0;
    }
    let n = a.len() as f64;
    let total: u32 = a.iter().sum();
    // G(k + 1/2)/G(1/2) = prod_{j<k} (j + 1/2)
    let half_ratio: f64 = a
        .iter()
        .map(|&e| (0..e / 2).map(|j| j as f64 + 0.5).product::<f64>())
        .product();
    // G(n/2)/G(n/2 + m) = 1 / prod_{j<m} (n/2 + j)
    let rising: f64 = (0..total / 2).map(|j| n / 2.0 + j as f64).product();
    radius.powi(total as i32) * n / (total as f64 + n) * half_ratio / rising
}
