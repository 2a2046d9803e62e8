//! Sparse multivariate polynomials over named variable blocks.
//!
//! Every polynomial carries its ambient [`VarList`]: an ordered list of
//! variable names split into named blocks (decision variables `x`, uncertain
//! parameters `u`/`v`, auxiliary variables). Monomials are ordered
//! graded-lexicographically, and that order is the single indexing scheme
//! used for moment vectors and SDP variables throughout the crate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("operands are defined over different variable lists")]
    VariableMismatch,
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown variable block `{0}`")]
    UnknownBlock(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// A contiguous, named group of variables inside a [`VarList`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub range: Range<usize>,
}

/// Ordered variable names partitioned into blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarList {
    names: Vec<String>,
    blocks: Vec<Block>,
}

impl VarList {
    /// Builds a variable list from `(block name, variable names)` pairs.
    /// Empty blocks are dropped.
    pub fn new<B, V>(blocks: impl IntoIterator<Item = (B, Vec<V>)>) -> Result<Arc<Self>, PolyError>
    where
        B: Into<String>,
        V: Into<String>,
    {
        let mut names: Vec<String> = Vec::new();
        let mut out = Vec::new();
        for (block, vars) in blocks {
            let block = block.into();
            if out.iter().any(|b: &Block| b.name == block) {
                return Err(PolyError::DuplicateVariable(block));
            }
            let start = names.len();
            for v in vars {
                let v = v.into();
                if names.contains(&v) {
                    return Err(PolyError::DuplicateVariable(v));
                }
                names.push(v);
            }
            if names.len() > start {
                out.push(Block {
                    name: block,
                    range: start..names.len(),
                });
            }
        }
        Ok(Arc::new(Self { names, blocks: out }))
    }

    /// `n` variables `x1..xn` in a single block `x`.
    pub fn standard(n: usize) -> Arc<Self> {
        Self::new([("x", (1..=n).map(|i| format!("x{i}")).collect::<Vec<_>>())])
            .expect("generated names are unique")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.range.clone())
    }

    pub fn block_of(&self, var: usize) -> Option<&str> {
        self.blocks
            .iter()
            .find(|b| b.range.contains(&var))
            .map(|b| b.name.as_str())
    }

    /// The sub-list made of the named blocks, in the order given.
    /// Blocks missing from `self` are skipped.
    pub fn select(&self, blocks: &[&str]) -> Arc<Self> {
        let parts: Vec<(String, Vec<String>)> = blocks
            .iter()
            .filter_map(|b| {
                self.block(b)
                    .map(|r| (b.to_string(), self.names[r].to_vec()))
            })
            .collect();
        Self::new(parts).expect("sub-list of a valid list")
    }

    /// Blocks of `self` followed by the blocks of `other`.
    pub fn concat(&self, other: &VarList) -> Result<Arc<Self>, PolyError> {
        let part = |l: &VarList| -> Vec<(String, Vec<String>)> {
            l.blocks
                .iter()
                .map(|b| (b.name.clone(), l.names[b.range.clone()].to_vec()))
                .collect()
        };
        Self::new(part(self).into_iter().chain(part(other)))
    }

    pub fn without(&self, block: &str) -> Arc<Self> {
        let keep: Vec<&str> = self
            .blocks
            .iter()
            .filter(|b| b.name != block)
            .map(|b| b.name.as_str())
            .collect();
        self.select(&keep)
    }
}

/// Exponent vector of a monomial over the ambient variable list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn one(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn unit(n: usize, var: usize) -> Self {
        let mut e = vec![0; n];
        e[var] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    /// Graded order; within a degree, larger leading exponents come first
    /// (`x1^2 < x1*x2 < x2^2`).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Number of monomials of degree at most `d` in `n` variables, `C(n+d, d)`.
pub fn basis_len(n: usize, d: usize) -> usize {
    let mut r: usize = 1;
    for k in 1..=d.min(n) {
        r = r * (n + d + 1 - k) / k;
    }
    r
}

/// All monomials of degree at most `d` in `n` variables, graded-lex ordered.
pub fn basis(n: usize, d: usize) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(basis_len(n, d));
    let mut scratch = vec![0u32; n];
    for k in 0..=d as u32 {
        fill_degree(&mut scratch, 0, k, &mut out);
    }
    out
}

fn fill_degree(exps: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if pos + 1 == exps.len() {
        exps[pos] = remaining;
        out.push(Monomial(exps.to_vec()));
        return;
    }
    if exps.is_empty() {
        if remaining == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    for e in (0..=remaining).rev() {
        exps[pos] = e;
        fill_degree(exps, pos + 1, remaining - e, out);
    }
    exps[pos] = 0;
}

/// Stable bijection between `basis(n, d)` and `0..C(n+d, d)`.
#[derive(Debug, Clone)]
pub struct MonomialIndex {
    n: usize,
    degree: usize,
    monomials: Vec<Monomial>,
    lookup: HashMap<Monomial, usize>,
}

impl MonomialIndex {
    pub fn new(n: usize, degree: usize) -> Self {
        let monomials = basis(n, degree);
        let lookup = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Self {
            n,
            degree,
            monomials,
            lookup,
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn get(&self, m: &Monomial) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    pub fn monomial(&self, i: usize) -> &Monomial {
        &self.monomials[i]
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    /// Number of leading entries with degree at most `d`.
    pub fn prefix_len(&self, d: usize) -> usize {
        basis_len(self.n, d.min(self.degree))
    }
}

/// Sparse real polynomial. Stored coefficients are never exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    vars: Arc<VarList>,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(vars: &Arc<VarList>) -> Self {
        Self {
            vars: vars.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &Arc<VarList>, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Monomial::one(vars.len()), c);
        p
    }

    pub fn var(vars: &Arc<VarList>, name: &str) -> Result<Self, PolyError> {
        let i = vars
            .index_of(name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        Ok(Self::var_at(vars, i))
    }

    pub fn var_at(vars: &Arc<VarList>, i: usize) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Monomial::unit(vars.len(), i), 1.0);
        p
    }

    /// Sums the given terms; repeated monomials accumulate.
    pub fn from_terms(
        vars: &Arc<VarList>,
        terms: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self, PolyError> {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            if e.len() != vars.len() {
                return Err(PolyError::DimensionMismatch {
                    expected: vars.len(),
                    got: e.len(),
                });
            }
            p.add_term(Monomial(e), c);
        }
        Ok(p)
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn vars(&self) -> &Arc<VarList> {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree() as usize).max().unwrap_or(0)
    }

    /// Degree in the variables of one block (0 if the block is absent).
    pub fn degree_in(&self, block: &str) -> usize {
        let Some(r) = self.vars.block(block) else {
            return 0;
        };
        self.terms
            .keys()
            .map(|m| m.0[r.clone()].iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars() {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars(),
                got: point.len(),
            });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(point)).sum())
    }

    fn check_vars(&self, other: &Polynomial) -> Result<(), PolyError> {
        if Arc::ptr_eq(&self.vars, &other.vars) || self.vars == other.vars {
            Ok(())
        } else {
            Err(PolyError::VariableMismatch)
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(-1.0)
    }

    pub fn add_constant(&self, c: f64) -> Polynomial {
        let mut out = self.clone();
        out.add_term(Monomial::one(self.nvars()), c);
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_vars(other)?;
        let mut out = Polynomial::zero(&self.vars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    /// `self^k` by repeated squaring; `k = 0` gives the constant 1.
    pub fn pow(&self, k: u32) -> Polynomial {
        let mut result = Polynomial::constant(&self.vars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base).expect("same variables");
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base).expect("same variables");
            }
        }
        result
    }

    /// Fixes the variables of `block` to `values`, returning a polynomial over
    /// the remaining blocks.
    pub fn substitute_block(&self, block: &str, values: &[f64]) -> Result<Polynomial, PolyError> {
        let range = self
            .vars
            .block(block)
            .ok_or_else(|| PolyError::UnknownBlock(block.to_string()))?;
        if values.len() != range.len() {
            return Err(PolyError::DimensionMismatch {
                expected: range.len(),
                got: values.len(),
            });
        }
        let vars = self.vars.without(block);
        let mut out = Polynomial::zero(&vars);
        for (m, c) in &self.terms {
            let mut factor = *c;
            for (k, &e) in m.0[range.clone()].iter().enumerate() {
                if e > 0 {
                    factor *= values[k].powi(e as i32);
                }
            }
            let rest: Vec<u32> = m
                .0
                .iter()
                .enumerate()
                .filter(|(i, _)| !range.contains(i))
                .map(|(_, e)| *e)
                .collect();
            out.add_term(Monomial(rest), factor);
        }
        Ok(out)
    }

    /// Re-expresses the polynomial over another variable list, matching
    /// variables by name. Fails if a variable that actually occurs is absent
    /// from `target`.
    pub fn remap(&self, target: &Arc<VarList>) -> Result<Polynomial, PolyError> {
        if Arc::ptr_eq(&self.vars, target) || *self.vars == **target {
            let mut p = self.clone();
            p.vars = target.clone();
            return Ok(p);
        }
        let mut map = Vec::with_capacity(self.nvars());
        for (i, name) in self.vars.names().iter().enumerate() {
            let j = target.index_of(name);
            if j.is_none() && self.terms.keys().any(|m| m.0[i] > 0) {
                return Err(PolyError::UnknownVariable(name.clone()));
            }
            map.push(j);
        }
        let mut out = Polynomial::zero(target);
        for (m, c) in &self.terms {
            let mut e = vec![0u32; target.len()];
            for (i, &ei) in m.0.iter().enumerate() {
                if let Some(j) = map[i] {
                    e[j] += ei;
                }
            }
            out.add_term(Monomial(e), *c);
        }
        Ok(out)
    }

    /// Parses the textual syntax `2.5*x1^2*u1 - x2 + (x1 + 1)^2`.
    pub fn parse(vars: &Arc<VarList>, text: &str) -> Result<Polynomial, PolyError> {
        let mut parser = Parser::new(vars, text)?;
        let p = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(PolyError::Parse {
                column: tok.column,
                message: format!("unexpected `{}`", tok.text()),
            });
        }
        Ok(p)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (k, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                (_, s) => write!(f, " {s} ")?,
            }
            let factors: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, e)| **e > 0)
                .map(|(i, &e)| {
                    let name = &self.vars.names()[i];
                    if e == 1 {
                        name.clone()
                    } else {
                        format!("{name}^{e}")
                    }
                })
                .collect();
            if factors.is_empty() {
                write!(f, "{mag:?}")?;
            } else if mag == 1.0 {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag:?}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    column: usize,
    raw: String,
}

impl Token {
    fn text(&self) -> &str {
        &self.raw
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, PolyError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let raw: String = chars[start..i].iter().collect();
            let v: f64 = raw.parse().map_err(|_| PolyError::Parse {
                column,
                message: format!("malformed number `{raw}`"),
            })?;
            out.push(Token {
                kind: TokKind::Num(v),
                column,
                raw,
            });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            out.push(Token {
                kind: TokKind::Ident(raw.clone()),
                column,
                raw,
            });
        } else if "+-*^()".contains(c) {
            out.push(Token {
                kind: TokKind::Sym(c),
                column,
                raw: c.to_string(),
            });
            i += 1;
        } else {
            return Err(PolyError::Parse {
                column,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    vars: &'a Arc<VarList>,
    tokens: Vec<Token>,
    pos: usize,
    end_column: usize,
}

impl<'a> Parser<'a> {
    fn new(vars: &'a Arc<VarList>, text: &str) -> Result<Self, PolyError> {
        Ok(Self {
            vars,
            tokens: tokenize(text)?,
            pos: 0,
            end_column: text.chars().count() + 1,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_sym(&self) -> Option<char> {
        match self.peek().map(|t| &t.kind) {
            Some(TokKind::Sym(c)) => Some(*c),
            _ => None,
        }
    }

    fn error_here(&self, message: impl Into<String>) -> PolyError {
        PolyError::Parse {
            column: self.peek().map_or(self.end_column, |t| t.column),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == '+' { acc.add(&rhs)? } else { acc.sub(&rhs)? };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while self.peek_sym() == Some('*') {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = acc.mul(&rhs)?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek_sym() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.peek_sym() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokKind::Num(v)) if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 => {
                let tok = self.peek().expect("peeked");
                if tok.raw.contains(['.', 'e', 'E']) {
                    return Err(self.error_here("exponent must be a nonnegative integer"));
                }
                self.pos += 1;
                Ok(base.pow(v as u32))
            }
            _ => Err(self.error_here("exponent must be a nonnegative integer")),
        }
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("unexpected end of expression"));
        };
        match tok.kind {
            TokKind::Num(v) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.vars, v))
            }
            TokKind::Ident(name) => {
                let Some(i) = self.vars.index_of(&name) else {
                    return Err(PolyError::Parse {
                        column: tok.column,
                        message: format!("undeclared variable `{name}`"),
                    });
                };
                self.pos += 1;
                Ok(Polynomial::var_at(self.vars, i))
            }
            TokKind::Sym('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek_sym() != Some(')') {
                    return Err(self.error_here("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            TokKind::Sym(c) => Err(PolyError::Parse {
                column: tok.column,
                message: format!("unexpected `{c}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex1_vars() -> Arc<VarList> {
        VarList::new([
            ("x", vec!["x1", "x2"]),
            ("u", vec!["u1"]),
        ])
        .unwrap()
    }

    #[test]
    fn basis_orders_graded_lex() {
        let b = basis(2, 2);
        let e: Vec<Vec<u32>> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(
            e,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        let e: Vec<u32> = basis(1, 3).iter().map(|m| m.exponents()[0]).collect();
        assert_eq!(e, vec![0, 1, 2, 3]);
        assert_eq!(basis(3, 2).len(), 10);
        assert_eq!(basis_len(3, 2), 10);
        assert_eq!(basis_len(2, 16), 153);
        assert_eq!(basis_len(4, 6), 210);
    }

    #[test]
    fn basis_is_sorted_and_indexable() {
        let idx = MonomialIndex::new(3, 4);
        for w in idx.monomials().windows(2) {
            assert!(w[0] < w[1]);
        }
        for (i, m) in idx.monomials().iter().enumerate() {
            assert_eq!(idx.get(m), Some(i));
        }
        assert_eq!(idx.prefix_len(2), 10);
    }

    #[test]
    fn eval_examples() {
        let v = ex1_vars();
        let f1 = Polynomial::parse(&v, "x1^2*u1^2 + x2^2*u1").unwrap();
        assert_eq!(f1.eval(&[1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(Polynomial::zero(&v).eval(&[3.0, -1.0, 2.0]).unwrap(), 0.0);
        let p = Polynomial::parse(&v, "(x1+x2)^2").unwrap();
        assert_eq!(p.eval(&[1.0, 2.0, 0.0]).unwrap(), 9.0);
        assert!(matches!(
            p.eval(&[1.0]),
            Err(PolyError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn arithmetic_examples() {
        let v = VarList::standard(2);
        let s = Polynomial::parse(&v, "x1 + x2").unwrap();
        let sq = s.pow(2);
        let expect = Polynomial::parse(&v, "x1^2 + 2*x1*x2 + x2^2").unwrap();
        assert_eq!(sq, expect);
        assert_eq!(sq.mul(&s).unwrap(), s.pow(3));
        assert!(s.add(&s.scale(-1.0)).unwrap().is_zero());
        assert_eq!(s.pow(0), Polynomial::constant(&v, 1.0));
        let other = Polynomial::constant(&VarList::standard(3), 1.0);
        assert_eq!(s.add(&other), Err(PolyError::VariableMismatch));
    }

    #[test]
    fn substitution_examples() {
        let v = ex1_vars();
        let f2 = Polynomial::parse(&v, "-x1^4 - 2*x1^2*x2^2 - x2^4 + x1^2 - u1^2").unwrap();
        let at0 = f2.substitute_block("u", &[0.0]).unwrap();
        let xv = VarList::standard(2);
        assert_eq!(
            at0,
            Polynomial::parse(&xv, "-x1^4 - 2*x1^2*x2^2 - x2^4 + x1^2").unwrap()
        );
        let f1 = Polynomial::parse(&v, "x1^2*u1^2 + x2^2*u1").unwrap();
        let at_origin = f1.substitute_block("x", &[0.0, 0.0]).unwrap();
        assert!(at_origin.is_zero());
        assert_eq!(at_origin.vars().names(), &["u1".to_string()]);

        let gv = VarList::new([("x", vec!["x1", "x2"]), ("v", vec!["v1", "v2"])]).unwrap();
        let g = Polynomial::parse(&gv, "-x1^2*v2^2 - x2^2*v1^2 + 1").unwrap();
        let gx = g.substitute_block("x", &[1.0, 0.0]).unwrap();
        let vv = gv.select(&["v"]);
        assert_eq!(gx, Polynomial::parse(&vv, "-v2^2 + 1").unwrap());
        assert_eq!(
            g.substitute_block("u", &[0.0]),
            Err(PolyError::UnknownBlock("u".into()))
        );
        assert!(matches!(
            g.substitute_block("v", &[0.0]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parse_rejects_bad_input() {
        let v = VarList::standard(2);
        let err = Polynomial::parse(&v, "x1^-1").unwrap_err();
        assert!(matches!(err, PolyError::Parse { column: 4, .. }), "{err:?}");
        assert!(matches!(
            Polynomial::parse(&v, "x1 + y"),
            Err(PolyError::Parse { column: 6, .. })
        ));
        assert!(Polynomial::parse(&v, "x1^2.5").is_err());
        assert!(Polynomial::parse(&v, "(x1 + 1").is_err());
        assert!(Polynomial::parse(&v, "x1 x2").is_err());
        assert!(Polynomial::parse(&v, "").is_err());
    }

    #[test]
    fn display_round_trips() {
        let v = ex1_vars();
        for text in [
            "-x1^4 - 2*x1^2*x2^2 - x2^4 + x1^2 - u1^2",
            "0.1*x1 - 1e-20*u1 + 3",
            "0",
            "-1",
        ] {
            let p = Polynomial::parse(&v, text).unwrap();
            let back = Polynomial::parse(&v, &p.to_string()).unwrap();
            assert_eq!(p, back, "{text} -> {p}");
        }
    }

    #[test]
    fn remap_moves_between_lists() {
        let v = ex1_vars();
        let p = Polynomial::parse(&v, "x1*u1 + x2").unwrap();
        let wide = VarList::new([
            ("x", vec!["x1", "x2"]),
            ("u", vec!["u1"]),
            ("v", vec!["v1"]),
        ])
        .unwrap();
        let q = p.remap(&wide).unwrap();
        assert_eq!(q.eval(&[2.0, 3.0, 5.0, 7.0]).unwrap(), 13.0);
        assert_eq!(q.remap(&v).unwrap(), p);
        assert!(p.remap(&VarList::standard(2)).is_err());
    }

    fn arb_poly(vars: Arc<VarList>) -> impl Strategy<Value = Polynomial> {
        let n = vars.len();
        prop::collection::vec(
            (prop::collection::vec(0u32..3, n), -1e3f64..1e3),
            0..6,
        )
        .prop_map(move |terms| Polynomial::from_terms(&vars, terms).unwrap())
    }

    proptest! {
        #[test]
        fn eval_is_a_ring_homomorphism(
            (p, q, z) in (arb_poly(VarList::standard(3)), arb_poly(VarList::standard(3)),
                          prop::collection::vec(-1.5f64..1.5, 3))
        ) {
            let (pz, qz) = (p.eval(&z).unwrap(), q.eval(&z).unwrap());
            let sum = p.add(&q).unwrap().eval(&z).unwrap();
            let prod = p.mul(&q).unwrap().eval(&z).unwrap();
            let scale = 1.0 + pz.abs() + qz.abs();
            prop_assert!((sum - (pz + qz)).abs() <= 1e-12 * scale * 10.0);
            prop_assert!((prod - pz * qz).abs() <= 1e-12 * scale * scale * 10.0);
        }

        #[test]
        fn substitution_commutes_with_eval(
            (p, z) in (arb_poly(VarList::new([("x", vec!["a", "b"]), ("u", vec!["c"])]).unwrap()),
                       prop::collection::vec(-2.0f64..2.0, 3))
        ) {
            let reduced = p.substitute_block("u", &z[2..]).unwrap();
            let a = reduced.eval(&z[..2]).unwrap();
            let b = p.eval(&z).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
