//! Line-oriented problem files.
//!
//! ```text
//! [variables]
//! x = x1, x2
//! u = u
//!
//! [sets]
//! x = ball center 0, 0 radius sqrt(2)
//! u = box lower 0 upper 1
//!
//! [objectives]
//! f1 = x1^2*u^2 + x2^2*u
//!
//! [constraints]
//! g1 = 1 - x1^2 - x2^2
//! ```
//!
//! Blocks are `x` (decision, required), `u` (objective uncertainty) and `v`
//! (constraint uncertainty). Constraints read `g >= 0`. Sets are
//! `box lower .. upper ..`, `ball center .. radius r` or
//! `general h1; h2; ... witness R`, where the witness adds `R^2 - |z|^2 >= 0`.
//! Numbers accept `sqrt(a)`. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use polypareto::pipeline::{PipelineError, ProblemSpec};
use polypareto::poly::{PolyError, Polynomial, VarList};
use polypareto::semialg::{SetDescriptor, SetError, Shape};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// A parsed problem with the user's objective and constraint names.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub spec: ProblemSpec,
    pub objective_names: Vec<String>,
    pub constraint_names: Vec<String>,
}

const SECTIONS: [&str; 4] = ["variables", "sets", "objectives", "constraints"];
const BLOCKS: [&str; 3] = ["x", "u", "v"];

struct Entry {
    line: usize,
    key: String,
    /// 1-based column where the value starts.
    value_col: usize,
    value: String,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ProblemError {
    ProblemError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_problem(path: &Path) -> Result<ProblemFile, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_str(&text)
}

pub fn parse_problem_str(text: &str) -> Result<ProblemFile, ProblemError> {
    let mut sections: Vec<Vec<Entry>> = (0..SECTIONS.len()).map(|_| Vec::new()).collect();
    let mut seen = [false; 4];
    let mut current: Option<usize> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(line, indent + 1, "unterminated section header"))?
                .trim();
            let idx = SECTIONS
                .iter()
                .position(|s| *s == name)
                .ok_or_else(|| syntax(line, indent + 2, format!("unknown section `{name}`")))?;
            if seen[idx] {
                return Err(syntax(line, indent + 1, format!("duplicate section `{name}`")));
            }
            seen[idx] = true;
            current = Some(idx);
            continue;
        }
        let sec = current.ok_or_else(|| syntax(line, indent + 1, "entry outside of a section"))?;
        let eq = content
            .find('=')
            .ok_or_else(|| syntax(line, indent + 1, "expected `name = value`"))?;
        let key = content[..eq].trim().to_string();
        if key.is_empty() || !key.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(syntax(line, indent + 1, format!("invalid name `{key}`")));
        }
        let after = &content[eq + 1..];
        let value_col = eq + 2 + (after.len() - after.trim_start().len());
        let value = after.trim().to_string();
        if value.is_empty() {
            return Err(syntax(line, eq + 2, "missing value"));
        }
        if sections[sec].iter().any(|e| e.key == key) {
            return Err(syntax(line, indent + 1, format!("duplicate key `{key}`")));
        }
        sections[sec].push(Entry {
            line,
            key,
            value_col,
            value,
        });
    }

    let [vars_sec, sets_sec, obj_sec, con_sec] = [0, 1, 2, 3].map(|i| std::mem::take(&mut sections[i]));
    let mut blocks: Vec<(String, Arc<VarList>)> = Vec::new();
    let mut all_names: Vec<String> = Vec::new();
    for e in &vars_sec {
        if !BLOCKS.contains(&e.key.as_str()) {
            return Err(syntax(e.line, 1, format!("unknown key `{}` (expected x, u or v)", e.key)));
        }
        let mut names = Vec::new();
        let mut col = e.value_col;
        for part in e.value.split(',') {
            let name = part.trim();
            if name.is_empty() || !name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') {
                return Err(syntax(e.line, col, format!("invalid variable name `{name}`")));
            }
            if !name.chars().all(|c| c.is_alphanumeric() || c == '_') || name == "sqrt" {
                return Err(syntax(e.line, col, format!("invalid variable name `{name}`")));
            }
            if all_names.iter().any(|n| n == name) {
                return Err(syntax(e.line, col, format!("duplicate variable `{name}`")));
            }
            all_names.push(name.to_string());
            names.push(name.to_string());
            col += part.len() + 1;
        }
        let vl = VarList::new([(e.key.as_str(), names)]).map_err(|err| syntax(e.line, e.value_col, err.to_string()))?;
        blocks.push((e.key.clone(), vl));
    }
    let block = |name: &str| blocks.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
    let x_vars = block("x").ok_or_else(|| ProblemError::Invalid("missing decision block `x` in [variables]".into()))?;

    let mut sets: Vec<(String, SetDescriptor)> = Vec::new();
    for e in &sets_sec {
        let vars = block(&e.key)
            .ok_or_else(|| syntax(e.line, 1, format!("set for undeclared block `{}`", e.key)))?;
        sets.push((e.key.clone(), parse_set(e, &vars)?));
    }
    let set = |name: &str| sets.iter().find(|(k, _)| k == name).map(|(_, s)| s.clone());
    for (k, _) in &blocks {
        if set(k).is_none() {
            return Err(ProblemError::Invalid(format!(
                "block `{k}` has no set; every block needs a box, ball or general set with a witness"
            )));
        }
    }
    let x_set = set("x").expect("checked above");
    let u_set = set("u");
    let v_set = set("v");

    let joint = |other: Option<&SetDescriptor>| -> Result<Arc<VarList>, ProblemError> {
        match other {
            Some(s) => x_vars.concat(s.vars()).map_err(|e| ProblemError::Invalid(e.to_string())),
            None => Ok(x_vars.clone()),
        }
    };
    let xu = joint(u_set.as_ref())?;
    let xv = joint(v_set.as_ref())?;
    let parse_list = |entries: &[Entry], vars: &Arc<VarList>| -> Result<(Vec<String>, Vec<Polynomial>), ProblemError> {
        let mut names = Vec::new();
        let mut polys = Vec::new();
        for e in entries {
            polys.push(parse_poly(vars, &e.value, e.line, e.value_col)?);
            names.push(e.key.clone());
        }
        Ok((names, polys))
    };
    let (objective_names, objectives) = parse_list(&obj_sec, &xu)?;
    let (constraint_names, constraints) = parse_list(&con_sec, &xv)?;
    let spec = ProblemSpec::new(x_set, u_set, v_set, objectives, constraints).map_err(|e| match e {
        PipelineError::NoObjectives => ProblemError::Invalid("[objectives] must list at least one objective".into()),
        e => ProblemError::Invalid(e.to_string()),
    })?;
    Ok(ProblemFile {
        spec,
        objective_names,
        constraint_names,
    })
}

fn parse_poly(vars: &Arc<VarList>, text: &str, line: usize, col: usize) -> Result<Polynomial, ProblemError> {
    Polynomial::parse(vars, text).map_err(|e| match e {
        PolyError::Parse { column, message } => syntax(line, col + column - 1, message),
        e => syntax(line, col, e.to_string()),
    })
}

/// Whitespace-separated words with their 1-based columns; commas separate
/// list items and are dropped.
fn words(value: &str, col: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in value.char_indices() {
        let sep = c.is_whitespace() || c == ',';
        match (sep, start) {
            (true, Some(s)) => {
                out.push((col + s, &value[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((col + s, &value[s..]));
    }
    out
}

fn parse_number(word: &str, line: usize, col: usize) -> Result<f64, ProblemError> {
    let (neg, body) = match word.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, word),
    };
    let v = if let Some(inner) = body.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
        let a: f64 = inner
            .trim()
            .parse()
            .map_err(|_| syntax(line, col, format!("malformed number `{word}`")))?;
        if a < 0.0 {
            return Err(syntax(line, col, "sqrt of a negative number"));
        }
        a.sqrt()
    } else {
        body.parse::<f64>()
            .map_err(|_| syntax(line, col, format!("malformed number `{word}`")))?
    };
    if !v.is_finite() {
        return Err(syntax(line, col, format!("non-finite number `{word}`")));
    }
    Ok(if neg { -v } else { v })
}

fn set_error(e: &Entry, err: SetError) -> ProblemError {
    syntax(e.line, e.value_col, err.to_string())
}

fn parse_set(e: &Entry, vars: &Arc<VarList>) -> Result<SetDescriptor, ProblemError> {
    let value = e.value.as_str();
    let kind = value.split_whitespace().next().unwrap_or("");
    let rest_off = kind.len();
    let rest = &value[rest_off..];
    let rest_col = e.value_col + rest_off;
    match kind {
        "box" | "ball" => {
            let ws = words(rest, rest_col);
            let (k1, k2) = if kind == "box" { ("lower", "upper") } else { ("center", "radius") };
            let p1 = ws.iter().position(|(_, w)| *w == k1);
            let p2 = ws.iter().position(|(_, w)| *w == k2);
            let (Some(0), Some(p2)) = (p1, p2) else {
                return Err(syntax(e.line, rest_col, format!("expected `{kind} {k1} ... {k2} ...`")));
            };
            for (c, w) in &ws {
                if w.chars().next().is_some_and(|ch| ch.is_alphabetic() && ch != 's')
                    && *w != k1
                    && *w != k2
                {
                    return Err(syntax(e.line, *c, format!("unknown key `{w}`")));
                }
            }
            let nums = |r: &[(usize, &str)]| -> Result<Vec<f64>, ProblemError> {
                r.iter().map(|(c, w)| parse_number(w, e.line, *c)).collect()
            };
            let a = nums(&ws[1..p2])?;
            let b = nums(&ws[p2 + 1..])?;
            if kind == "box" {
                let degenerate = a.iter().zip(&b).any(|(l, u)| l == u);
                let s = if degenerate {
                    SetDescriptor::box_allowing_degenerate(vars, a, b)
                } else {
                    SetDescriptor::new_box(vars, a, b)
                };
                s.map_err(|err| set_error(e, err))
            } else {
                if b.len() != 1 {
                    return Err(syntax(e.line, rest_col, "ball needs exactly one radius"));
                }
                SetDescriptor::new_ball(vars, a, b[0]).map_err(|err| set_error(e, err))
            }
        }
        "general" => {
            let Some(wpos) = rest.rfind("witness") else {
                return Err(ProblemError::Invalid(format!(
                    "line {}: general set for `{}` is not known to be compact; add `witness R`",
                    e.line, e.key
                )));
            };
            let wcol = rest_col + wpos + "witness".len();
            let radius = parse_number(rest[wpos + "witness".len()..].trim(), e.line, wcol)?;
            let mut polys = Vec::new();
            let mut off = 0;
            for part in rest[..wpos].split(';') {
                if !part.trim().is_empty() {
                    polys.push(parse_poly(vars, part, e.line, rest_col + off)?);
                }
                off += part.len() + 1;
            }
            SetDescriptor::general(vars, polys)
                .and_then(|s| s.with_witness(radius))
                .map_err(|err| set_error(e, err))
        }
        other => Err(syntax(
            e.line,
            e.value_col,
            format!("unknown set kind `{other}` (expected box, ball or general)"),
        )),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn write_set(out: &mut String, key: &str, s: &SetDescriptor) {
    match s.shape() {
        Shape::Box { lower, upper } => {
            let _ = writeln!(out, "{key} = box lower {} upper {}", join(lower), join(upper));
        }
        Shape::Ball { center, radius } => {
            let _ = writeln!(out, "{key} = ball center {} radius {radius:?}", join(center));
        }
        Shape::General => {
            let hs: Vec<String> = s
                .inequalities()
                .iter()
                .filter(|h| Some(*h) != s.witness())
                .map(|h| h.to_string())
                .collect();
            let r = s.witness_radius().unwrap_or(0.0);
            let _ = writeln!(out, "{key} = general {} witness {r:?}", hs.join("; "));
        }
    }
}

/// Inverse of [`parse_problem_str`] up to comments and formatting.
pub fn serialize_problem(p: &ProblemFile) -> String {
    let spec = &p.spec;
    let mut out = String::from("[variables]\n");
    let mut sets = vec![("x", spec.x_set())];
    sets.extend(spec.u_set().map(|s| ("u", s)));
    sets.extend(spec.v_set().map(|s| ("v", s)));
    for (k, s) in &sets {
        let _ = writeln!(out, "{k} = {}", s.vars().names().join(", "));
    }
    out.push_str("\n[sets]\n");
    for (k, s) in &sets {
        write_set(&mut out, k, s);
    }
    out.push_str("\n[objectives]\n");
    for (n, f) in p.objective_names.iter().zip(spec.objectives()) {
        let _ = writeln!(out, "{n} = {f}");
    }
    out.push_str("\n[constraints]\n");
    for (n, g) in p.constraint_names.iter().zip(spec.constraints()) {
        let _ = writeln!(out, "{n} = {g}");
    }
    out
}
