//! Run configuration and parsing of the compact flag syntaxes.

use std::path::PathBuf;

use polypareto::pipeline::{
    default_lambda_grid, lambda_range, DegreeChoice, EpsSpec, OrderSpec, PValue, ProblemSpec, SweepConfig,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Approximation degree choices; empty means the natural degrees.
    pub degrees: Vec<DegreeChoice>,
    pub orders: OrderSpec,
    /// `(a, b, step)` for the weight grid; `None` uses the default grid.
    pub lambda_grid: Option<(f64, f64, f64)>,
    pub p_list: Vec<PValue>,
    pub eps: EpsSpec,
    pub seed: u64,
    /// Interior-point stopping tolerance.
    pub tol: f64,
    /// Dominance tolerance of the final filter.
    pub dominance_tol: f64,
    pub out: PathBuf,
    pub export_sdpa: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            degrees: Vec::new(),
            orders: OrderSpec::default(),
            lambda_grid: None,
            p_list: (1..=4).map(PValue::Finite).collect(),
            eps: EpsSpec::default(),
            seed: 0x5eed,
            tol: 1e-8,
            dominance_tol: 1e-6,
            out: PathBuf::from("out"),
            export_sdpa: None,
        }
    }
}

impl RunConfig {
    /// Checks the configuration against the problem and builds the sweep
    /// settings.
    pub fn sweep_config(&self, spec: &ProblemSpec) -> Result<SweepConfig, ConfigError> {
        let mut cfg = SweepConfig::defaults(spec);
        let l = spec.num_objectives();
        let m = spec.num_constraints();
        if !self.degrees.is_empty() {
            for d in &self.degrees {
                if d.objectives.len() != l || d.constraints.len() != m {
                    return Err(err(format!(
                        "degrees need {l} objective and {m} constraint entries, got {} and {}",
                        d.objectives.len(),
                        d.constraints.len()
                    )));
                }
                if d.objectives.iter().chain(&d.constraints).any(|&k| k == 0) {
                    return Err(err("approximation degrees must be >= 1"));
                }
            }
            cfg.degrees = self.degrees.clone();
        }
        if let OrderSpec::PerFunction(v) = &self.orders {
            if v.len() != l + m {
                return Err(err(format!("orders need {} entries, got {}", l + m, v.len())));
            }
        }
        cfg.orders = self.orders.clone();
        cfg.lambdas = match self.lambda_grid {
            Some((a, b, s)) => lambda_range(a, b, s, l).map_err(|e| err(e.to_string()))?,
            None => default_lambda_grid(l),
        };
        if cfg.lambdas.is_empty() {
            return Err(err("weight grid is empty"));
        }
        if self.p_list.is_empty() {
            return Err(err("p list is empty"));
        }
        cfg.p_list = self.p_list.clone();
        cfg.eps = self.eps.clone();
        if !(self.tol > 0.0) {
            return Err(err("tolerance must be positive"));
        }
        cfg.jm.sdp.tol = self.tol;
        cfg.hierarchy.sdp.tol = self.tol;
        cfg.hierarchy.extraction.seed = self.seed;
        Ok(cfg)
    }
}

/// `"2,4;2"`: objective degrees, then constraint degrees after `;`.
pub fn parse_degrees(s: &str) -> Result<DegreeChoice, ConfigError> {
    let (a, b) = s.split_once(';').unwrap_or((s, ""));
    let list = |t: &str| -> Result<Vec<usize>, ConfigError> {
        t.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse::<usize>().map_err(|_| err(format!("invalid degree `{x}`"))))
            .collect()
    };
    Ok(DegreeChoice {
        objectives: list(a)?,
        constraints: list(b)?,
    })
}

/// `auto`, `auto+2`, a single order or a comma list (objectives first).
pub fn parse_orders(s: &str) -> Result<OrderSpec, ConfigError> {
    let s = s.trim();
    if s == "auto" {
        return Ok(OrderSpec::default());
    }
    if let Some(k) = s.strip_prefix("auto+") {
        let slack = k.parse().map_err(|_| err(format!("invalid order slack `{k}`")))?;
        return Ok(OrderSpec::Auto { slack });
    }
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| err(format!("invalid order `{x}`"))))
        .collect::<Result<_, _>>()?;
    Ok(match v.as_slice() {
        [one] => OrderSpec::Uniform(*one),
        _ => OrderSpec::PerFunction(v),
    })
}

/// `a:b:step`.
pub fn parse_lambda_grid(s: &str) -> Result<(f64, f64, f64), ConfigError> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse().map_err(|_| err(format!("invalid grid value `{x}`"))))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b, step] => Ok((*a, *b, *step)),
        _ => Err(err("weight grid must be a:b:step")),
    }
}

pub fn parse_p_list(s: &str) -> Result<Vec<PValue>, ConfigError> {
    s.split(',')
        .map(|x| x.parse::<PValue>().map_err(|e| err(e.to_string())))
        .collect()
}

/// A single margin, a comma list (one per objective) or `rel:<r>`.
pub fn parse_eps(s: &str) -> Result<EpsSpec, ConfigError> {
    if let Some(r) = s.strip_prefix("rel:") {
        let r: f64 = r.parse().map_err(|_| err(format!("invalid relative margin `{r}`")))?;
        if !(r > 0.0) {
            return Err(err("relative margin must be positive"));
        }
        return Ok(EpsSpec::Relative(r));
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| err(format!("invalid margin `{x}`"))))
        .collect::<Result<_, _>>()?;
    if v.iter().any(|e| !(*e > 0.0)) {
        return Err(err("margins must be positive"));
    }
    Ok(EpsSpec::Absolute(v))
}
