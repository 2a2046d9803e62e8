//! CSV, JSON and plot-data emission.

use std::fs;
use std::path::{Path, PathBuf};

use polypareto::pipeline::{CellReport, CellStatus, ParetoRecord, UtopiaPoint};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> EmitError {
    EmitError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// `v` with 12 significant digits, without trailing zeros.
pub fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}

pub fn csv_header(l: usize, n: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=l).map(|i| format!("lambda_{i}")).collect();
    h.push("p".into());
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=l).map(|i| format!("Fapprox_{i}")));
    h.extend((1..=l).map(|i| format!("Frobust_{i}")));
    h.push("certified".into());
    h
}

pub fn write_csv(path: &Path, records: &[ParetoRecord], l: usize, n: usize) -> Result<(), EmitError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(csv_header(l, n)).map_err(|e| write_err(path, e))?;
    for r in records {
        let mut row: Vec<String> = r.lambda.iter().map(|v| sig12(*v)).collect();
        row.push(r.p.to_string());
        row.extend(r.x_star.iter().map(|v| sig12(*v)));
        row.extend(r.approx_values.iter().map(|v| sig12(*v)));
        row.extend(r.robust_values.iter().map(|v| sig12(*v)));
        row.push(r.certified.to_string());
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    lambda: &'a [f64],
    p: String,
    x: &'a [f64],
    fapprox: &'a [f64],
    frobust: &'a [f64],
    certified: bool,
    gamma_bound: f64,
    degree_choice: usize,
}

#[derive(Serialize)]
struct JsonCell<'a> {
    lambda: &'a [f64],
    p: String,
    status: String,
    detail: Option<&'a str>,
    records: usize,
    certified: usize,
}

#[derive(Serialize)]
struct JsonOut<'a> {
    utopia: Option<&'a UtopiaPoint>,
    records: Vec<JsonRecord<'a>>,
    pareto: Vec<usize>,
    cells: Vec<JsonCell<'a>>,
}

/// Output file locations inside one directory.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub plot: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            csv: dir.join("records.csv"),
            json: dir.join("records.json"),
            plot: dir.join("front.dat"),
        }
    }
}

/// Everything a run emits.
pub struct Emission<'a> {
    pub records: &'a [ParetoRecord],
    /// Indices into `records` of certified nondominated records.
    pub pareto: &'a [usize],
    pub cells: &'a [CellReport],
    pub utopia: Option<&'a UtopiaPoint>,
    pub l: usize,
    pub n: usize,
}

pub fn emit(out: &Emission<'_>, paths: &OutputPaths) -> Result<(), EmitError> {
    if let Some(dir) = paths.csv.parent() {
        fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    }
    write_csv(&paths.csv, out.records, out.l, out.n)?;

    let json = JsonOut {
        utopia: out.utopia,
        records: out
            .records
            .iter()
            .map(|r| JsonRecord {
                lambda: &r.lambda,
                p: r.p.to_string(),
                x: &r.x_star,
                fapprox: &r.approx_values,
                frobust: &r.robust_values,
                certified: r.certified,
                gamma_bound: r.gamma_bound,
                degree_choice: r.degree_choice,
            })
            .collect(),
        pareto: out.pareto.to_vec(),
        cells: out
            .cells
            .iter()
            .map(|c| {
                let (status, detail) = match &c.status {
                    CellStatus::Solved => ("solved", None),
                    CellStatus::Skipped(d) => ("skipped", Some(d.as_str())),
                    CellStatus::Failed(d) => ("failed", Some(d.as_str())),
                };
                JsonCell {
                    lambda: &c.lambda,
                    p: c.p.to_string(),
                    status: status.into(),
                    detail,
                    records: c.records,
                    certified: c.certified,
                }
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| write_err(&paths.json, e))?;
    fs::write(&paths.json, text).map_err(|e| write_err(&paths.json, e))?;

    // (Frobust_1, Frobust_2) of the certified front; only meaningful for l = 2
    let mut plot = String::from("# Frobust_1 Frobust_2\n");
    if out.l == 2 {
        for &i in out.pareto {
            let r = &out.records[i];
            plot.push_str(&format!("{} {}\n", sig12(r.robust_values[0]), sig12(r.robust_values[1])));
        }
    }
    fs::write(&paths.plot, plot).map_err(|e| write_err(&paths.plot, e))
}
