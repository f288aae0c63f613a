//! Dataset ingestion and result serialization.
//!
//! Floats are written with 17 significant digits so that values read back
//! are bit-identical. JSON objects built from structs keep field order;
//! free-form maps are `BTreeMap`s, so key order is stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::ordered_subsets;
use crate::dense::{norm1, norm2};
use crate::error::{PchaError, Result};
use crate::experiments::{Record, SlopeRecord, ZERO_THRESHOLD};
use crate::pc::PCWorkingModel;
use crate::solver::FittedEstimator;

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            PchaError::Config(format!(
                "column '{name}' not found (available: {})",
                self.header.join(", ")
            ))
        })
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Rows restricted to every column except `skip`, in header order.
    pub fn rows_without(&self, skip: &[usize]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(j, _)| !skip.contains(j))
                    .map(|(_, v)| *v)
                    .collect()
            })
            .collect()
    }

    pub fn names_without(&self, skip: &[usize]) -> Vec<String> {
        self.header
            .iter()
            .enumerate()
            .filter(|(j, _)| !skip.contains(j))
            .map(|(_, h)| h.clone())
            .collect()
    }
}

/// Parses comma-separated numeric data with a header row.
pub fn parse_table(reader: impl std::io::Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| PchaError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(PchaError::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            PchaError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| PchaError::Parse {
                        line,
                        message: format!("column '{}': '{cell}' is not a finite number", header[j]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PchaError::EmptyInput("no data rows"));
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table(std::fs::File::open(path)?)
}

/// One-column CSV `prediction`.
pub fn predictions_csv(values: &[f64]) -> String {
    let mut out = String::from("prediction\n");
    for v in values {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

pub fn records_csv(records: &[Record]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["study", "mode", "d", "n", "replicate", "metric", "value"])?;
    for r in records {
        w.write_record([
            &r.study,
            &r.mode,
            &r.d.to_string(),
            &r.n.to_string(),
            &r.replicate.to_string(),
            &r.metric,
            &fmt_f64(r.value),
        ])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| PchaError::Io(e.into_error()))?)
        .map_err(|e| PchaError::InvalidValue(e.to_string()))
}

/// Basis label `knot:l subset:1+3` plus coefficient for every `β_j`.
pub fn beta_csv(model: &PCWorkingModel, alpha: &[f64]) -> Result<String> {
    let spec = model.spec();
    let n_basis = spec.n_basis();
    if n_basis > spec.oracle_cap() as u128 {
        return Err(PchaError::OracleCapExceeded {
            n_basis,
            cap: spec.oracle_cap(),
        });
    }
    let subsets = ordered_subsets(spec.d(), spec.max_degree());
    let (beta, _) = model.beta_with_stats(alpha);
    let mut out = String::from("index,knot,subset,beta\n");
    for (j, b) in beta.iter().enumerate() {
        let (l, s) = (j / subsets.len(), subsets[j % subsets.len()]);
        let coords: Vec<String> = (0..spec.d())
            .filter(|k| s >> k & 1 == 1)
            .map(|k| (k + 1).to_string())
            .collect();
        let _ = writeln!(out, "{j},{l},{},{}", coords.join("+"), fmt_f64(*b));
    }
    Ok(out)
}

/// Model summary written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mode: String,
    pub covariates: Vec<String>,
    pub response: String,
    pub n: usize,
    pub rank: usize,
    pub selected_regularization: f64,
    /// `C = ‖β‖₁` for HAGL.
    pub constraint: Option<f64>,
    pub alpha_l1: f64,
    pub alpha_l2: f64,
    pub beta_l1: f64,
    pub j_n: usize,
    pub intercept: f64,
    pub training_risk: f64,
    pub constraint_residual: Option<f64>,
    pub converged: bool,
    pub cv_grid: Vec<f64>,
    pub cv_risk: Vec<Option<f64>>,
    pub ate: Option<BTreeMap<String, f64>>,
    pub warning: Option<String>,
}

impl FitSummary {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &PCWorkingModel,
        fit: &FittedEstimator,
        selected: f64,
        covariates: Vec<String>,
        response: String,
        cv_grid: Vec<f64>,
        cv_risk: Vec<Option<f64>>,
    ) -> Self {
        let stats = model.beta_stats(&fit.alpha);
        Self {
            mode: fit.mode.to_string(),
            covariates,
            response,
            n: model.n(),
            rank: model.rank(),
            selected_regularization: selected,
            constraint: (fit.mode == crate::solver::Mode::Hagl).then_some(fit.reg_value),
            alpha_l1: norm1(&fit.alpha),
            alpha_l2: norm2(&fit.alpha),
            beta_l1: stats.l1,
            j_n: fit
                .alpha
                .iter()
                .filter(|a| a.abs() > ZERO_THRESHOLD)
                .count(),
            intercept: fit.intercept,
            training_risk: fit.diagnostics.final_risk,
            constraint_residual: fit.diagnostics.constraint_residual,
            converged: fit.diagnostics.converged,
            cv_grid,
            cv_risk,
            ate: None,
            warning: fit.diagnostics.warning.clone(),
        }
    }
}

/// JSON written next to study CSVs: resolved config, seed, slopes and the
/// study-specific summary.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport<'a, C: Serialize> {
    pub study: &'a str,
    pub preset: &'a str,
    pub master_seed: u64,
    pub config: &'a C,
    pub slopes: &'a [SlopeRecord],
    pub summary: &'a serde_json::Value,
}

/// One plotted series: label, `(n, value)` points, optional `(intercept, slope)` fit.
pub type SvgSeries = (String, Vec<(f64, f64)>, Option<(f64, f64)>);

/// Minimal log-log scatter with fitted lines, one panel for all series.
pub fn loglog_svg(title: &str, series: &[SvgSeries]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 60.0;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter())
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    let mut svg =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\n");
    let _ = writeln!(
        svg,
        "<text x=\"{M}\" y=\"24\" font-size=\"14\">{}</text>",
        escape(title)
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (dx, dy) = ((x1 - x0).max(1e-9), (y1 - y0).max(1e-9));
    let sx = |x: f64| M + (x - x0) / dx * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / dy * (H - 2.0 * M);
    let _ = writeln!(
        svg,
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>",
        H - M
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">log n</text>",
        W / 2.0,
        H - 20.0
    );
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    for (k, (label, points, line)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for &(n, v) in points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0) {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(n.ln()),
                sy(v.ln())
            );
        }
        if let Some((slope, intercept)) = line {
            let (ya, yb) = (intercept + slope * x0, intercept + slope * x1);
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\"/>",
                sx(x0),
                sy(ya),
                sx(x1),
                sy(yb)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>",
            W - M - 150.0,
            M + 16.0 * k as f64,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
