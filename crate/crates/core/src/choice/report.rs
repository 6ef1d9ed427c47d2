//! Estimation reports: CSV rows and a side-by-side text table.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EstimationResult;
use crate::domain::io::write_csv;
use crate::domain::Segment;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub segment: u8,
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub segment: u8,
    pub n_observations: usize,
    pub k: usize,
    pub ll_initial: f64,
    pub ll_final: f64,
    pub adj_rho_squared: f64,
    pub iterations: usize,
}

pub fn coefficient_rows(results: &[(Segment, EstimationResult)]) -> Vec<CoefficientRow> {
    let mut rows = Vec::new();
    for (seg, r) in results {
        for i in 0..r.names.len() {
            rows.push(CoefficientRow {
                segment: seg.number(),
                name: r.names[i].clone(),
                coefficient: r.coefficients[i],
                std_error: r.std_errors[i],
                t_value: r.t_values[i],
                fixed: r.fixed[i],
            });
        }
    }
    rows
}

pub fn fit_rows(results: &[(Segment, EstimationResult)]) -> Vec<FitRow> {
    results
        .iter()
        .map(|(seg, r)| FitRow {
            segment: seg.number(),
            n_observations: r.n_observations,
            k: r.k,
            ll_initial: r.ll_initial,
            ll_final: r.ll_final,
            adj_rho_squared: r.adj_rho_squared,
            iterations: r.iterations,
        })
        .collect()
}

pub fn write_reports(dir: &Path, results: &[(Segment, EstimationResult)]) -> Result<()> {
    write_csv(
        &dir.join("choice_coefficients.csv"),
        &coefficient_rows(results),
    )?;
    write_csv(&dir.join("choice_fit.csv"), &fit_rows(results))
}

/// Coefficients with t-values in parentheses, one column per segment.
/// Fixed coefficients are left blank.
pub fn format_table(results: &[(Segment, EstimationResult)]) -> String {
    let Some((_, first)) = results.first() else {
        return String::new();
    };
    let width = 18;
    let label = first
        .names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max(22);
    let mut out = String::new();
    let _ = write!(out, "{:label$}", "");
    for (seg, _) in results {
        let _ = write!(out, "{:>width$}", seg.to_string());
    }
    out.push('\n');
    for (i, name) in first.names.iter().enumerate() {
        let _ = write!(out, "{name:label$}");
        for (_, r) in results {
            let cell = if r.fixed.get(i).copied().unwrap_or(true) {
                String::new()
            } else {
                format!("{:.3} ({:.2})", r.coefficients[i], r.t_values[i])
            };
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    let mut line = |title: &str, f: &dyn Fn(&EstimationResult) -> String| {
        let _ = write!(out, "{title:label$}");
        for (_, r) in results {
            let _ = write!(out, "{:>width$}", f(r));
        }
        out.push('\n');
    };
    line("Number of observations", &|r| r.n_observations.to_string());
    line("Initial likelihood", &|r| format!("{:.2}", r.ll_initial));
    line("Final likelihood", &|r| format!("{:.2}", r.ll_final));
    line("Adjusted rho squared", &|r| {
        format!("{:.3}", r.adj_rho_squared)
    });
    line("Estimated coefficients", &|r| r.k.to_string());
    out
}
