//! Indicator tables in CSV and aligned text form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_percent, percent_change, Indicators, Summary, FILTER_THRESHOLD_M};
use crate::domain::io::write_csv;
use crate::{Error, Result};

/// Long-form row: one indicator of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub scenario: String,
    pub indicator: String,
    pub value: f64,
    /// Percent change against the baseline entry; empty without one.
    pub percent_change: Option<f64>,
}

/// Indicators of several labelled residential patterns, optionally compared
/// with one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorReport {
    entries: Vec<(String, Indicators)>,
    baseline: Option<usize>,
}

fn summary_fields(prefix: &str, s: &Summary) -> Vec<(String, f64)> {
    vec![
        (format!("{prefix}_mean"), s.mean),
        (format!("{prefix}_median"), s.median),
        (format!("{prefix}_min"), s.min),
        (format!("{prefix}_max"), s.max),
        (format!("{prefix}_std_dev"), s.std_dev),
    ]
}

/// Flat (name, value) view of an indicator set, in reporting order.
pub fn indicator_values(ind: &Indicators) -> Vec<(String, f64)> {
    let mut out = vec![
        ("households".to_string(), ind.households as f64),
        ("daa_households".to_string(), ind.daa_households as f64),
        ("daa_share_percent".to_string(), 100.0 * ind.daa_share),
    ];
    out.extend(summary_fields("daa_distance", &ind.daa_distance.all));
    out.extend(summary_fields(
        "daa_distance_filtered",
        &ind.daa_distance.filtered,
    ));
    out.extend(summary_fields("ufaa_distance", &ind.ufaa_distance.all));
    out.extend(summary_fields(
        "ufaa_distance_filtered",
        &ind.ufaa_distance.filtered,
    ));
    out.push((
        "distance_excluded".to_string(),
        ind.daa_distance.all.excluded as f64,
    ));
    out
}

impl IndicatorReport {
    pub fn new(entries: Vec<(String, Indicators)>) -> Self {
        IndicatorReport {
            entries,
            baseline: None,
        }
    }

    pub fn with_baseline(mut self, label: &str) -> Result<Self> {
        self.baseline = Some(
            self.entries
                .iter()
                .position(|(l, _)| l == label)
                .ok_or_else(|| Error::Config(format!("baseline '{label}' is not in the report")))?,
        );
        Ok(self)
    }

    pub fn entries(&self) -> &[(String, Indicators)] {
        &self.entries
    }

    pub fn rows(&self) -> Result<Vec<IndicatorRow>> {
        let base = self.baseline.map(|b| indicator_values(&self.entries[b].1));
        let mut rows = Vec::new();
        for (label, ind) in &self.entries {
            for (k, (name, value)) in indicator_values(ind).into_iter().enumerate() {
                let pct = match &base {
                    Some(b) if b[k].1 != 0.0 => Some(percent_change(value, b[k].1)?),
                    _ => None,
                };
                rows.push(IndicatorRow {
                    scenario: label.clone(),
                    indicator: name,
                    value,
                    percent_change: pct,
                });
            }
        }
        Ok(rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows()?)
    }

    /// Household counts and distance statistics per entry, unfiltered and
    /// with the distance filter.
    pub fn distance_table(&self) -> String {
        let label_w = self
            .entries
            .iter()
            .map(|(l, _)| l.len())
            .max()
            .unwrap_or(0)
            .max(18);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:label_w$}{:>12}{:>18}",
            "", "#Household", "#Household in DAA"
        );
        for (label, ind) in &self.entries {
            let _ = writeln!(
                out,
                "{label:label_w$}{:>12}{:>18}",
                ind.households,
                format!("{} ({:.1}%)", ind.daa_households, 100.0 * ind.daa_share)
            );
        }
        for (title, pick) in [
            ("Network distance (m) to the closest DAA", 0usize),
            ("Network distance (m) to the closest UFAA", 1),
        ] {
            out.push('\n');
            let _ = writeln!(out, "{title}");
            let _ = writeln!(
                out,
                "{:label_w$}{:>10}{:>10}{:>10}{:>10}{:>10}",
                "", "Mean", "Median", "Min.", "Max.", "SD"
            );
            for filtered in [false, true] {
                if filtered {
                    let _ = writeln!(out, "Removing data farther than {FILTER_THRESHOLD_M:.0}m");
                }
                for (label, ind) in &self.entries {
                    let d = if pick == 0 {
                        &ind.daa_distance
                    } else {
                        &ind.ufaa_distance
                    };
                    let s = if filtered { &d.filtered } else { &d.all };
                    let _ = writeln!(
                        out,
                        "{label:label_w$}{:>10.0}{:>10.0}{:>10.0}{:>10.0}{:>10.0}",
                        s.mean, s.median, s.min, s.max, s.std_dev
                    );
                }
            }
        }
        out
    }

    /// Scenario columns with percent changes against the baseline.
    pub fn comparison_table(&self) -> Result<String> {
        let b = self
            .baseline
            .ok_or_else(|| Error::Config("comparison table needs a baseline".into()))?;
        let base = &self.entries[b].1;
        let col_w = self
            .entries
            .iter()
            .map(|(l, _)| l.len())
            .max()
            .unwrap_or(0)
            .max(20)
            + 2;
        let rows: [(&str, fn(&Indicators) -> f64, usize); 6] = [
            ("#Household", |i| i.households as f64, 0),
            ("#Household in DAA", |i| i.daa_households as f64, 0),
            ("Share in DAA (%)", |i| 100.0 * i.daa_share, 1),
            (
                "Median distance to DAA (m)",
                |i| i.daa_distance.all.median,
                0,
            ),
            (
                "Median distance to UFAA (m)",
                |i| i.ufaa_distance.all.median,
                0,
            ),
            ("Mean distance to DAA (m)", |i| i.daa_distance.all.mean, 0),
        ];
        let label_w = 30;
        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for (label, _) in &self.entries {
            let _ = write!(out, "{label:>col_w$}");
        }
        out.push('\n');
        for (title, f, decimals) in rows {
            let _ = write!(out, "{title:label_w$}");
            for (k, (_, ind)) in self.entries.iter().enumerate() {
                let v = f(ind);
                let cell = if k == b {
                    format!("{v:.decimals$}")
                } else {
                    let pct = match percent_change(v, f(base)) {
                        Ok(p) => format_percent(p),
                        Err(_) => "n/a".to_string(),
                    };
                    format!("{v:.decimals$} ({pct})")
                };
                let _ = write!(out, "{cell:>col_w$}");
            }
            out.push('\n');
        }
        Ok(out)
    }
}
