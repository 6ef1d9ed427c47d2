//! Hedonic regression of log land price on cell attributes.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::io::{format_key_values, parse_key_values, read_text, write_text};
use crate::domain::{CellId, City, MeshCell};
use crate::{Error, Result};

/// Covariate order of the hedonic design matrix.
pub const HEDONIC_COVARIATES: [&str; 14] = [
    "intercept",
    "housing_stock",
    "logsum_work",
    "logsum_education",
    "logsum_other",
    "is_takasaki",
    "is_maebashi",
    "is_ota",
    "is_isesaki",
    "is_kiryu",
    "share_agricultural",
    "share_forest",
    "share_freshwater",
    "share_industrial",
];

pub const N_HEDONIC: usize = HEDONIC_COVARIATES.len();

/// A column is treated as collinear when its QR pivot is below this
/// fraction of the column norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

const TABLE1_PRESET: &str = include_str!("../presets/land_price_hedonic.txt");

pub fn covariates(cell: &MeshCell) -> [f64; N_HEDONIC] {
    [
        1.0,
        cell.housing_stock as f64,
        cell.logsum_work,
        cell.logsum_education,
        cell.logsum_other,
        cell.city.dummy(City::Takasaki),
        cell.city.dummy(City::Maebashi),
        cell.city.dummy(City::Ota),
        cell.city.dummy(City::Isesaki),
        cell.city.dummy(City::Kiryu),
        cell.share_agricultural,
        cell.share_forest,
        cell.share_freshwater,
        cell.share_industrial,
    ]
}

/// Coefficients of the log land-price model in [`HEDONIC_COVARIATES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedonicCoefficients {
    pub values: [f64; N_HEDONIC],
}

impl HedonicCoefficients {
    /// Bundled estimates; unreported coefficients are zero.
    pub fn preset() -> Self {
        Self::parse(TABLE1_PRESET).expect("bundled hedonic preset parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    pub fn from_map(kv: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values = [0.0; N_HEDONIC];
        for (i, name) in HEDONIC_COVARIATES.iter().enumerate() {
            values[i] = *kv
                .get(*name)
                .ok_or_else(|| Error::Data(format!("hedonic coefficient '{name}' missing")))?;
        }
        if let Some(extra) = kv
            .keys()
            .find(|k| !HEDONIC_COVARIATES.contains(&k.as_str()))
        {
            return Err(Error::Data(format!(
                "unknown hedonic coefficient '{extra}'"
            )));
        }
        Ok(HedonicCoefficients { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn to_text(&self, header: &str) -> String {
        format_key_values(header, HEDONIC_COVARIATES.iter().copied().zip(self.values))
    }

    pub fn write(&self, path: &Path, header: &str) -> Result<()> {
        write_text(path, &self.to_text(header))
    }

    pub fn linear_predictor(&self, x: &[f64; N_HEDONIC]) -> f64 {
        self.values.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        HEDONIC_COVARIATES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

/// `exp(x·β)` in JPY/m².
pub fn predict_land_price(coefs: &HedonicCoefficients, x: &[f64; N_HEDONIC]) -> f64 {
    coefs.linear_predictor(x).exp()
}

pub fn predict_cell(coefs: &HedonicCoefficients, cell: &MeshCell) -> f64 {
    predict_land_price(coefs, &covariates(cell))
}

/// Prediction from named covariates; the intercept may be omitted.
pub fn predict_from_named(
    coefs: &HedonicCoefficients,
    named: &BTreeMap<String, f64>,
) -> Result<f64> {
    let mut x = [0.0; N_HEDONIC];
    x[0] = 1.0;
    for (i, name) in HEDONIC_COVARIATES.iter().enumerate().skip(1) {
        x[i] = *named
            .get(*name)
            .ok_or_else(|| Error::Data(format!("covariate '{name}' missing for prediction")))?;
    }
    Ok(predict_land_price(coefs, &x))
}

/// Least-squares fit with classical standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_statistic: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares via Householder QR.
///
/// `rows` are observations; a column of ones, if present, is treated as
/// the intercept for R² and the F test.
pub fn fit_ols(rows: &[Vec<f64>], y: &[f64], names: &[&str]) -> Result<OlsFit> {
    let n = rows.len();
    let k = names.len();
    if y.len() != n {
        return Err(Error::Contract(format!(
            "{n} design rows but {} responses",
            y.len()
        )));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::Contract(format!(
            "design row has {} columns, expected {k}",
            r.len()
        )));
    }
    if n <= k {
        return Err(Error::Domain(format!(
            "{n} observations cannot identify {k} coefficients"
        )));
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in regression data".into()));
    }
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let collinear: Vec<String> = (0..k)
        .filter(|&j| {
            let norm = x.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm
        })
        .map(|j| names[j].to_string())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::SingularDesign { columns: collinear });
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign { columns: vec![] })?;

    let fitted = &x * &beta;
    let residuals = &yv - &fitted;
    let rss = residuals.norm_squared();
    let has_intercept = (0..k).any(|j| x.column(j).iter().all(|v| *v == 1.0));
    let tss = if has_intercept {
        let mean = yv.mean();
        yv.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let df_resid = (n - k) as f64;
    let adj_r_squared = 1.0 - (1.0 - r_squared) * ((n - 1) as f64) / df_resid;
    let df_model = if has_intercept { k - 1 } else { k } as f64;
    let f_statistic = if df_model == 0.0 {
        f64::NAN
    } else if rss == 0.0 {
        f64::INFINITY
    } else {
        ((tss - rss) / df_model) / (rss / df_resid)
    };

    let sigma2 = rss / df_resid;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::SingularDesign { columns: vec![] })?;
    let std_errors: Vec<f64> = (0..k)
        .map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt())
        .collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let t_values = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| if *se > 0.0 { b / se } else { f64::NAN })
        .collect();

    Ok(OlsFit {
        names: names.iter().map(|s| s.to_string()).collect(),
        coefficients,
        std_errors,
        t_values,
        r_squared,
        adj_r_squared,
        f_statistic,
        n,
        residuals: residuals.iter().copied().collect(),
    })
}

/// Hedonic fit on a set of cells with observed land prices.
#[derive(Debug, Clone, PartialEq)]
pub struct HedonicFit {
    pub ols: OlsFit,
    pub cell_ids: Vec<CellId>,
}

impl HedonicFit {
    pub fn coefficients(&self) -> HedonicCoefficients {
        let mut values = [0.0; N_HEDONIC];
        values.copy_from_slice(&self.ols.coefficients);
        HedonicCoefficients { values }
    }

    /// Plain-text table with coefficient, standard error and t value.
    pub fn report(&self) -> String {
        let mut out = String::from("Estimation results of the land price hedonic model\n");
        out.push_str("Dependent variable: natural log of land price (JPY/m2)\n");
        out.push_str(&format!(
            "{:<22}{:>12}{:>12}{:>10}\n",
            "Variable", "Coefficient", "Std. err.", "T value"
        ));
        for i in 0..N_HEDONIC {
            out.push_str(&format!(
                "{:<22}{:>12.4}{:>12.4}{:>10.2}\n",
                self.ols.names[i],
                self.ols.coefficients[i],
                self.ols.std_errors[i],
                self.ols.t_values[i]
            ));
        }
        out.push_str(&format!("{:<22}{:>12}\n", "#Count", self.ols.n));
        out.push_str(&format!(
            "{:<22}{:>12.3}\n",
            "Adjusted R squared", self.ols.adj_r_squared
        ));
        out.push_str(&format!(
            "{:<22}{:>12.1}\n",
            "F statistic", self.ols.f_statistic
        ));
        out
    }
}

pub fn fit_hedonic(cells: &[MeshCell]) -> Result<HedonicFit> {
    let used: Vec<&MeshCell> = cells.iter().filter(|c| c.land_price > 0.0).collect();
    let rows: Vec<Vec<f64>> = used.iter().map(|c| covariates(c).to_vec()).collect();
    let y: Vec<f64> = used.iter().map(|c| c.land_price.ln()).collect();
    let ols = fit_ols(&rows, &y, &HEDONIC_COVARIATES)?;
    Ok(HedonicFit {
        ols,
        cell_ids: used.iter().map(|c| c.id).collect(),
    })
}

/// Row of the hedonic observation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedonicRow {
    pub cell_id: CellId,
    pub housing_stock: f64,
    pub logsum_work: f64,
    pub logsum_education: f64,
    pub logsum_other: f64,
    pub is_takasaki: f64,
    pub is_maebashi: f64,
    pub is_ota: f64,
    pub is_isesaki: f64,
    pub is_kiryu: f64,
    pub share_agricultural: f64,
    pub share_forest: f64,
    pub share_freshwater: f64,
    pub share_industrial: f64,
    pub land_price: f64,
}

impl HedonicRow {
    pub fn from_cell(cell: &MeshCell) -> Self {
        let x = covariates(cell);
        HedonicRow {
            cell_id: cell.id,
            housing_stock: x[1],
            logsum_work: x[2],
            logsum_education: x[3],
            logsum_other: x[4],
            is_takasaki: x[5],
            is_maebashi: x[6],
            is_ota: x[7],
            is_isesaki: x[8],
            is_kiryu: x[9],
            share_agricultural: x[10],
            share_forest: x[11],
            share_freshwater: x[12],
            share_industrial: x[13],
            land_price: cell.land_price,
        }
    }

    pub fn covariates(&self) -> [f64; N_HEDONIC] {
        [
            1.0,
            self.housing_stock,
            self.logsum_work,
            self.logsum_education,
            self.logsum_other,
            self.is_takasaki,
            self.is_maebashi,
            self.is_ota,
            self.is_isesaki,
            self.is_kiryu,
            self.share_agricultural,
            self.share_forest,
            self.share_freshwater,
            self.share_industrial,
        ]
    }
}

pub fn fit_rows(rows: &[HedonicRow]) -> Result<OlsFit> {
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.covariates().to_vec()).collect();
    let y = rows
        .iter()
        .map(|r| {
            if r.land_price > 0.0 {
                Ok(r.land_price.ln())
            } else {
                Err(Error::Data(format!(
                    "cell {}: land price must be positive",
                    r.cell_id
                )))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    fit_ols(&x, &y, &HEDONIC_COVARIATES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub cell_id: CellId,
    pub predicted_land_price: f64,
}
