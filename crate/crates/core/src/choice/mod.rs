//! Multinomial logit residential location choice.
//!
//! Utility of a candidate cell for a household is a linear index in cell
//! attributes and household-average accessibility, plus the log housing stock
//! with a fixed unit coefficient and the sampling correction of the choice
//! set the cell was drawn into.

use std::collections::BTreeMap;
use std::path::Path;

use crate::accessibility::{household_average_aba, AccessibilitySurface, CategoryAverages};
use crate::domain::io::{format_key_values, parse_key_values, read_text, write_text};
use crate::domain::{CellId, City, Household, HouseholdId, MeshCell, PersonCategory, Segment};
use crate::{Error, Result};

pub mod estimate;
pub mod report;
pub mod sampling;

pub use estimate::{
    estimate, log_likelihood, log_likelihood_gradient, log_likelihood_hessian, EstimationOptions,
    EstimationResult, NonIdentified,
};
pub use sampling::{ChoiceSetSampler, Correction, SampledSet};

/// Coefficient order of the residential model. The first three entries are
/// the household-average accessibility terms in [`PersonCategory::ALL`]
/// order.
pub const RESIDENTIAL_COEFFICIENTS: [&str; 15] = [
    "aba_worker",
    "aba_student",
    "aba_unemployed",
    "land_price",
    "share_building",
    "share_agricultural",
    "share_freshwater",
    "share_forest",
    "is_takasaki",
    "is_maebashi",
    "is_ota",
    "is_isesaki",
    "is_kiryu",
    "employees_primary_secondary",
    "employees_tertiary",
];

pub const N_RESIDENTIAL: usize = RESIDENTIAL_COEFFICIENTS.len();

/// Land prices enter utility in units of 10,000 JPY/m².
pub const LAND_PRICE_UNIT: f64 = 10_000.0;

/// Default number of weighted draws per choice set.
pub const DEFAULT_DRAWS: usize = 50;

const TABLE2_PRESET: &str = include_str!("../../presets/residential_choice.txt");

/// A named coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Coefficients {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Contract(format!(
                "{} coefficient names but {} values",
                names.len(),
                values.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Contract(format!("duplicate coefficient name '{n}'")));
            }
        }
        Ok(Coefficients { names, values })
    }

    pub fn residential(values: [f64; N_RESIDENTIAL]) -> Self {
        Coefficients {
            names: residential_names(),
            values: values.to_vec(),
        }
    }

    pub fn zeros(names: Vec<String>) -> Self {
        let values = vec![0.0; names.len()];
        Coefficients { names, values }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

pub fn residential_names() -> Vec<String> {
    RESIDENTIAL_COEFFICIENTS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// One candidate location in a household's choice set.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub cell: CellId,
    /// Aligned with the coefficient vector.
    pub features: Vec<f64>,
    /// ln(housing stock).
    pub size_term: f64,
    pub sampling_correction: f64,
}

impl Alternative {
    /// Offset added to the linear index with a fixed unit coefficient.
    pub fn offset(&self) -> f64 {
        self.size_term + self.sampling_correction
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSet {
    pub household: HouseholdId,
    pub alternatives: Vec<Alternative>,
    /// Position of the chosen alternative, when known.
    pub chosen: Option<usize>,
}

impl ChoiceSet {
    pub fn validate(&self) -> Result<()> {
        if self.alternatives.is_empty() {
            return Err(Error::Contract(format!(
                "household {}: empty choice set",
                self.household
            )));
        }
        for (i, a) in self.alternatives.iter().enumerate() {
            if self.alternatives[..i].iter().any(|b| b.cell == a.cell) {
                return Err(Error::Contract(format!(
                    "household {}: cell {} appears twice in the choice set",
                    self.household, a.cell
                )));
            }
            if !a.offset().is_finite() || a.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "household {}: non-finite attribute for cell {}",
                    self.household, a.cell
                )));
            }
        }
        if let Some(c) = self.chosen {
            if c >= self.alternatives.len() {
                return Err(Error::Contract(format!(
                    "household {}: chosen index {c} outside choice set",
                    self.household
                )));
            }
        }
        Ok(())
    }
}

pub fn household_utility(coefficients: &Coefficients, alt: &Alternative) -> Result<f64> {
    if alt.features.len() != coefficients.len() {
        return Err(Error::Contract(format!(
            "alternative has {} attributes, coefficient schema has {}",
            alt.features.len(),
            coefficients.len()
        )));
    }
    let index: f64 = coefficients
        .values
        .iter()
        .zip(&alt.features)
        .map(|(b, x)| b * x)
        .sum();
    Ok(index + alt.offset())
}

/// Max-shifted softmax.
pub fn softmax(utilities: &[f64]) -> Vec<f64> {
    let m = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utilities.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn choice_probabilities(set: &ChoiceSet, coefficients: &Coefficients) -> Result<Vec<f64>> {
    if set.alternatives.is_empty() {
        return Err(Error::Contract(format!(
            "household {}: empty choice set",
            set.household
        )));
    }
    let v = set
        .alternatives
        .iter()
        .map(|a| household_utility(coefficients, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&v))
}

/// Adjusted likelihood ratio index `1 − (LL_final − K)/LL₀`.
pub fn goodness_of_fit(ll_initial: f64, ll_final: f64, k: usize) -> Result<f64> {
    if !(ll_initial < 0.0) || !ll_final.is_finite() {
        return Err(Error::Domain(format!(
            "initial log-likelihood must be negative and finite, got {ll_initial}"
        )));
    }
    Ok(1.0 - (ll_final - k as f64) / ll_initial)
}

/// Residential attribute vector of `cell` in [`RESIDENTIAL_COEFFICIENTS`]
/// order.
pub fn residential_features(cell: &MeshCell, aba: &CategoryAverages) -> Vec<f64> {
    vec![
        aba.term(PersonCategory::Worker),
        aba.term(PersonCategory::Student),
        aba.term(PersonCategory::Unemployed),
        cell.land_price / LAND_PRICE_UNIT,
        cell.share_building,
        cell.share_agricultural,
        cell.share_freshwater,
        cell.share_forest,
        cell.city.dummy(City::Takasaki),
        cell.city.dummy(City::Maebashi),
        cell.city.dummy(City::Ota),
        cell.city.dummy(City::Isesaki),
        cell.city.dummy(City::Kiryu),
        cell.employees_primary_secondary,
        cell.employees_tertiary,
    ]
}

/// Cells and accessibility surface a residential choice is evaluated on.
#[derive(Debug, Clone, Copy)]
pub struct ChoiceContext<'a> {
    pub cells: &'a [MeshCell],
    pub surface: &'a AccessibilitySurface,
}

impl<'a> ChoiceContext<'a> {
    pub fn new(cells: &'a [MeshCell], surface: &'a AccessibilitySurface) -> Result<Self> {
        if cells.len() != surface.n_cells() {
            return Err(Error::Contract(format!(
                "{} cells but accessibility surface covers {}",
                cells.len(),
                surface.n_cells()
            )));
        }
        Ok(ChoiceContext { cells, surface })
    }

    pub fn alternative(
        &self,
        household: &Household,
        home: usize,
        cell: usize,
        correction: f64,
    ) -> Result<Alternative> {
        let c = &self.cells[cell];
        if c.housing_stock == 0 {
            return Err(Error::Data(format!("cell {} has no housing stock", c.id)));
        }
        let aba = household_average_aba(self.surface, household, home, cell)?;
        Ok(Alternative {
            cell: c.id,
            features: residential_features(c, &aba),
            size_term: (c.housing_stock as f64).ln(),
            sampling_correction: correction,
        })
    }

    pub fn choice_set(
        &self,
        household: &Household,
        home: usize,
        sampled: &SampledSet,
    ) -> Result<ChoiceSet> {
        let alternatives = sampled
            .cells
            .iter()
            .zip(&sampled.corrections)
            .map(|(&cell, &corr)| self.alternative(household, home, cell, corr))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChoiceSet {
            household: household.id,
            alternatives,
            chosen: sampled.chosen,
        })
    }
}

/// Coefficient vectors of all five household segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCoefficients {
    segments: [Coefficients; 5],
}

impl SegmentCoefficients {
    pub fn preset() -> Self {
        Self::parse(TABLE2_PRESET).expect("bundled preset parses")
    }

    pub fn new(segments: [Coefficients; 5]) -> Result<Self> {
        for c in &segments {
            if c.names() != RESIDENTIAL_COEFFICIENTS {
                return Err(Error::Contract(
                    "segment coefficients must follow the residential schema".into(),
                ));
            }
        }
        Ok(SegmentCoefficients { segments })
    }

    pub fn get(&self, segment: Segment) -> &Coefficients {
        &self.segments[segment.index()]
    }

    pub fn set(&mut self, segment: Segment, coefficients: Coefficients) -> Result<()> {
        if coefficients.names() != RESIDENTIAL_COEFFICIENTS {
            return Err(Error::Contract(
                "segment coefficients must follow the residential schema".into(),
            ));
        }
        self.segments[segment.index()] = coefficients;
        Ok(())
    }

    /// Reads `segmentN.<name> = value` lines. Every segment needs every
    /// coefficient; an optional `segmentN.ln_housing_stock` must equal 1.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        Self::from_map(&kv)
    }

    pub fn from_map(kv: &BTreeMap<String, f64>) -> Result<Self> {
        let mut used = 0;
        let mut segments = Vec::with_capacity(5);
        for seg in Segment::ALL {
            let mut values = [0.0; N_RESIDENTIAL];
            for (v, name) in values.iter_mut().zip(RESIDENTIAL_COEFFICIENTS) {
                let key = format!("segment{}.{name}", seg.number());
                *v = *kv
                    .get(&key)
                    .ok_or_else(|| Error::Data(format!("missing coefficient '{key}'")))?;
                used += 1;
            }
            let size_key = format!("segment{}.ln_housing_stock", seg.number());
            if let Some(&s) = kv.get(&size_key) {
                if s != 1.0 {
                    return Err(Error::Contract(format!("{size_key} must be 1, got {s}")));
                }
                used += 1;
            }
            segments.push(Coefficients::residential(values));
        }
        if used != kv.len() {
            let unknown: Vec<&String> = kv
                .keys()
                .filter(|k| {
                    !Segment::ALL.iter().any(|s| {
                        k.strip_prefix(&format!("segment{}.", s.number()))
                            .is_some_and(|n| {
                                n == "ln_housing_stock" || RESIDENTIAL_COEFFICIENTS.contains(&n)
                            })
                    })
                })
                .collect();
            return Err(Error::Data(format!(
                "unknown coefficient keys: {unknown:?}"
            )));
        }
        Ok(SegmentCoefficients {
            segments: segments.try_into().expect("five segments"),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn to_text(&self, header: &str) -> String {
        let mut entries = Vec::new();
        for seg in Segment::ALL {
            for (name, v) in RESIDENTIAL_COEFFICIENTS.iter().zip(self.get(seg).values()) {
                entries.push((format!("segment{}.{name}", seg.number()), *v));
            }
        }
        format_key_values(header, entries.iter().map(|(k, v)| (k.as_str(), *v)))
    }

    pub fn write(&self, path: &Path, header: &str) -> Result<()> {
        write_text(path, &self.to_text(header))
    }
}
