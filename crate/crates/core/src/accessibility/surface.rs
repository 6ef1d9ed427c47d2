//! Per-scenario accessibility surfaces and their CSV form.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aba, normalize_aba, scaling_factor, AccessibilityProvider, ScalingFactor, DEFAULT_DELTA_T,
};
use crate::domain::io::{read_csv, write_csv};
use crate::domain::{CellId, PersonCategory};
use crate::{Error, Result};

/// Raw and normalised accessibility for every (category, cell) pair of one
/// scenario.
///
/// Besides the scenario's raw values the surface keeps the base-scenario
/// reference values and scaling factors of every cell, so that a household
/// can be normalised against its own current home.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilitySurface {
    scenario: String,
    cell_ids: Vec<CellId>,
    raw: [Vec<f64>; 3],
    reference: [Vec<f64>; 3],
    scaling: [Vec<f64>; 3],
    normalized: [Vec<f64>; 3],
}

/// One row of the surface CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub scenario: String,
    pub category: PersonCategory,
    pub cell_id: CellId,
    pub raw_aba: f64,
    pub normalized_aba: f64,
    pub reference_aba: f64,
    pub scaling_factor: f64,
}

impl AccessibilitySurface {
    /// Evaluates `scenario` and `reference` providers at every cell.
    pub fn build<P, Q>(
        scenario: &str,
        cell_ids: Vec<CellId>,
        scenario_provider: &P,
        reference: &Q,
    ) -> Result<Self>
    where
        P: AccessibilityProvider + ?Sized,
        Q: AccessibilityProvider + ?Sized,
    {
        let n = cell_ids.len();
        if scenario_provider.n_cells() != n || reference.n_cells() != n {
            return Err(Error::Contract(
                "providers and cell list differ in size".into(),
            ));
        }
        let per_category = |cat: PersonCategory| -> Result<[Vec<f64>; 4]> {
            let rows: Vec<(f64, f64, f64, f64)> = (0..n)
                .into_par_iter()
                .map(|cell| {
                    let raw = aba(scenario_provider, cat, cell, 0.0)?;
                    let reference_aba = aba(reference, cat, cell, 0.0)?;
                    let s = scaling_factor(reference, cat, cell, DEFAULT_DELTA_T)?;
                    Ok((
                        raw,
                        reference_aba,
                        s.value,
                        normalize_aba(raw, reference_aba, &s),
                    ))
                })
                .collect::<Result<_>>()?;
            Ok([
                rows.iter().map(|r| r.0).collect(),
                rows.iter().map(|r| r.1).collect(),
                rows.iter().map(|r| r.2).collect(),
                rows.iter().map(|r| r.3).collect(),
            ])
        };
        let [w, s, u] = [
            per_category(PersonCategory::Worker)?,
            per_category(PersonCategory::Student)?,
            per_category(PersonCategory::Unemployed)?,
        ];
        let [w0, w1, w2, w3] = w;
        let [s0, s1, s2, s3] = s;
        let [u0, u1, u2, u3] = u;
        Ok(AccessibilitySurface {
            scenario: scenario.to_string(),
            cell_ids,
            raw: [w0, s0, u0],
            reference: [w1, s1, u1],
            scaling: [w2, s2, u2],
            normalized: [w3, s3, u3],
        })
    }

    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    pub fn cell_ids(&self) -> &[CellId] {
        &self.cell_ids
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    fn lookup(
        &self,
        table: &[Vec<f64>; 3],
        cat: PersonCategory,
        cell: usize,
        what: &str,
    ) -> Result<f64> {
        match table[cat.index()].get(cell) {
            Some(v) if v.is_finite() => Ok(*v),
            _ => Err(Error::Data(format!(
                "accessibility surface '{}' has no {what} value for {cat} at cell index {cell}",
                self.scenario
            ))),
        }
    }

    pub fn raw(&self, cat: PersonCategory, cell: usize) -> Result<f64> {
        self.lookup(&self.raw, cat, cell, "raw")
    }

    pub fn reference(&self, cat: PersonCategory, cell: usize) -> Result<f64> {
        self.lookup(&self.reference, cat, cell, "reference")
    }

    /// Change against the base scenario at the same cell, in minutes.
    pub fn normalized(&self, cat: PersonCategory, cell: usize) -> Result<f64> {
        self.lookup(&self.normalized, cat, cell, "normalized")
    }

    pub fn scaling(&self, cat: PersonCategory, cell: usize) -> Result<ScalingFactor> {
        let v = self.lookup(&self.scaling, cat, cell, "scaling factor")?;
        ScalingFactor::new(cat, v, DEFAULT_DELTA_T).map_err(|_| Error::DegenerateScaling {
            category: cat.to_string(),
            cell,
            value: v,
        })
    }

    /// Accessibility at `cell` relative to the base-scenario value at the
    /// household's current `home`, scaled by the home scaling factor.
    pub fn household_normalized(
        &self,
        cat: PersonCategory,
        home: usize,
        cell: usize,
    ) -> Result<f64> {
        let s = self.scaling(cat, home)?;
        Ok(normalize_aba(
            self.raw(cat, cell)?,
            self.reference(cat, home)?,
            &s,
        ))
    }

    pub fn to_rows(&self) -> Vec<SurfaceRow> {
        let mut rows = Vec::with_capacity(3 * self.n_cells());
        for cat in PersonCategory::ALL {
            let i = cat.index();
            for (k, &cell_id) in self.cell_ids.iter().enumerate() {
                rows.push(SurfaceRow {
                    scenario: self.scenario.clone(),
                    category: cat,
                    cell_id,
                    raw_aba: self.raw[i][k],
                    normalized_aba: self.normalized[i][k],
                    reference_aba: self.reference[i][k],
                    scaling_factor: self.scaling[i][k],
                });
            }
        }
        rows
    }

    /// Rebuilds a surface from CSV rows of one scenario. Cells without a row
    /// are left empty and raise a data error when looked up.
    pub fn from_rows(cell_ids: Vec<CellId>, rows: &[SurfaceRow]) -> Result<Self> {
        let scenario = rows
            .first()
            .map(|r| r.scenario.clone())
            .ok_or_else(|| Error::Data("accessibility surface file has no rows".into()))?;
        let index: HashMap<CellId, usize> =
            cell_ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let n = cell_ids.len();
        let blank = || [vec![f64::NAN; n], vec![f64::NAN; n], vec![f64::NAN; n]];
        let (mut raw, mut reference, mut scaling, mut normalized) =
            (blank(), blank(), blank(), blank());
        for r in rows {
            if r.scenario != scenario {
                return Err(Error::Data(format!(
                    "surface rows mix scenarios '{}' and '{}'",
                    scenario, r.scenario
                )));
            }
            let k = *index.get(&r.cell_id).ok_or_else(|| {
                Error::Data(format!("surface row for unknown cell {}", r.cell_id))
            })?;
            let i = r.category.index();
            raw[i][k] = r.raw_aba;
            reference[i][k] = r.reference_aba;
            scaling[i][k] = r.scaling_factor;
            normalized[i][k] = r.normalized_aba;
        }
        Ok(AccessibilitySurface {
            scenario,
            cell_ids,
            raw,
            reference,
            scaling,
            normalized,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.to_rows())
    }

    pub fn read_csv(path: &Path, cell_ids: Vec<CellId>) -> Result<Self> {
        Self::from_rows(cell_ids, &read_csv(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accessibility::{
        household_average_aba, Employment, GravityProvider, ProviderConfig, TravelTimes,
    };
    use crate::domain::{Household, ScenarioSpec, Segment};

    fn setup() -> (TravelTimes, ProviderConfig, Employment) {
        let t = TravelTimes::from_matrix(2, vec![2.0, 8.0, 8.0, 2.0]).unwrap();
        let e = Employment {
            primary_secondary: vec![1.0, 1.0],
            tertiary: vec![4.0, 1.0],
        };
        (t, ProviderConfig::default(), e)
    }

    #[test]
    fn base_surface_normalizes_to_zero() {
        let (t, cfg, e) = setup();
        let p = GravityProvider::new(&t, &cfg, &e, &ScenarioSpec::default()).unwrap();
        let s = AccessibilitySurface::build("base", vec![10, 11], &p, &p).unwrap();
        for cat in PersonCategory::ALL {
            for cell in 0..2 {
                assert_eq!(s.normalized(cat, cell).unwrap(), 0.0);
                assert_eq!(s.household_normalized(cat, cell, cell).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn household_terms_follow_membership() {
        let (t, cfg, e) = setup();
        let p = GravityProvider::new(&t, &cfg, &e, &ScenarioSpec::default()).unwrap();
        let s = AccessibilitySurface::build("base", vec![10, 11], &p, &p).unwrap();
        let hh = Household {
            id: 1,
            home_cell: 11,
            age_of_head: 40,
            n_workers: 2,
            n_students: 0,
            n_unemployed: 1,
            n_members: 3,
            segment: Segment::S1,
        };
        let avg = household_average_aba(&s, &hh, 1, 0).unwrap();
        assert_eq!(avg.get(PersonCategory::Student), None);
        // cell 0 holds most employment, so moving there improves access
        assert!(avg.get(PersonCategory::Worker).unwrap() > 0.0);
        assert!(avg.get(PersonCategory::Unemployed).unwrap() > 0.0);
    }

    #[test]
    fn rows_round_trip_and_missing_entries() {
        let (t, cfg, e) = setup();
        let p = GravityProvider::new(&t, &cfg, &e, &ScenarioSpec::default()).unwrap();
        let s2 = GravityProvider::new(&t, &cfg, &e, &ScenarioSpec::preset("s2").unwrap()).unwrap();
        let surf = AccessibilitySurface::build("s2", vec![10, 11], &s2, &p).unwrap();
        let rows = surf.to_rows();
        assert_eq!(
            AccessibilitySurface::from_rows(vec![10, 11], &rows).unwrap(),
            surf
        );
        let partial: Vec<SurfaceRow> = rows.into_iter().filter(|r| r.cell_id != 11).collect();
        let broken = AccessibilitySurface::from_rows(vec![10, 11], &partial).unwrap();
        assert!(matches!(
            broken.raw(PersonCategory::Worker, 1),
            Err(Error::Data(_))
        ));
        assert!(broken.raw(PersonCategory::Worker, 0).is_ok());
    }
}
