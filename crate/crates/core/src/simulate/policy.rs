//! Land-price subsidy and employment relocation policies.

use crate::accessibility::{
    tour_logsums, AccessibilityEnv, AccessibilitySurface, Employment, LogsumConfig,
};
use crate::domain::{MeshCell, ScenarioSpec};
use crate::hedonic::{covariates, HedonicCoefficients};
use crate::{Error, Result};

/// Quantities derived from employment that a policy may have to refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derived {
    Logsums,
    LandPrices,
    AccessibilitySurface,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LedgerEntry {
    /// DAA land prices scaled by `1 − subsidy_rate` in `cells` cells.
    Policy1 {
        subsidy_rate: f64,
        cells: usize,
    },
    /// Employment policy with zero boost: nothing changed.
    Policy2NoOp,
    /// `amount` thousand tertiary employees moved into the UFAA.
    EmployeesTransferred {
        boost: f64,
        amount: f64,
    },
    Refreshed(Derived),
}

/// Effective cell attributes of a scenario after its policies.
#[derive(Debug, Clone)]
pub struct PolicyState {
    cells: Vec<MeshCell>,
    surface: Option<AccessibilitySurface>,
    ledger: Vec<LedgerEntry>,
}

impl PolicyState {
    pub fn new(cells: Vec<MeshCell>) -> Self {
        PolicyState {
            cells,
            surface: None,
            ledger: Vec::new(),
        }
    }

    pub fn cells(&self) -> &[MeshCell] {
        &self.cells
    }

    pub fn land_prices(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.land_price).collect()
    }

    pub fn employment(&self) -> Employment {
        Employment::from_cells(&self.cells)
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn refresh_count(&self, what: Derived) -> usize {
        self.ledger
            .iter()
            .filter(|e| **e == LedgerEntry::Refreshed(what))
            .count()
    }

    pub fn surface(&self) -> Option<&AccessibilitySurface> {
        self.surface.as_ref()
    }

    /// Builds the scenario surface from the current employment unless a
    /// policy already did.
    pub fn ensure_surface(
        mut self,
        env: &AccessibilityEnv,
        scenario: &ScenarioSpec,
        reference: &Employment,
    ) -> Result<Self> {
        if self.surface.is_none() {
            self.surface = Some(env.surface(scenario, &self.employment(), reference)?);
        }
        Ok(self)
    }
}

/// Lowers land prices of DAA cells by `subsidy_rate`. Other cells, and all
/// accessibility quantities, are left alone.
pub fn apply_policy1(mut state: PolicyState, subsidy_rate: f64) -> Result<PolicyState> {
    if !(0.0..1.0).contains(&subsidy_rate) {
        return Err(Error::Domain(format!(
            "subsidy rate {subsidy_rate} not in [0, 1)"
        )));
    }
    let mut n = 0;
    if subsidy_rate > 0.0 {
        for c in state.cells.iter_mut().filter(|c| c.in_daa) {
            c.land_price *= 1.0 - subsidy_rate;
            n += 1;
        }
    }
    state.ledger.push(LedgerEntry::Policy1 {
        subsidy_rate,
        cells: n,
    });
    Ok(state)
}

/// What the employment policy needs to refresh derived quantities.
#[derive(Debug, Clone, Copy)]
pub struct Policy2Inputs<'a> {
    pub env: &'a AccessibilityEnv,
    pub scenario: &'a ScenarioSpec,
    /// Base-scenario employment the accessibility surface is normalised
    /// against.
    pub reference_employment: &'a Employment,
    pub logsum: &'a LogsumConfig,
    pub hedonic: &'a HedonicCoefficients,
}

/// Raises UFAA tertiary employment by `boost` and takes the increase from
/// the other cells in proportion to their own tertiary employment. Then
/// logsums, land prices and the accessibility surface are refreshed in that
/// order.
///
/// Land prices move by the change of the hedonic prediction, so each cell
/// keeps its own residual.
pub fn apply_policy2(
    mut state: PolicyState,
    boost: f64,
    inputs: &Policy2Inputs,
) -> Result<PolicyState> {
    if !(boost >= 0.0 && boost.is_finite()) {
        return Err(Error::Domain(format!(
            "employee boost {boost} must be >= 0"
        )));
    }
    if boost == 0.0 {
        state.ledger.push(LedgerEntry::Policy2NoOp);
        return Ok(state);
    }
    let ufaa_total: f64 = state
        .cells
        .iter()
        .filter(|c| c.in_ufaa)
        .map(|c| c.employees_tertiary)
        .sum();
    let other_total: f64 = state
        .cells
        .iter()
        .filter(|c| !c.in_ufaa)
        .map(|c| c.employees_tertiary)
        .sum();
    let delta = boost * ufaa_total;
    if other_total < delta {
        return Err(Error::InfeasiblePolicy(format!(
            "UFAA increase of {delta:.3} thousand employees exceeds the {other_total:.3} thousand outside the UFAA"
        )));
    }
    for c in state.cells.iter_mut() {
        if c.in_ufaa {
            c.employees_tertiary *= 1.0 + boost;
        } else if other_total > 0.0 {
            c.employees_tertiary -= delta * c.employees_tertiary / other_total;
        }
    }
    state.ledger.push(LedgerEntry::EmployeesTransferred {
        boost,
        amount: delta,
    });

    let employment = state.employment();
    let logsums = tour_logsums(&inputs.env.times, &employment, inputs.logsum)?;
    let before: Vec<f64> = state
        .cells
        .iter()
        .map(|c| inputs.hedonic.linear_predictor(&covariates(c)))
        .collect();
    for (i, c) in state.cells.iter_mut().enumerate() {
        c.logsum_work = logsums.work[i];
        c.logsum_education = logsums.education[i];
        c.logsum_other = logsums.other[i];
    }
    state.ledger.push(LedgerEntry::Refreshed(Derived::Logsums));

    for (c, b) in state.cells.iter_mut().zip(before) {
        c.land_price *= (inputs.hedonic.linear_predictor(&covariates(c)) - b).exp();
    }
    state
        .ledger
        .push(LedgerEntry::Refreshed(Derived::LandPrices));

    state.surface = Some(inputs.env.surface(
        inputs.scenario,
        &employment,
        inputs.reference_employment,
    )?);
    state
        .ledger
        .push(LedgerEntry::Refreshed(Derived::AccessibilitySurface));
    Ok(state)
}
