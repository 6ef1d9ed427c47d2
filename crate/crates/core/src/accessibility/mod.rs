//! Activity-based accessibility: logsums over daily activity patterns,
//! the travel-time scaling factor and normalisation to minutes.
//!
//! Accessibility of a person is the expected maximum utility over the
//! person's daily activity patterns, `ln Σ_p exp(V_p) + constant`. To make
//! values comparable across people it is expressed relative to a reference
//! value and divided by the marginal utility of one extra minute of travel,
//! which turns utility differences into minutes-equivalent units.
//!
//! Pattern utilities come from an [`AccessibilityProvider`]. The crate ships
//! a gravity-style [`GravityProvider`]; externally computed surfaces can be
//! loaded from CSV through [`surface`].

use crate::domain::{Household, PersonCategory};
use crate::{Error, Result};

mod provider;
pub mod surface;

pub use provider::{
    tertiary_logsum_for_hedonic, tour_logsums, AccessibilityEnv, Employment, GravityProvider,
    LogsumConfig, ProviderConfig, Purpose, Sector, TourLogsums, TravelTimeConfig, TravelTimes,
};
pub use surface::AccessibilitySurface;

/// Travel-time perturbation used for the scaling factor, in minutes.
pub const DEFAULT_DELTA_T: f64 = 1.0;

/// Scaling factors smaller than this (utility per minute) are rejected.
pub const SCALING_EPSILON: f64 = 1e-12;

/// `ln Σ exp(u) + constant`, shifted by the maximum for overflow safety.
pub fn aba_logsum(utilities: &[f64], constant: f64) -> Result<f64> {
    if utilities.is_empty() {
        return Err(Error::Domain("empty activity pattern choice set".into()));
    }
    if let Some(u) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(Error::Domain(format!("pattern utility {u} is not finite")));
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = utilities.iter().map(|u| (u - max).exp()).sum();
    Ok(max + sum.ln() + constant)
}

/// Source of daily activity pattern utilities.
///
/// Implementations must be pure: the same arguments always give the same
/// utilities, so surfaces can be evaluated in parallel.
pub trait AccessibilityProvider: Sync {
    fn n_cells(&self) -> usize;

    /// Pattern utilities of a person of `category` living at cell index
    /// `home`, with `extra_minutes` added to every travel time.
    fn pattern_utilities(
        &self,
        category: PersonCategory,
        home: usize,
        extra_minutes: f64,
    ) -> Vec<f64>;

    /// Additive constant of the accessibility logsum.
    fn constant(&self) -> f64 {
        0.0
    }
}

/// Raw accessibility of `category` at `home`.
pub fn aba<P: AccessibilityProvider + ?Sized>(
    provider: &P,
    category: PersonCategory,
    home: usize,
    extra_minutes: f64,
) -> Result<f64> {
    let utilities = provider.pattern_utilities(category, home, extra_minutes);
    aba_logsum(&utilities, provider.constant()).map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("{category} at cell index {home}: {m}")),
        other => other,
    })
}

/// Marginal utility of one unit of travel time for one person category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFactor {
    pub category: PersonCategory,
    /// Utility per minute; negative for a provider where travel is onerous.
    pub value: f64,
    /// Minutes.
    pub delta_t: f64,
}

impl ScalingFactor {
    pub fn new(category: PersonCategory, value: f64, delta_t: f64) -> Result<Self> {
        if !(value.abs() > SCALING_EPSILON) || !value.is_finite() {
            return Err(Error::DegenerateScaling {
                category: category.to_string(),
                cell: usize::MAX,
                value,
            });
        }
        Ok(ScalingFactor {
            category,
            value,
            delta_t,
        })
    }
}

/// `(A^{Δt} − A)/Δt` at `reference_cell`, where `A^{Δt}` adds `delta_t`
/// minutes to every travel time entering every pattern utility.
pub fn scaling_factor<P: AccessibilityProvider + ?Sized>(
    provider: &P,
    category: PersonCategory,
    reference_cell: usize,
    delta_t: f64,
) -> Result<ScalingFactor> {
    if !(delta_t > 0.0) {
        return Err(Error::Domain(format!("delta_t {delta_t} must be positive")));
    }
    let a = aba(provider, category, reference_cell, 0.0)?;
    let a_dt = aba(provider, category, reference_cell, delta_t)?;
    let value = (a_dt - a) / delta_t;
    ScalingFactor::new(category, value, delta_t).map_err(|_| Error::DegenerateScaling {
        category: category.to_string(),
        cell: reference_cell,
        value,
    })
}

/// `(A − A_original)/|s|`: accessibility change in minutes-equivalent
/// units, positive when accessibility improves.
pub fn normalize_aba(a: f64, a_original: f64, s: &ScalingFactor) -> f64 {
    (a - a_original) / s.value.abs()
}

/// Per-category household mean of normalised accessibility. A category
/// with no members is absent and contributes no utility term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CategoryAverages {
    values: [Option<f64>; 3],
}

impl CategoryAverages {
    pub fn get(&self, category: PersonCategory) -> Option<f64> {
        self.values[category.index()]
    }

    pub fn set(&mut self, category: PersonCategory, value: Option<f64>) {
        self.values[category.index()] = value;
    }

    /// Value entering the utility: the average, or zero when absent.
    pub fn term(&self, category: PersonCategory) -> f64 {
        self.get(category).unwrap_or(0.0)
    }
}

/// Means of member accessibility values grouped by category.
pub fn average_by_category(
    members: impl IntoIterator<Item = (PersonCategory, f64)>,
) -> CategoryAverages {
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (cat, v) in members {
        sums[cat.index()] += v;
        counts[cat.index()] += 1;
    }
    let mut out = CategoryAverages::default();
    for cat in PersonCategory::ALL {
        let i = cat.index();
        if counts[i] > 0 {
            out.set(cat, Some(sums[i] / counts[i] as f64));
        }
    }
    out
}

/// Household category averages of normalised accessibility at candidate
/// cell index `cell`, relative to the household's current home at `home`.
pub fn household_average_aba(
    surface: &AccessibilitySurface,
    household: &Household,
    home: usize,
    cell: usize,
) -> Result<CategoryAverages> {
    let mut members = Vec::with_capacity(household.n_members as usize);
    for cat in PersonCategory::ALL {
        let n = household.count(cat);
        if n == 0 {
            continue;
        }
        let v = surface.household_normalized(cat, home, cell)?;
        members.extend(std::iter::repeat_n((cat, v), n as usize));
    }
    Ok(average_by_category(members))
}
