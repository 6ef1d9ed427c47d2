use serde::{Deserialize, Serialize};

use super::{AccessibilityProvider, AccessibilitySurface};
use crate::domain::{MeshCell, PersonCategory, Region, ScenarioSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TravelTimeConfig {
    pub speed_kmh: f64,
    /// Travel time of a tour that stays inside the home cell.
    pub intrazonal_minutes: f64,
}

impl Default for TravelTimeConfig {
    fn default() -> Self {
        TravelTimeConfig {
            speed_kmh: 30.0,
            intrazonal_minutes: 3.0,
        }
    }
}

/// Dense origin-destination travel times in minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimes {
    n: usize,
    minutes: Vec<f64>,
}

impl TravelTimes {
    pub fn from_matrix(n: usize, minutes: Vec<f64>) -> Result<Self> {
        if minutes.len() != n * n {
            return Err(Error::Data(format!(
                "travel-time matrix has {} entries, expected {}",
                minutes.len(),
                n * n
            )));
        }
        if minutes.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::Data("travel times must be non-negative".into()));
        }
        Ok(TravelTimes { n, minutes })
    }

    /// Converts a row-major distance matrix in metres. Unreachable pairs
    /// stay infinite and drop out of every pattern set.
    pub fn from_distances(n: usize, distances_m: &[f64], cfg: &TravelTimeConfig) -> Result<Self> {
        if !(cfg.speed_kmh > 0.0) {
            return Err(Error::Config(format!(
                "speed {} must be positive",
                cfg.speed_kmh
            )));
        }
        let per_metre = 60.0 / (cfg.speed_kmh * 1000.0);
        let minutes = distances_m
            .iter()
            .enumerate()
            .map(|(k, d)| {
                if k / n == k % n {
                    cfg.intrazonal_minutes
                } else {
                    d * per_metre
                }
            })
            .collect();
        Self::from_matrix(n, minutes)
    }

    pub fn from_region(region: &Region, cfg: &TravelTimeConfig) -> Result<Self> {
        Self::from_distances(region.n_cells(), &region.graph().all_pairs(), cfg)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, origin: usize, destination: usize) -> f64 {
        self.minutes[origin * self.n + destination]
    }

    pub fn row(&self, origin: usize) -> &[f64] {
        &self.minutes[origin * self.n..(origin + 1) * self.n]
    }
}

/// Employment sector providing the attraction of a tour purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Tertiary,
    PrimarySecondary,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Work,
    Education,
    Other,
}

impl Purpose {
    pub const ALL: [Purpose; 3] = [Purpose::Work, Purpose::Education, Purpose::Other];

    pub fn is_commute(self) -> bool {
        matches!(self, Purpose::Work | Purpose::Education)
    }

    /// Tour purposes in the daily pattern set of each category.
    pub fn for_category(category: PersonCategory) -> &'static [Purpose] {
        match category {
            PersonCategory::Worker => &[Purpose::Work, Purpose::Other],
            PersonCategory::Student => &[Purpose::Education, Purpose::Other],
            PersonCategory::Unemployed => &[Purpose::Other],
        }
    }
}

/// Employee counts per cell, in thousands.
#[derive(Debug, Clone, PartialEq)]
pub struct Employment {
    pub primary_secondary: Vec<f64>,
    pub tertiary: Vec<f64>,
}

impl Employment {
    pub fn from_cells(cells: &[MeshCell]) -> Self {
        Employment {
            primary_secondary: cells
                .iter()
                .map(|c| c.employees_primary_secondary)
                .collect(),
            tertiary: cells.iter().map(|c| c.employees_tertiary).collect(),
        }
    }

    pub fn sector(&self, sector: Sector) -> Vec<f64> {
        match sector {
            Sector::Tertiary => self.tertiary.clone(),
            Sector::PrimarySecondary => self.primary_secondary.clone(),
            Sector::Total => self
                .primary_secondary
                .iter()
                .zip(&self.tertiary)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Gravity-form daily pattern utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// Disutility per minute of travel at full value of time.
    pub beta_time: f64,
    pub asc_work: f64,
    pub asc_education: f64,
    pub asc_other: f64,
    pub work_sector: Sector,
    pub education_sector: Sector,
    pub other_sector: Sector,
    /// Employees per unit of the cell employee columns.
    pub employee_scale: f64,
    pub constant: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            beta_time: 0.06,
            asc_work: 0.0,
            asc_education: 0.0,
            asc_other: -0.5,
            work_sector: Sector::Tertiary,
            education_sector: Sector::Tertiary,
            other_sector: Sector::Tertiary,
            employee_scale: 1000.0,
            constant: 0.0,
        }
    }
}

impl ProviderConfig {
    fn sector(&self, purpose: Purpose) -> Sector {
        match purpose {
            Purpose::Work => self.work_sector,
            Purpose::Education => self.education_sector,
            Purpose::Other => self.other_sector,
        }
    }

    fn asc(&self, purpose: Purpose) -> f64 {
        match purpose {
            Purpose::Work => self.asc_work,
            Purpose::Education => self.asc_education,
            Purpose::Other => self.asc_other,
        }
    }
}

/// Reference provider: one pattern per (tour purpose, destination) with
/// `V = ASC − β·m·t/c + ln(attraction)`, where `m` is the scenario value
/// of time multiplier of the purpose and `c` the road capacity factor.
#[derive(Debug, Clone)]
pub struct GravityProvider<'a> {
    times: &'a TravelTimes,
    config: &'a ProviderConfig,
    vot_commute: f64,
    vot_other: f64,
    capacity_factor: f64,
    ln_attraction: [Vec<f64>; 3],
}

impl<'a> GravityProvider<'a> {
    pub fn new(
        times: &'a TravelTimes,
        config: &'a ProviderConfig,
        employment: &Employment,
        scenario: &ScenarioSpec,
    ) -> Result<Self> {
        if employment.tertiary.len() != times.n() || employment.primary_secondary.len() != times.n()
        {
            return Err(Error::Contract(
                "employment and travel times cover different cells".into(),
            ));
        }
        let ln_attraction = Purpose::ALL.map(|p| {
            employment
                .sector(config.sector(p))
                .into_iter()
                .map(|e| {
                    if e > 0.0 {
                        (e * config.employee_scale).ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect::<Vec<_>>()
        });
        Ok(GravityProvider {
            times,
            config,
            vot_commute: scenario.vot_commute_multiplier,
            vot_other: scenario.vot_other_multiplier,
            capacity_factor: scenario.road_capacity_factor,
            ln_attraction,
        })
    }

    fn multiplier(&self, purpose: Purpose) -> f64 {
        if purpose.is_commute() {
            self.vot_commute
        } else {
            self.vot_other
        }
    }
}

impl AccessibilityProvider for GravityProvider<'_> {
    fn n_cells(&self) -> usize {
        self.times.n()
    }

    fn pattern_utilities(&self, category: PersonCategory, home: usize, extra: f64) -> Vec<f64> {
        let row = self.times.row(home);
        let mut out = Vec::with_capacity(row.len() * 2);
        for &purpose in Purpose::for_category(category) {
            let attraction = &self.ln_attraction[purpose as usize];
            let slope = self.config.beta_time * self.multiplier(purpose);
            let asc = self.config.asc(purpose);
            for (d, &t) in row.iter().enumerate() {
                if attraction[d].is_finite() && t.is_finite() {
                    out.push(asc + attraction[d] - slope * (t / self.capacity_factor + extra));
                }
            }
        }
        out
    }

    fn constant(&self) -> f64 {
        self.config.constant
    }
}

/// Everything needed to build accessibility surfaces for a region.
#[derive(Debug, Clone)]
pub struct AccessibilityEnv {
    pub cell_ids: Vec<u32>,
    pub times: TravelTimes,
    pub config: ProviderConfig,
}

impl AccessibilityEnv {
    pub fn from_region(
        region: &Region,
        travel: &TravelTimeConfig,
        config: ProviderConfig,
    ) -> Result<Self> {
        Ok(AccessibilityEnv {
            cell_ids: region.cell_ids(),
            times: TravelTimes::from_region(region, travel)?,
            config,
        })
    }

    pub fn provider<'a>(
        &'a self,
        employment: &Employment,
        scenario: &ScenarioSpec,
    ) -> Result<GravityProvider<'a>> {
        GravityProvider::new(&self.times, &self.config, employment, scenario)
    }

    /// Surface for `scenario` with employment `scenario_employment`,
    /// normalised against the base transport system with
    /// `reference_employment`.
    pub fn surface(
        &self,
        scenario: &ScenarioSpec,
        scenario_employment: &Employment,
        reference_employment: &Employment,
    ) -> Result<AccessibilitySurface> {
        let scenario_provider = self.provider(scenario_employment, scenario)?;
        let reference_provider = self.provider(reference_employment, &ScenarioSpec::default())?;
        AccessibilitySurface::build(
            &scenario.name,
            self.cell_ids.clone(),
            &scenario_provider,
            &reference_provider,
        )
    }
}

/// Destination logsums feeding the hedonic land-price covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogsumConfig {
    /// Decay per minute of each tour purpose, θ > 0. Distinct rates keep
    /// the three logsums from being collinear in the land-price model.
    pub theta_work: f64,
    pub theta_education: f64,
    pub theta_other: f64,
    pub employee_scale: f64,
    pub work_sector: Sector,
    pub education_sector: Sector,
    pub other_sector: Sector,
}

impl Default for LogsumConfig {
    fn default() -> Self {
        LogsumConfig {
            theta_work: 0.05,
            theta_education: 0.1,
            theta_other: 0.15,
            employee_scale: 1000.0,
            work_sector: Sector::Tertiary,
            education_sector: Sector::Tertiary,
            other_sector: Sector::Tertiary,
        }
    }
}

/// `ln Σ_d scale·E_d·exp(−θ·t(o, d))` for every origin.
pub fn tertiary_logsum_for_hedonic(
    times: &TravelTimes,
    employees: &[f64],
    theta: f64,
    employee_scale: f64,
) -> Result<Vec<f64>> {
    if !(theta > 0.0) {
        return Err(Error::Config(format!(
            "logsum decay θ = {theta} must be positive"
        )));
    }
    if employees.len() != times.n() {
        return Err(Error::Contract(
            "employee vector and travel times differ in size".into(),
        ));
    }
    (0..times.n())
        .map(|o| {
            let terms: Vec<f64> = times
                .row(o)
                .iter()
                .zip(employees)
                .filter(|(t, e)| **e > 0.0 && t.is_finite())
                .map(|(t, e)| (e * employee_scale).ln() - theta * t)
                .collect();
            if terms.is_empty() {
                return Err(Error::Domain(format!(
                    "cell index {o} reaches no employment; logsum would be -inf"
                )));
            }
            super::aba_logsum(&terms, 0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TourLogsums {
    pub work: Vec<f64>,
    pub education: Vec<f64>,
    pub other: Vec<f64>,
}

pub fn tour_logsums(
    times: &TravelTimes,
    employment: &Employment,
    cfg: &LogsumConfig,
) -> Result<TourLogsums> {
    let one = |sector, theta| {
        tertiary_logsum_for_hedonic(times, &employment.sector(sector), theta, cfg.employee_scale)
    };
    Ok(TourLogsums {
        work: one(cfg.work_sector, cfg.theta_work)?,
        education: one(cfg.education_sector, cfg.theta_education)?,
        other: one(cfg.other_sector, cfg.theta_other)?,
    })
}
