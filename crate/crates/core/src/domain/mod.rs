//! Zones, households, market segments and scenarios.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod io;
pub mod network;
pub mod synthetic;

pub use network::{Edge, Graph};
pub use synthetic::{generate_synthetic_region, generate_synthetic_region_with, GeneratorConfig};

pub type CellId = u32;
pub type HouseholdId = u32;

/// Tolerance on the land-use share sum.
const SHARE_SUM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum City {
    Takasaki,
    Maebashi,
    Ota,
    Isesaki,
    Kiryu,
    Other,
}

impl City {
    /// Cities that carry their own dummy variable.
    pub const NAMED: [City; 5] = [
        City::Takasaki,
        City::Maebashi,
        City::Ota,
        City::Isesaki,
        City::Kiryu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            City::Takasaki => "Takasaki",
            City::Maebashi => "Maebashi",
            City::Ota => "Ota",
            City::Isesaki => "Isesaki",
            City::Kiryu => "Kiryu",
            City::Other => "Other",
        }
    }

    /// 1.0 when `self == city`, else 0.0.
    pub fn dummy(self, city: City) -> f64 {
        if self == city {
            1.0
        } else {
            0.0
        }
    }
}

/// One 1 km² analysis zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshCell {
    pub id: CellId,
    /// Centroid easting in metres.
    pub x: f64,
    /// Centroid northing in metres.
    pub y: f64,
    /// JPY per m².
    pub land_price: f64,
    pub housing_stock: u32,
    pub share_building: f64,
    pub share_agricultural: f64,
    pub share_freshwater: f64,
    pub share_forest: f64,
    pub share_industrial: f64,
    pub city: City,
    /// Thousands of employees.
    pub employees_primary_secondary: f64,
    /// Thousands of employees.
    pub employees_tertiary: f64,
    pub in_daa: bool,
    pub in_ufaa: bool,
    pub logsum_work: f64,
    pub logsum_education: f64,
    pub logsum_other: f64,
}

impl MeshCell {
    /// An empty cell at `(x, y)`: no housing, employment or land use, zero
    /// price, outside every named city and centre.
    pub fn at(id: CellId, x: f64, y: f64) -> Self {
        MeshCell {
            id,
            x,
            y,
            land_price: 0.0,
            housing_stock: 0,
            share_building: 0.0,
            share_agricultural: 0.0,
            share_freshwater: 0.0,
            share_forest: 0.0,
            share_industrial: 0.0,
            city: City::Other,
            employees_primary_secondary: 0.0,
            employees_tertiary: 0.0,
            in_daa: false,
            in_ufaa: false,
            logsum_work: 0.0,
            logsum_education: 0.0,
            logsum_other: 0.0,
        }
    }

    /// A cell can host new residents only if it has housing stock.
    pub fn is_residence_candidate(&self) -> bool {
        self.housing_stock > 0
    }

    pub fn land_use_shares(&self) -> [f64; 5] {
        [
            self.share_building,
            self.share_agricultural,
            self.share_freshwater,
            self.share_forest,
            self.share_industrial,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Data(format!("cell {}: {what}", self.id)));
        if !self.x.is_finite() || !self.y.is_finite() {
            return bad("centroid is not finite".into());
        }
        if self.is_residence_candidate() && !(self.land_price > 0.0 && self.land_price.is_finite())
        {
            return bad(format!("land price {} must be positive", self.land_price));
        }
        let shares = self.land_use_shares();
        if let Some(s) = shares.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return bad(format!("land-use share {s} outside [0, 1]"));
        }
        let sum: f64 = shares.iter().sum();
        if sum > 1.0 + SHARE_SUM_SLACK {
            return bad(format!("land-use shares sum to {sum} > 1"));
        }
        if self.employees_primary_secondary < 0.0 || self.employees_tertiary < 0.0 {
            return bad("negative employee count".into());
        }
        for (name, v) in [
            ("work", self.logsum_work),
            ("education", self.logsum_education),
            ("other", self.logsum_other),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} logsum is not finite"));
            }
        }
        Ok(())
    }
}

/// Household market segment, numbered 1 to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Segment {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl Segment {
    pub const ALL: [Segment; 5] = [
        Segment::S1,
        Segment::S2,
        Segment::S3,
        Segment::S4,
        Segment::S5,
    ];

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn index(self) -> usize {
        match self {
            Segment::S1 => 0,
            Segment::S2 => 1,
            Segment::S3 => 2,
            Segment::S4 => 3,
            Segment::S5 => 4,
        }
    }
}

impl TryFrom<u8> for Segment {
    type Error = String;

    fn try_from(n: u8) -> std::result::Result<Self, String> {
        match n {
            1 => Ok(Segment::S1),
            2 => Ok(Segment::S2),
            3 => Ok(Segment::S3),
            4 => Ok(Segment::S4),
            5 => Ok(Segment::S5),
            _ => Err(format!("segment {n} is not in 1..=5")),
        }
    }
}

impl From<Segment> for u8 {
    fn from(s: Segment) -> u8 {
        s.number()
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Segment #{}", self.number())
    }
}

/// Maps household head age and size onto a market segment.
///
/// Intervals are taken literally: ages (6,50] form segments 1 and 2,
/// (50,100] with three or more members is segment 3, (50,65) with one or
/// two members is segment 4 and [65,100] with one or two members is
/// segment 5.
pub fn assign_segment(age_of_head: u32, n_members: u32) -> Result<Segment> {
    if !(7..=100).contains(&age_of_head) {
        return Err(Error::Domain(format!(
            "age of household head {age_of_head} outside (6, 100]"
        )));
    }
    if n_members == 0 {
        return Err(Error::Domain(
            "household must have at least one member".into(),
        ));
    }
    let large = n_members >= 3;
    Ok(match (age_of_head, large) {
        (7..=50, true) => Segment::S1,
        (7..=50, false) => Segment::S2,
        (_, true) => Segment::S3,
        (51..=64, false) => Segment::S4,
        (_, false) => Segment::S5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonCategory {
    Worker,
    Student,
    Unemployed,
}

impl PersonCategory {
    pub const ALL: [PersonCategory; 3] = [
        PersonCategory::Worker,
        PersonCategory::Student,
        PersonCategory::Unemployed,
    ];

    pub fn index(self) -> usize {
        match self {
            PersonCategory::Worker => 0,
            PersonCategory::Student => 1,
            PersonCategory::Unemployed => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PersonCategory::Worker => "worker",
            PersonCategory::Student => "student",
            PersonCategory::Unemployed => "unemployed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for PersonCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Household {
    pub id: HouseholdId,
    pub home_cell: CellId,
    pub age_of_head: u32,
    pub n_workers: u32,
    pub n_students: u32,
    pub n_unemployed: u32,
    /// All members, including children under six who carry no ABA term.
    pub n_members: u32,
    pub segment: Segment,
}

impl Household {
    pub fn count(&self, category: PersonCategory) -> u32 {
        match category {
            PersonCategory::Worker => self.n_workers,
            PersonCategory::Student => self.n_students,
            PersonCategory::Unemployed => self.n_unemployed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_members == 0 {
            return Err(Error::Data(format!("household {} has no members", self.id)));
        }
        let adults = self.n_workers + self.n_students + self.n_unemployed;
        if adults > self.n_members {
            return Err(Error::Data(format!(
                "household {}: {adults} categorised members exceed n_members {}",
                self.id, self.n_members
            )));
        }
        let expected = assign_segment(self.age_of_head, self.n_members)
            .map_err(|e| Error::Data(format!("household {}: {e}", self.id)))?;
        if expected != self.segment {
            return Err(Error::Data(format!(
                "household {}: segment {} inconsistent with age {} and {} members (expected {})",
                self.id,
                self.segment.number(),
                self.age_of_head,
                self.n_members,
                expected.number()
            )));
        }
        Ok(())
    }
}

/// Scenario settings for one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub population_ratio: f64,
    pub vot_commute_multiplier: f64,
    pub vot_other_multiplier: f64,
    pub road_capacity_factor: f64,
    /// Land-price reduction applied to DAA cells.
    pub policy1_subsidy_rate: f64,
    /// Relative increase of tertiary employees inside the UFAA.
    pub policy2_ufaa_employee_boost: f64,
    pub n_monte_carlo_runs: usize,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: "base".into(),
            population_ratio: 0.8245,
            vot_commute_multiplier: 1.0,
            vot_other_multiplier: 1.0,
            road_capacity_factor: 1.0,
            policy1_subsidy_rate: 0.0,
            policy2_ufaa_employee_boost: 0.0,
            n_monte_carlo_runs: 10,
            seed: 2040,
        }
    }
}

impl ScenarioSpec {
    /// Names of the built-in scenarios, in reporting order.
    pub const PRESET_NAMES: [&'static str; 7] = [
        "base",
        "s1",
        "s2",
        "s1-policy1",
        "s2-policy1",
        "s1-policy2",
        "s2-policy2",
    ];

    /// Base scenario, the two automated-vehicle scenarios and both policies
    /// applied on top of each of them.
    pub fn preset(name: &str) -> Option<ScenarioSpec> {
        let (av, policy) = match name.split_once('-') {
            Some((av, policy)) => (av, Some(policy)),
            None => (name, None),
        };
        let mut spec = match av {
            "base" if policy.is_none() => ScenarioSpec::default(),
            "s1" => ScenarioSpec {
                vot_commute_multiplier: 0.75,
                vot_other_multiplier: 0.85,
                road_capacity_factor: 1.2,
                ..ScenarioSpec::default()
            },
            "s2" => ScenarioSpec {
                vot_commute_multiplier: 0.50,
                vot_other_multiplier: 0.70,
                road_capacity_factor: 1.2,
                ..ScenarioSpec::default()
            },
            _ => return None,
        };
        match policy {
            None => {}
            Some("policy1") => spec.policy1_subsidy_rate = 0.2,
            Some("policy2") => spec.policy2_ufaa_employee_boost = 0.3,
            Some(_) => return None,
        }
        spec.name = name.to_string();
        Some(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("scenario '{}': {m}", self.name)));
        if self.name.is_empty() {
            return Err(Error::Config("scenario name must not be empty".into()));
        }
        if !(self.population_ratio > 0.0 && self.population_ratio <= 1.0) {
            return fail(format!(
                "population_ratio {} not in (0, 1]",
                self.population_ratio
            ));
        }
        for (what, m) in [
            ("vot_commute_multiplier", self.vot_commute_multiplier),
            ("vot_other_multiplier", self.vot_other_multiplier),
        ] {
            if !(m > 0.0 && m <= 1.0) {
                return fail(format!("{what} {m} not in (0, 1]"));
            }
        }
        if !(self.road_capacity_factor >= 1.0 && self.road_capacity_factor.is_finite()) {
            return fail(format!(
                "road_capacity_factor {} must be >= 1",
                self.road_capacity_factor
            ));
        }
        if !(0.0..1.0).contains(&self.policy1_subsidy_rate) {
            return fail(format!(
                "policy1_subsidy_rate {} not in [0, 1)",
                self.policy1_subsidy_rate
            ));
        }
        if !(self.policy2_ufaa_employee_boost >= 0.0
            && self.policy2_ufaa_employee_boost.is_finite())
        {
            return fail(format!(
                "policy2_ufaa_employee_boost {} must be >= 0",
                self.policy2_ufaa_employee_boost
            ));
        }
        if self.n_monte_carlo_runs == 0 {
            return fail("n_monte_carlo_runs must be at least 1".into());
        }
        Ok(())
    }

    /// True when the scenario keeps the transport system of the base year.
    pub fn is_base_transport(&self) -> bool {
        self.vot_commute_multiplier == 1.0
            && self.vot_other_multiplier == 1.0
            && self.road_capacity_factor == 1.0
    }
}

/// One age band `[min_age, max_age)` of the household head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBand {
    pub age_min: u32,
    pub age_max: u32,
    /// Share of households still living where they lived five years ago.
    pub did_not_move_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingRateTable {
    bands: Vec<AgeBand>,
}

impl MovingRateTable {
    pub fn new(mut bands: Vec<AgeBand>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Data("moving-rate table has no bands".into()));
        }
        bands.sort_by_key(|b| b.age_min);
        for b in &bands {
            if b.age_min >= b.age_max {
                return Err(Error::Data(format!(
                    "age band [{}, {}) is empty",
                    b.age_min, b.age_max
                )));
            }
            if !(0.0..=1.0).contains(&b.did_not_move_ratio) {
                return Err(Error::Data(format!(
                    "did-not-move ratio {} outside [0, 1]",
                    b.did_not_move_ratio
                )));
            }
        }
        for w in bands.windows(2) {
            if w[0].age_max != w[1].age_min {
                return Err(Error::Data(format!(
                    "age bands [{}, {}) and [{}, {}) leave a gap or overlap",
                    w[0].age_min, w[0].age_max, w[1].age_min, w[1].age_max
                )));
            }
        }
        Ok(MovingRateTable { bands })
    }

    pub fn bands(&self) -> &[AgeBand] {
        &self.bands
    }

    pub fn ratio_for(&self, age_of_head: u32) -> Result<f64> {
        self.bands
            .iter()
            .find(|b| (b.age_min..b.age_max).contains(&age_of_head))
            .map(|b| b.did_not_move_ratio)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "age {age_of_head} not covered by the moving-rate table"
                ))
            })
    }
}

impl Default for MovingRateTable {
    /// Only the two ends are anchored: every household in the youngest band
    /// moves, the oldest band moves with probability 0.161 over 25 years.
    /// Intermediate bands are illustrative.
    fn default() -> Self {
        let bands = [
            (7, 30, 0.20),
            (30, 40, 0.55),
            (40, 50, 0.75),
            (50, 60, 0.85),
            (60, 70, 0.90),
            (70, 80, 0.93),
            (80, 85, 0.95),
            (85, 101, 0.839_f64.powf(0.2)),
        ]
        .into_iter()
        .map(|(age_min, age_max, did_not_move_ratio)| AgeBand {
            age_min,
            age_max,
            did_not_move_ratio,
        })
        .collect();
        MovingRateTable::new(bands).expect("default moving-rate table is valid")
    }
}

/// Cells, households and the road network of a study area.
#[derive(Debug, Clone)]
pub struct Region {
    cells: Vec<MeshCell>,
    households: Vec<Household>,
    edges: Vec<Edge>,
    index: HashMap<CellId, usize>,
    graph: Graph,
}

impl Region {
    pub fn new(cells: Vec<MeshCell>, households: Vec<Household>, edges: Vec<Edge>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Data("region has no cells".into()));
        }
        let mut index = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            c.validate()?;
            if index.insert(c.id, i).is_some() {
                return Err(Error::Data(format!("duplicate cell id {}", c.id)));
            }
        }
        let mut seen = HashMap::with_capacity(households.len());
        for h in &households {
            h.validate()?;
            if !index.contains_key(&h.home_cell) {
                return Err(Error::Data(format!(
                    "household {} lives in unknown cell {}",
                    h.id, h.home_cell
                )));
            }
            if seen.insert(h.id, ()).is_some() {
                return Err(Error::Data(format!("duplicate household id {}", h.id)));
            }
        }
        let mut links = Vec::with_capacity(edges.len());
        for e in &edges {
            let a = *index.get(&e.from_cell).ok_or_else(|| {
                Error::Data(format!("edge references unknown cell {}", e.from_cell))
            })?;
            let b = *index.get(&e.to_cell).ok_or_else(|| {
                Error::Data(format!("edge references unknown cell {}", e.to_cell))
            })?;
            links.push((a, b, e.length_m));
        }
        let graph = Graph::undirected(cells.len(), links)?;
        Ok(Region {
            cells,
            households,
            edges,
            index,
            graph,
        })
    }

    pub fn cells(&self) -> &[MeshCell] {
        &self.cells
    }

    pub fn households(&self) -> &[Household] {
        &self.households
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn index_of(&self, id: CellId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Index of a household's home cell; households are validated on
    /// construction so this cannot fail for members of the region.
    pub fn home_index(&self, household: &Household) -> Result<usize> {
        self.index_of(household.home_cell).ok_or_else(|| {
            Error::Data(format!(
                "household {} lives in unknown cell {}",
                household.id, household.home_cell
            ))
        })
    }

    pub fn cell_ids(&self) -> Vec<CellId> {
        self.cells.iter().map(|c| c.id).collect()
    }

    pub fn daa_cells(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i].in_daa)
            .collect()
    }

    pub fn ufaa_cells(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i].in_ufaa)
            .collect()
    }

    pub fn with_cells(&self, cells: Vec<MeshCell>) -> Result<Region> {
        Region::new(cells, self.households.clone(), self.edges.clone())
    }

    pub fn with_households(&self, households: Vec<Household>) -> Result<Region> {
        Region::new(self.cells.clone(), households, self.edges.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_examples() {
        assert_eq!(assign_segment(40, 4).unwrap(), Segment::S1);
        assert_eq!(assign_segment(70, 1).unwrap(), Segment::S5);
        assert_eq!(assign_segment(50, 2).unwrap(), Segment::S2);
        assert_eq!(assign_segment(65, 2).unwrap(), Segment::S5);
        assert_eq!(assign_segment(64, 2).unwrap(), Segment::S4);
        assert_eq!(assign_segment(51, 3).unwrap(), Segment::S3);
    }

    #[test]
    fn segment_domain_errors() {
        assert!(matches!(assign_segment(6, 2), Err(Error::Domain(_))));
        assert!(matches!(assign_segment(101, 2), Err(Error::Domain(_))));
        assert!(matches!(assign_segment(30, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn segmentation_is_a_partition() {
        // Brute-force against the printed interval table.
        let rows: [(fn(u32) -> bool, fn(u32) -> bool, Segment); 5] = [
            (|a| a > 6 && a <= 50, |m| m >= 3, Segment::S1),
            (|a| a > 6 && a <= 50, |m| m <= 2, Segment::S2),
            (|a| a > 50 && a <= 100, |m| m >= 3, Segment::S3),
            (|a| a > 50 && a < 65, |m| m <= 2, Segment::S4),
            (|a| (65..=100).contains(&a), |m| m <= 2, Segment::S5),
        ];
        for age in 7..=100 {
            for members in 1..=10 {
                let matching: Vec<Segment> = rows
                    .iter()
                    .filter(|(a, m, _)| a(age) && m(members))
                    .map(|r| r.2)
                    .collect();
                assert_eq!(matching.len(), 1, "age {age} members {members}");
                assert_eq!(assign_segment(age, members).unwrap(), matching[0]);
            }
        }
    }

    #[test]
    fn scenario_presets() {
        let base = ScenarioSpec::preset("base").unwrap();
        assert_eq!(base, ScenarioSpec::default());
        assert!(base.is_base_transport());
        let s1 = ScenarioSpec::preset("s1").unwrap();
        assert_eq!(
            (s1.vot_commute_multiplier, s1.vot_other_multiplier),
            (0.75, 0.85)
        );
        assert_eq!(s1.road_capacity_factor, 1.2);
        let s2 = ScenarioSpec::preset("s2").unwrap();
        assert_eq!(
            (s2.vot_commute_multiplier, s2.vot_other_multiplier),
            (0.50, 0.70)
        );
        assert_eq!(s2.road_capacity_factor, 1.2);
        let p = ScenarioSpec::preset("s2-policy1").unwrap();
        assert_eq!(p.policy1_subsidy_rate, 0.2);
        let p = ScenarioSpec::preset("s1-policy2").unwrap();
        assert_eq!(p.policy2_ufaa_employee_boost, 0.3);
        assert!(ScenarioSpec::preset("base-policy1").is_none());
        assert!(ScenarioSpec::preset("s3").is_none());
        for name in ScenarioSpec::PRESET_NAMES {
            ScenarioSpec::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn scenario_validation() {
        let mut s = ScenarioSpec::default();
        s.population_ratio = 0.0;
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::default();
        s.road_capacity_factor = 0.9;
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::default();
        s.policy1_subsidy_rate = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn moving_table_rejects_gaps_and_overlaps() {
        let band = |a, b| AgeBand {
            age_min: a,
            age_max: b,
            did_not_move_ratio: 0.5,
        };
        assert!(MovingRateTable::new(vec![band(7, 30), band(31, 101)]).is_err());
        assert!(MovingRateTable::new(vec![band(7, 30), band(29, 101)]).is_err());
        assert!(MovingRateTable::new(vec![band(7, 30), band(30, 101)]).is_ok());
        let bad = AgeBand {
            did_not_move_ratio: 1.2,
            ..band(7, 101)
        };
        assert!(MovingRateTable::new(vec![bad]).is_err());
    }

    #[test]
    fn default_moving_table_covers_segment_ages() {
        let t = MovingRateTable::default();
        for age in 7..=100 {
            t.ratio_for(age).unwrap();
        }
        assert!(t.ratio_for(6).is_err());
        assert!(t.ratio_for(101).is_err());
        let oldest = t.ratio_for(90).unwrap();
        assert!((1.0 - oldest.powi(5) - 0.161).abs() < 1e-9);
    }
}
