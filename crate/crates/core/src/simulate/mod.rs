//! Monte-Carlo relocation of households toward a forecast year.
//!
//! Each run decides per household whether it moves, from the five-year
//! did-not-move ratio of its head's age band, and lets movers pick a cell
//! from a sampled choice set with their segment's logit model.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accessibility::{AccessibilityEnv, AccessibilitySurface, Employment, LogsumConfig};
use crate::choice::{
    choice_probabilities, ChoiceContext, ChoiceSetSampler, Correction, SegmentCoefficients,
    DEFAULT_DRAWS,
};
use crate::domain::io::write_csv;
use crate::domain::{
    CellId, Household, HouseholdId, MeshCell, MovingRateTable, Region, ScenarioSpec,
};
use crate::hedonic::HedonicCoefficients;
use crate::metrics::{distance_histogram, CellDistances, Histogram, Indicators};
use crate::{Error, Result};

pub mod policy;

pub use policy::{apply_policy1, apply_policy2, Derived, LedgerEntry, Policy2Inputs, PolicyState};

/// Independent random streams of one household within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Moving = 0,
    Choice = 1,
    /// Choice sets drawn for estimation.
    Sampling = 2,
    /// Initial placement of synthetic households.
    Placement = 3,
}

/// Generator for household `household` in run `run` (below 2³⁰). Streams are keyed by
/// (seed, run, stream, household), so adding or removing households leaves
/// everyone else's draws unchanged.
pub fn household_rng(seed: u64, run: u32, stream: Stream, household: HouseholdId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((run as u64) << 34) | ((stream as u64) << 32) | household as u64);
    rng
}

/// Generator for the population subset of a scenario seed.
pub fn population_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Uniform random subset of `round(ratio·n)` households, in input order.
pub fn scale_population<R: Rng + ?Sized>(
    households: &[Household],
    ratio: f64,
    rng: &mut R,
) -> Result<Vec<Household>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain(format!(
            "population ratio {ratio} not in (0, 1]"
        )));
    }
    let n = households.len();
    let keep = (ratio * n as f64).round() as usize;
    if keep == n {
        return Ok(households.to_vec());
    }
    let mut idx = sample(rng, n, keep).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| households[i].clone()).collect())
}

/// Probability of moving within the 25-year horizon: one minus the fifth
/// power of the five-year did-not-move ratio.
pub fn moving_probability_from_ratio(did_not_move_ratio: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&did_not_move_ratio) {
        return Err(Error::Domain(format!(
            "did-not-move ratio {did_not_move_ratio} not in [0, 1]"
        )));
    }
    Ok(1.0 - did_not_move_ratio.powi(5))
}

pub fn moving_probability(age_of_head: u32, rates: &MovingRateTable) -> Result<f64> {
    moving_probability_from_ratio(rates.ratio_for(age_of_head)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingWeights {
    #[default]
    LandPrice,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_draws: usize,
    pub correction: Correction,
    pub sampling_weights: SamplingWeights,
    /// Draw the move decision anew in every run; otherwise run 0's decision
    /// is reused.
    pub resample_moves: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_draws: DEFAULT_DRAWS,
            correction: Correction::default(),
            sampling_weights: SamplingWeights::default(),
            resample_moves: true,
        }
    }
}

/// Who moves.
#[derive(Debug, Clone, Copy)]
pub enum MoveRule<'a> {
    ByAge(&'a MovingRateTable),
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdOutcome {
    pub household_id: HouseholdId,
    pub home_cell: CellId,
    pub moved: bool,
    /// Home cell for stayers.
    pub final_cell: CellId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub scenario: String,
    pub run: u32,
    pub outcomes: Vec<HouseholdOutcome>,
}

/// Everything fixed across the runs of one scenario.
pub struct RelocationModel<'a> {
    context: ChoiceContext<'a>,
    coefficients: &'a SegmentCoefficients,
    sampler: ChoiceSetSampler,
    index: HashMap<CellId, usize>,
    moves: MoveRule<'a>,
    resample_moves: bool,
    choice_stream: Stream,
    scenario: String,
}

impl<'a> RelocationModel<'a> {
    pub fn new(
        cells: &'a [MeshCell],
        surface: &'a AccessibilitySurface,
        coefficients: &'a SegmentCoefficients,
        moves: MoveRule<'a>,
        config: &SimulationConfig,
    ) -> Result<Self> {
        let context = ChoiceContext::new(cells, surface)?;
        let eligible: Vec<bool> = cells.iter().map(|c| c.is_residence_candidate()).collect();
        let weights: Vec<f64> = match config.sampling_weights {
            SamplingWeights::LandPrice => cells.iter().map(|c| c.land_price).collect(),
            SamplingWeights::Uniform => vec![1.0; cells.len()],
        };
        let sampler =
            ChoiceSetSampler::new(&weights, &eligible, config.n_draws, config.correction)?;
        Ok(RelocationModel {
            context,
            coefficients,
            sampler,
            index: cells.iter().enumerate().map(|(i, c)| (c.id, i)).collect(),
            moves,
            resample_moves: config.resample_moves,
            choice_stream: Stream::Choice,
            scenario: surface.scenario().to_string(),
        })
    }

    fn moves(&self, household: &Household, seed: u64, run: u32) -> Result<bool> {
        let p = match self.moves {
            MoveRule::Always => return Ok(true),
            MoveRule::Never => return Ok(false),
            MoveRule::ByAge(rates) => moving_probability(household.age_of_head, rates)?,
        };
        let r = if self.resample_moves { run } else { 0 };
        Ok(household_rng(seed, r, Stream::Moving, household.id).random::<f64>() < p)
    }

    fn relocate(&self, household: &Household, seed: u64, run: u32) -> Result<HouseholdOutcome> {
        let home = *self.index.get(&household.home_cell).ok_or_else(|| {
            Error::Data(format!(
                "household {} lives in unknown cell {}",
                household.id, household.home_cell
            ))
        })?;
        let stay = HouseholdOutcome {
            household_id: household.id,
            home_cell: household.home_cell,
            moved: false,
            final_cell: household.home_cell,
        };
        if !self.moves(household, seed, run)? {
            return Ok(stay);
        }
        let mut rng = household_rng(seed, run, self.choice_stream, household.id);
        let sampled = self.sampler.draw(&mut rng, None)?;
        let set = self.context.choice_set(household, home, &sampled)?;
        let p = choice_probabilities(&set, self.coefficients.get(household.segment))?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = p.len() - 1;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                pick = k;
                break;
            }
        }
        Ok(HouseholdOutcome {
            moved: true,
            final_cell: set.alternatives[pick].cell,
            ..stay
        })
    }

    pub fn cell_index(&self, id: CellId) -> Option<usize> {
        self.index.get(&id).copied()
    }
}

/// Re-places every household by one forced move under `coefficients`, so
/// that synthetic residences follow the choice model. Draws come from a
/// stream of their own and never coincide with simulation runs.
pub fn place_households(
    region: &Region,
    surface: &AccessibilitySurface,
    coefficients: &SegmentCoefficients,
    config: &SimulationConfig,
    seed: u64,
) -> Result<Region> {
    let mut model = RelocationModel::new(
        region.cells(),
        surface,
        coefficients,
        MoveRule::Always,
        config,
    )?;
    model.choice_stream = Stream::Placement;
    let run = simulate_relocation(&model, region.households(), seed, 0)?;
    let households = region
        .households()
        .iter()
        .zip(&run.outcomes)
        .map(|(h, o)| Household {
            home_cell: o.final_cell,
            ..h.clone()
        })
        .collect();
    region.with_households(households)
}

/// One Monte-Carlo run over `households`.
pub fn simulate_relocation(
    model: &RelocationModel,
    households: &[Household],
    seed: u64,
    run: u32,
) -> Result<SimulationRun> {
    let outcomes = households
        .par_iter()
        .map(|h| model.relocate(h, seed, run))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationRun {
        scenario: model.scenario.clone(),
        run,
        outcomes,
    })
}

impl SimulationRun {
    pub fn final_indices(&self, model: &RelocationModel) -> Result<Vec<usize>> {
        self.outcomes
            .iter()
            .map(|o| {
                model
                    .cell_index(o.final_cell)
                    .ok_or_else(|| Error::Data(format!("unknown cell {}", o.final_cell)))
            })
            .collect()
    }
}

/// Shared inputs of all scenarios of a project.
#[derive(Clone, Copy)]
pub struct ScenarioInputs<'a> {
    pub region: &'a Region,
    pub env: &'a AccessibilityEnv,
    pub coefficients: &'a SegmentCoefficients,
    pub hedonic: &'a HedonicCoefficients,
    pub logsum: &'a LogsumConfig,
    pub rates: &'a MovingRateTable,
    pub distances: &'a CellDistances,
    pub config: &'a SimulationConfig,
}

/// A scenario with its policy state and forecast-year population.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: ScenarioSpec,
    pub state: PolicyState,
    pub households: Vec<Household>,
}

impl PreparedScenario {
    pub fn surface(&self) -> &AccessibilitySurface {
        self.state
            .surface()
            .expect("prepared scenarios carry a surface")
    }
}

/// Scales the population, applies the employment policy and then the price
/// subsidy, and builds the accessibility surface.
pub fn prepare_scenario(
    inputs: &ScenarioInputs,
    scenario: &ScenarioSpec,
) -> Result<PreparedScenario> {
    scenario.validate()?;
    let households = scale_population(
        inputs.region.households(),
        scenario.population_ratio,
        &mut population_rng(scenario.seed),
    )?;
    let reference = Employment::from_cells(inputs.region.cells());
    let mut state = PolicyState::new(inputs.region.cells().to_vec());
    if scenario.policy2_ufaa_employee_boost > 0.0 {
        state = apply_policy2(
            state,
            scenario.policy2_ufaa_employee_boost,
            &Policy2Inputs {
                env: inputs.env,
                scenario,
                reference_employment: &reference,
                logsum: inputs.logsum,
                hedonic: inputs.hedonic,
            },
        )?;
    }
    if scenario.policy1_subsidy_rate > 0.0 {
        state = apply_policy1(state, scenario.policy1_subsidy_rate)?;
    }
    let state = state.ensure_surface(inputs.env, scenario, &reference)?;
    Ok(PreparedScenario {
        scenario: scenario.clone(),
        state,
        households,
    })
}

/// Per-run and run-averaged results of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub runs: Vec<SimulationRun>,
    pub run_indicators: Vec<Indicators>,
    pub mean_indicators: Indicators,
    /// Households per cell, one row per run.
    pub cell_counts: Vec<Vec<u32>>,
    pub mean_cell_counts: Vec<f64>,
    /// Run-averaged shares of residences by distance to the nearest DAA.
    pub daa_histogram: Histogram,
    pub ufaa_histogram: Histogram,
}

fn mean_histogram(hists: &[Histogram]) -> Histogram {
    let k = hists.len() as f64;
    let first = &hists[0];
    let n = first.counts.len();
    Histogram {
        edges: first.edges.clone(),
        counts: (0..n)
            .map(|b| (hists.iter().map(|h| h.counts[b] as f64).sum::<f64>() / k).round() as usize)
            .collect(),
        shares: (0..n)
            .map(|b| hists.iter().map(|h| h.shares[b]).sum::<f64>() / k)
            .collect(),
    }
}

/// Runs `n_runs` Monte-Carlo replications in parallel. Results do not depend
/// on the thread count.
pub fn run_scenario(
    inputs: &ScenarioInputs,
    prepared: &PreparedScenario,
    n_runs: usize,
    edges: &[f64],
) -> Result<ScenarioOutcome> {
    if n_runs == 0 {
        return Err(Error::Domain(
            "at least one Monte-Carlo run is needed".into(),
        ));
    }
    let cells = prepared.state.cells();
    let model = RelocationModel::new(
        cells,
        prepared.surface(),
        inputs.coefficients,
        MoveRule::ByAge(inputs.rates),
        inputs.config,
    )?;
    let seed = prepared.scenario.seed;
    let per_run = (0..n_runs as u32)
        .into_par_iter()
        .map(|r| {
            let run = simulate_relocation(&model, &prepared.households, seed, r)?;
            let idx = run.final_indices(&model)?;
            let ind = Indicators::compute(&idx, cells, inputs.distances)?;
            let mut counts = vec![0u32; cells.len()];
            for &i in &idx {
                counts[i] += 1;
            }
            let daa: Vec<f64> = idx.iter().map(|&i| inputs.distances.daa[i]).collect();
            let ufaa: Vec<f64> = idx.iter().map(|&i| inputs.distances.ufaa[i]).collect();
            Ok((
                run,
                ind,
                counts,
                distance_histogram(&daa, edges)?,
                distance_histogram(&ufaa, edges)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(n_runs);
    let mut run_indicators = Vec::with_capacity(n_runs);
    let mut cell_counts = Vec::with_capacity(n_runs);
    let mut daa_h = Vec::with_capacity(n_runs);
    let mut ufaa_h = Vec::with_capacity(n_runs);
    for (run, ind, counts, dh, uh) in per_run {
        runs.push(run);
        run_indicators.push(ind);
        cell_counts.push(counts);
        daa_h.push(dh);
        ufaa_h.push(uh);
    }
    let mean_cell_counts = (0..cells.len())
        .map(|c| cell_counts.iter().map(|r| r[c] as f64).sum::<f64>() / n_runs as f64)
        .collect();
    Ok(ScenarioOutcome {
        scenario: prepared.scenario.name.clone(),
        mean_indicators: Indicators::mean(&run_indicators)?,
        runs,
        run_indicators,
        cell_counts,
        mean_cell_counts,
        daa_histogram: mean_histogram(&daa_h),
        ufaa_histogram: mean_histogram(&ufaa_h),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub scenario: String,
    pub run: u32,
    pub household_id: HouseholdId,
    pub home_cell: CellId,
    pub moved: bool,
    pub final_cell: CellId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCountRow {
    pub scenario: String,
    pub cell_id: CellId,
    pub mean_households: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDifferenceRow {
    pub scenario: String,
    pub baseline: String,
    pub cell_id: CellId,
    pub mean_households: f64,
    pub baseline_mean_households: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndicatorRow {
    pub scenario: String,
    pub run: u32,
    pub indicator: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub scenario: String,
    pub target: String,
    pub bin_lower_m: f64,
    pub bin_upper_m: f64,
    pub mean_count: usize,
    pub share: f64,
}

impl ScenarioOutcome {
    pub fn outcome_rows(&self) -> Vec<OutcomeRow> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.outcomes.iter().map(move |o| OutcomeRow {
                    scenario: self.scenario.clone(),
                    run: r.run,
                    household_id: o.household_id,
                    home_cell: o.home_cell,
                    moved: o.moved,
                    final_cell: o.final_cell,
                })
            })
            .collect()
    }

    pub fn cell_count_rows(&self, cell_ids: &[CellId]) -> Vec<CellCountRow> {
        cell_ids
            .iter()
            .zip(&self.mean_cell_counts)
            .map(|(&cell_id, &m)| CellCountRow {
                scenario: self.scenario.clone(),
                cell_id,
                mean_households: m,
            })
            .collect()
    }

    pub fn difference_rows(
        &self,
        baseline: &ScenarioOutcome,
        cell_ids: &[CellId],
    ) -> Vec<CellDifferenceRow> {
        cell_ids
            .iter()
            .enumerate()
            .map(|(i, &cell_id)| CellDifferenceRow {
                scenario: self.scenario.clone(),
                baseline: baseline.scenario.clone(),
                cell_id,
                mean_households: self.mean_cell_counts[i],
                baseline_mean_households: baseline.mean_cell_counts[i],
                difference: self.mean_cell_counts[i] - baseline.mean_cell_counts[i],
            })
            .collect()
    }

    pub fn run_indicator_rows(&self) -> Vec<RunIndicatorRow> {
        self.run_indicators
            .iter()
            .zip(&self.runs)
            .flat_map(|(ind, run)| {
                crate::metrics::report::indicator_values(ind)
                    .into_iter()
                    .map(move |(indicator, value)| RunIndicatorRow {
                        scenario: self.scenario.clone(),
                        run: run.run,
                        indicator,
                        value,
                    })
            })
            .collect()
    }

    pub fn histogram_rows(&self) -> Vec<HistogramRow> {
        let mut rows = Vec::new();
        for (target, h) in [("daa", &self.daa_histogram), ("ufaa", &self.ufaa_histogram)] {
            for b in 0..h.counts.len() {
                rows.push(HistogramRow {
                    scenario: self.scenario.clone(),
                    target: target.to_string(),
                    bin_lower_m: h.edges[b],
                    bin_upper_m: h.edges[b + 1],
                    mean_count: h.counts[b],
                    share: h.shares[b],
                });
            }
        }
        rows
    }

    /// Writes `<name>_outcomes.csv`, `_cell_counts.csv`, `_run_indicators.csv`
    /// and `_histogram.csv` into `dir`.
    pub fn write(&self, dir: &Path, cell_ids: &[CellId]) -> Result<()> {
        let name = &self.scenario;
        write_csv(
            &dir.join(format!("{name}_outcomes.csv")),
            &self.outcome_rows(),
        )?;
        write_csv(
            &dir.join(format!("{name}_cell_counts.csv")),
            &self.cell_count_rows(cell_ids),
        )?;
        write_csv(
            &dir.join(format!("{name}_run_indicators.csv")),
            &self.run_indicator_rows(),
        )?;
        write_csv(
            &dir.join(format!("{name}_histogram.csv")),
            &self.histogram_rows(),
        )
    }
}
