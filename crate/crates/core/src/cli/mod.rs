//! The `resloc` command pipeline: generate or load data, fit the land-price
//! and residential choice models, validate on the holdout households and
//! simulate scenarios.
//!
//! All outputs go below the project output directory:
//!
//! * `data/` cells, households, road links and the moving-rate table
//! * `models/` fitted coefficients, estimation reports and the split
//! * `validate/` observed-vs-simulated indicators
//! * `simulate/` per-scenario outcomes, cell counts, histograms, surfaces
//!   and the comparison tables
//! * `report/` differences rebuilt from `simulate/indicators.csv`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accessibility::{AccessibilityEnv, AccessibilitySurface, Employment};
use crate::choice::report::{format_table, write_reports};
use crate::choice::{
    estimate, residential_names, ChoiceContext, ChoiceSetSampler, EstimationOptions,
    EstimationResult, NonIdentified, SegmentCoefficients,
};
use crate::domain::io::{
    read_cells, read_csv, read_edges, read_households, read_moving_rates, write_cells, write_csv,
    write_edges, write_households, write_moving_rates, write_text,
};
use crate::domain::{
    generate_synthetic_region_with, Household, HouseholdId, MovingRateTable, Region, ScenarioSpec,
    Segment,
};
use crate::hedonic::{fit_hedonic, HedonicCoefficients};
use crate::metrics::report::IndicatorRow;
use crate::metrics::{
    default_edges, format_percent, percent_change, CellDistances, IndicatorReport, Indicators,
};
use crate::simulate::{
    household_rng, place_households, prepare_scenario, run_scenario, simulate_relocation, MoveRule,
    RelocationModel, SamplingWeights, ScenarioInputs, ScenarioOutcome, Stream,
};
use crate::{Error, Result};

pub mod config;

pub use config::{DataPaths, Placement, PresetPaths, ProjectConfig, SyntheticConfig};

pub const OBSERVED_LABEL: &str = "Observed results";
pub const SIMULATED_LABEL: &str = "Simulated results";

#[derive(Debug, Parser)]
#[command(
    name = "resloc",
    version,
    about = "Residential location choice microsimulation"
)]
pub struct Cli {
    /// Project configuration (TOML); defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the project seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of Monte-Carlo runs.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Use the bundled coefficient tables instead of fitted ones.
    #[arg(long, global = true)]
    pub preset: bool,
    /// Scenario to simulate, or the baseline for report-diff; repeatable.
    #[arg(long = "scenario", global = true)]
    pub scenarios: Vec<String>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Writes a synthetic study area.
    Generate,
    /// Fits the land-price model and the five segment choice models.
    Estimate,
    /// Simulates the holdout households and compares with their residences.
    Validate,
    /// Runs scenarios and compares them with the baseline.
    Simulate,
    /// Rebuilds percent differences from the simulation indicators.
    ReportDiff,
}

/// Config with command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub preset: bool,
    pub runs: Option<usize>,
    pub scenarios: Vec<String>,
}

/// Fitted or preset coefficients.
#[derive(Debug, Clone)]
pub struct Models {
    pub hedonic: HedonicCoefficients,
    pub choice: SegmentCoefficients,
}

/// Row of `models/split.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub household_id: HouseholdId,
    pub subset: String,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Household-level split: indices of the estimation and validation
/// subsets, both in input order.
pub fn split_households(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!(
            "split fraction {fraction} not in (0, 1)"
        )));
    }
    let k = (fraction * n as f64).round() as usize;
    if k == 0 || k == n {
        return Err(Error::Domain(format!(
            "split fraction {fraction} of {n} households leaves a subset empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 1);
    let mut in_est = vec![false; n];
    for i in sample(&mut rng, n, k) {
        in_est[i] = true;
    }
    Ok((0..n).partition(|&i| in_est[i]))
}

impl Project {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => ProjectConfig::read(p)?,
            None => ProjectConfig::default(),
        };
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        if let Some(o) = &cli.out {
            config.out_dir = o.clone();
        }
        if cli.runs == Some(0) {
            return Err(Error::Config("--runs must be at least 1".into()));
        }
        Ok(Project {
            config,
            preset: cli.preset,
            runs: cli.runs,
            scenarios: cli.scenarios.clone(),
        })
    }

    pub fn new(config: ProjectConfig) -> Self {
        Project {
            config,
            preset: false,
            runs: None,
            scenarios: Vec::new(),
        }
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.config.out_dir.join(sub)
    }

    fn data_paths(&self) -> DataPaths {
        match &self.config.data {
            Some(d) => d.clone(),
            None => {
                let dir = self.dir("data");
                DataPaths {
                    cells: dir.join("cells.csv"),
                    households: dir.join("households.csv"),
                    edges: dir.join("edges.csv"),
                    moving_rates: Some(dir.join("moving_rates.csv")),
                }
            }
        }
    }

    pub fn load_region(&self) -> Result<(Region, MovingRateTable)> {
        let p = self.data_paths();
        for f in [&p.cells, &p.households, &p.edges] {
            if !f.exists() {
                return Err(Error::Config(format!(
                    "missing input {}; run `generate` or set [data] paths",
                    f.display()
                )));
            }
        }
        let region = Region::new(
            read_cells(&p.cells)?,
            read_households(&p.households)?,
            read_edges(&p.edges)?,
        )?;
        let rates = match p.moving_rates.filter(|m| m.exists()) {
            Some(m) => read_moving_rates(&m)?,
            None => MovingRateTable::default(),
        };
        Ok((region, rates))
    }

    pub fn env(&self, region: &Region) -> Result<AccessibilityEnv> {
        AccessibilityEnv::from_region(region, &self.config.travel, self.config.provider.clone())
    }

    fn preset_models(&self) -> Result<Models> {
        let p = &self.config.presets;
        Ok(Models {
            hedonic: match &p.hedonic {
                Some(path) => HedonicCoefficients::read(path)?,
                None => HedonicCoefficients::preset(),
            },
            choice: match &p.choice {
                Some(path) => SegmentCoefficients::read(path)?,
                None => SegmentCoefficients::preset(),
            },
        })
    }

    /// Preset coefficients under `--preset`, else those written by
    /// `estimate`.
    pub fn models(&self) -> Result<Models> {
        if self.preset {
            return self.preset_models();
        }
        let dir = self.dir("models");
        let (h, c) = (dir.join("hedonic.txt"), dir.join("residential_choice.txt"));
        if !h.exists() || !c.exists() {
            return Err(Error::Config(format!(
                "no fitted models in {}; run `estimate` first or pass --preset",
                dir.display()
            )));
        }
        Ok(Models {
            hedonic: HedonicCoefficients::read(&h)?,
            choice: SegmentCoefficients::read(&c)?,
        })
    }

    fn sampler(&self, region: &Region) -> Result<ChoiceSetSampler> {
        let cells = region.cells();
        let eligible: Vec<bool> = cells.iter().map(|c| c.is_residence_candidate()).collect();
        let weights: Vec<f64> = match self.config.simulation.sampling_weights {
            SamplingWeights::LandPrice => cells.iter().map(|c| c.land_price).collect(),
            SamplingWeights::Uniform => vec![1.0; cells.len()],
        };
        let s = &self.config.simulation;
        ChoiceSetSampler::new(&weights, &eligible, s.n_draws, s.correction)
    }
}

fn base_surface(env: &AccessibilityEnv, region: &Region) -> Result<AccessibilitySurface> {
    let employment = Employment::from_cells(region.cells());
    env.surface(&ScenarioSpec::default(), &employment, &employment)
}

fn dataset_summary(region: &Region) -> String {
    let mut out = String::new();
    let cells = region.cells();
    let _ = writeln!(
        out,
        "cells: {} (DAA {}, UFAA {}, with housing {})",
        cells.len(),
        region.daa_cells().len(),
        region.ufaa_cells().len(),
        cells.iter().filter(|c| c.housing_stock > 0).count()
    );
    let _ = writeln!(out, "road links: {}", region.edges().len());
    let hh = region.households();
    let in_daa = hh
        .iter()
        .filter(|h| {
            region
                .index_of(h.home_cell)
                .is_some_and(|i| cells[i].in_daa)
        })
        .count();
    let _ = writeln!(
        out,
        "households: {} ({} in DAA, {:.1}%)",
        hh.len(),
        in_daa,
        100.0 * in_daa as f64 / hh.len().max(1) as f64
    );
    for seg in Segment::ALL {
        let n = hh.iter().filter(|h| h.segment == seg).count();
        let _ = writeln!(out, "  {seg}: {n}");
    }
    out
}

pub fn cmd_generate(project: &Project) -> Result<String> {
    let c = &project.config;
    let s = &c.synthetic;
    let mut region = generate_synthetic_region_with(
        &s.generator,
        &c.travel,
        &c.logsum,
        s.n_cells,
        s.n_households,
        c.seed,
    )?;
    if s.placement == Placement::Choice {
        let env = project.env(&region)?;
        let surface = base_surface(&env, &region)?;
        let choice = project.preset_models()?.choice;
        region = place_households(&region, &surface, &choice, &c.simulation, c.seed)?;
    }
    let dir = project.dir("data");
    create_dir(&dir)?;
    write_cells(&dir.join("cells.csv"), region.cells())?;
    write_households(&dir.join("households.csv"), region.households())?;
    write_edges(&dir.join("edges.csv"), region.edges())?;
    write_moving_rates(&dir.join("moving_rates.csv"), &MovingRateTable::default())?;
    Ok(format!(
        "wrote {}\n{}",
        dir.display(),
        dataset_summary(&region)
    ))
}

/// Sampled choice sets of `households`, each with its current home as the
/// chosen alternative.
fn estimation_sets(
    project: &Project,
    region: &Region,
    context: &ChoiceContext,
    sampler: &ChoiceSetSampler,
    households: &[&Household],
) -> Result<Vec<crate::choice::ChoiceSet>> {
    households
        .par_iter()
        .map(|h| {
            let home = region.home_index(h)?;
            let mut rng = household_rng(project.config.seed, 0, Stream::Sampling, h.id);
            let sampled = sampler.draw(&mut rng, Some(home))?;
            context.choice_set(h, home, &sampled)
        })
        .collect()
}

pub fn cmd_estimate(project: &Project) -> Result<String> {
    let c = &project.config;
    let (region, _) = project.load_region()?;
    let hh = region.households();
    let (est, val) = split_households(hh.len(), c.split_fraction, c.seed)?;
    let dir = project.dir("models");
    create_dir(&dir)?;
    let mut subset = vec!["validation"; hh.len()];
    for &i in &est {
        subset[i] = "estimation";
    }
    let split_rows: Vec<SplitRow> = hh
        .iter()
        .zip(subset)
        .map(|(h, s)| SplitRow {
            household_id: h.id,
            subset: s.to_string(),
        })
        .collect();
    write_csv(&dir.join("split.csv"), &split_rows)?;

    let mut out = format!(
        "households: {} estimation, {} validation\n\n",
        est.len(),
        val.len()
    );
    let presets = project.preset_models()?;
    let hedonic = match fit_hedonic(region.cells()) {
        Ok(fit) => {
            let report = fit.report();
            write_text(&dir.join("hedonic_report.txt"), &report)?;
            out.push_str(&report);
            fit.coefficients()
        }
        Err(e) => {
            let _ = writeln!(
                out,
                "land-price model failed [{}]: {e}; preset coefficients kept",
                e.category()
            );
            presets.hedonic
        }
    };
    hedonic.write(&dir.join("hedonic.txt"), "log land price coefficients")?;
    out.push('\n');

    let env = project.env(&region)?;
    let surface = base_surface(&env, &region)?;
    let context = ChoiceContext::new(region.cells(), &surface)?;
    let sampler = project.sampler(&region)?;
    let options = EstimationOptions {
        non_identified: NonIdentified::FixAtZero,
        ..EstimationOptions::default()
    };
    let names = residential_names();
    let mut choice = presets.choice.clone();
    let mut results: Vec<(Segment, EstimationResult)> = Vec::new();
    for seg in Segment::ALL {
        let members: Vec<&Household> = est
            .iter()
            .map(|&i| &hh[i])
            .filter(|h| h.segment == seg)
            .collect();
        let fitted = if members.is_empty() {
            Err(Error::Data("no households in the estimation subset".into()))
        } else {
            estimation_sets(project, &region, &context, &sampler, &members)
                .and_then(|sets| estimate(&sets, &names, &options))
        };
        match fitted {
            Ok(r) => {
                choice.set(
                    seg,
                    crate::choice::Coefficients::new(names.clone(), r.coefficients.clone())?,
                )?;
                results.push((seg, r));
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "segment {seg} failed [{}]: {e}; preset coefficients kept",
                    e.category()
                );
            }
        }
    }
    write_reports(&dir, &results)?;
    let table = format_table(&results);
    write_text(&dir.join("choice_table.txt"), &table)?;
    choice.write(
        &dir.join("residential_choice.txt"),
        "residential location choice coefficients",
    )?;
    out.push_str(&table);
    Ok(out)
}

fn holdout(project: &Project, region: &Region) -> Result<Vec<Household>> {
    let hh = region.households();
    let (_, val) = split_households(hh.len(), project.config.split_fraction, project.config.seed)?;
    Ok(val.into_iter().map(|i| hh[i].clone()).collect())
}

/// Observed and run-averaged simulated indicators of the holdout
/// households when every one of them relocates.
pub fn validation_report(project: &Project) -> Result<IndicatorReport> {
    let c = &project.config;
    let (region, _) = project.load_region()?;
    let models = project.models()?;
    let households = holdout(project, &region)?;
    let env = project.env(&region)?;
    let surface = base_surface(&env, &region)?;
    let distances = CellDistances::compute(&region, c.disconnected)?;
    let cells = region.cells();
    let observed_idx = households
        .iter()
        .map(|h| region.home_index(h))
        .collect::<Result<Vec<_>>>()?;
    let observed = Indicators::compute(&observed_idx, cells, &distances)?;
    let model = RelocationModel::new(
        cells,
        &surface,
        &models.choice,
        MoveRule::Always,
        &c.simulation,
    )?;
    let runs = project.runs.unwrap_or(c.validation_runs);
    let per_run = (0..runs as u32)
        .map(|r| {
            let run = simulate_relocation(&model, &households, c.seed, r)?;
            Indicators::compute(&run.final_indices(&model)?, cells, &distances)
        })
        .collect::<Result<Vec<_>>>()?;
    let simulated = Indicators::mean(&per_run)?;
    IndicatorReport::new(vec![
        (OBSERVED_LABEL.into(), observed),
        (SIMULATED_LABEL.into(), simulated),
    ])
    .with_baseline(OBSERVED_LABEL)
}

pub fn cmd_validate(project: &Project) -> Result<String> {
    let report = validation_report(project)?;
    let dir = project.dir("validate");
    create_dir(&dir)?;
    report.write_csv(&dir.join("indicators.csv"))?;
    let table = report.distance_table();
    write_text(&dir.join("table.txt"), &table)?;
    Ok(table)
}

fn scenario_names(project: &Project) -> Result<Vec<String>> {
    let names = if project.scenarios.is_empty() {
        project.config.run.clone()
    } else {
        project.scenarios.clone()
    };
    if names.is_empty() {
        return Err(Error::Config("no scenarios to simulate".into()));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::Config(format!("scenario '{n}' requested twice")));
        }
    }
    Ok(names)
}

/// Results of `simulate`, in request order.
#[derive(Debug, Clone)]
pub struct SimulationResults {
    pub baseline: String,
    pub outcomes: Vec<ScenarioOutcome>,
    pub report: IndicatorReport,
}

pub fn simulate_scenarios(project: &Project) -> Result<SimulationResults> {
    let c = &project.config;
    let names = scenario_names(project)?;
    let specs = names
        .iter()
        .map(|n| {
            let mut s = c.scenario(n)?;
            if let Some(r) = project.runs {
                s.n_monte_carlo_runs = r;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let (region, rates) = project.load_region()?;
    let models = project.models()?;
    let env = project.env(&region)?;
    let distances = CellDistances::compute(&region, c.disconnected)?;
    let inputs = ScenarioInputs {
        region: &region,
        env: &env,
        coefficients: &models.choice,
        hedonic: &models.hedonic,
        logsum: &c.logsum,
        rates: &rates,
        distances: &distances,
        config: &c.simulation,
    };
    let dir = project.dir("simulate");
    create_dir(&dir)?;
    let edges = default_edges();
    let cell_ids = region.cell_ids();
    let mut outcomes = Vec::with_capacity(specs.len());
    for spec in &specs {
        let prepared = prepare_scenario(&inputs, spec)?;
        let outcome = run_scenario(&inputs, &prepared, spec.n_monte_carlo_runs, &edges)?;
        outcome.write(&dir, &cell_ids)?;
        prepared
            .surface()
            .write_csv(&dir.join(format!("{}_surface.csv", spec.name)))?;
        let ledger: Vec<String> = prepared
            .state
            .ledger()
            .iter()
            .map(|e| format!("{e:?}"))
            .collect();
        write_text(
            &dir.join(format!("{}_policy_log.txt", spec.name)),
            &(ledger.join("\n") + "\n"),
        )?;
        outcomes.push(outcome);
    }
    let baseline = if names.iter().any(|n| n == "base") {
        "base".to_string()
    } else {
        names[0].clone()
    };
    let b = names.iter().position(|n| *n == baseline).unwrap_or(0);
    for (k, o) in outcomes.iter().enumerate() {
        if k != b {
            write_csv(
                &dir.join(format!("{}_cell_diff.csv", o.scenario)),
                &o.difference_rows(&outcomes[b], &cell_ids),
            )?;
        }
    }
    let report = IndicatorReport::new(
        outcomes
            .iter()
            .map(|o| (o.scenario.clone(), o.mean_indicators))
            .collect(),
    )
    .with_baseline(&baseline)?;
    Ok(SimulationResults {
        baseline,
        outcomes,
        report,
    })
}

pub fn cmd_simulate(project: &Project) -> Result<String> {
    let results = simulate_scenarios(project)?;
    let dir = project.dir("simulate");
    results.report.write_csv(&dir.join("indicators.csv"))?;
    let text = format!(
        "{}\n{}",
        results.report.comparison_table()?,
        results.report.distance_table()
    );
    write_text(&dir.join("comparison.txt"), &text)?;
    Ok(text)
}

/// Row of `report/diff.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub indicator: String,
    pub scenario: String,
    pub baseline: String,
    pub value: f64,
    pub baseline_value: f64,
    pub percent_change: Option<f64>,
}

/// Percent changes of every indicator against `baseline`. Indicators with
/// a zero baseline value get no percent change.
pub fn diff_rows(rows: &[IndicatorRow], baseline: &str) -> Result<Vec<DiffRow>> {
    let base: BTreeMap<&str, f64> = rows
        .iter()
        .filter(|r| r.scenario == baseline)
        .map(|r| (r.indicator.as_str(), r.value))
        .collect();
    if base.is_empty() {
        return Err(Error::Config(format!(
            "baseline '{baseline}' not found in the indicators"
        )));
    }
    rows.iter()
        .map(|r| {
            let b = *base.get(r.indicator.as_str()).ok_or_else(|| {
                Error::Data(format!("baseline has no indicator '{}'", r.indicator))
            })?;
            Ok(DiffRow {
                indicator: r.indicator.clone(),
                scenario: r.scenario.clone(),
                baseline: baseline.to_string(),
                value: r.value,
                baseline_value: b,
                percent_change: percent_change(r.value, b).ok(),
            })
        })
        .collect()
}

fn format_diff(rows: &[DiffRow]) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    let mut indicators: Vec<&str> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
        if !indicators.contains(&r.indicator.as_str()) {
            indicators.push(&r.indicator);
        }
    }
    let col_w = scenarios.iter().map(|s| s.len()).max().unwrap_or(0).max(22) + 2;
    let label_w = indicators.iter().map(|s| s.len()).max().unwrap_or(0) + 2;
    let mut out = format!("{:label_w$}", "");
    for s in &scenarios {
        let _ = write!(out, "{s:>col_w$}");
    }
    out.push('\n');
    for ind in &indicators {
        let _ = write!(out, "{ind:label_w$}");
        for s in &scenarios {
            let cell = rows
                .iter()
                .find(|r| r.indicator == *ind && r.scenario == *s)
                .map(|r| match r.percent_change {
                    Some(p) if r.scenario != r.baseline => {
                        format!("{:.1} ({})", r.value, format_percent(p))
                    }
                    _ => format!("{:.1}", r.value),
                })
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col_w$}");
        }
        out.push('\n');
    }
    out
}

pub fn cmd_report_diff(project: &Project) -> Result<String> {
    let src = project.dir("simulate").join("indicators.csv");
    if !src.exists() {
        return Err(Error::Config(format!(
            "missing {}; run `simulate` first",
            src.display()
        )));
    }
    let rows: Vec<IndicatorRow> = read_csv(&src)?;
    let baseline = project
        .scenarios
        .first()
        .map(String::as_str)
        .unwrap_or("base");
    let diff = diff_rows(&rows, baseline)?;
    let dir = project.dir("report");
    create_dir(&dir)?;
    write_csv(&dir.join("diff.csv"), &diff)?;
    let text = format_diff(&diff);
    write_text(&dir.join("diff.txt"), &text)?;
    Ok(text)
}

pub fn run(cli: &Cli) -> Result<String> {
    let project = Project::from_cli(cli)?;
    match cli.command {
        Command::Generate => cmd_generate(&project),
        Command::Estimate => cmd_estimate(&project),
        Command::Validate => cmd_validate(&project),
        Command::Simulate => cmd_simulate(&project),
        Command::ReportDiff => cmd_report_diff(&project),
    }
}

/// Parses `args`, runs the command and prints its output. Failures print
/// one `error[<category>]: ...` line.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
