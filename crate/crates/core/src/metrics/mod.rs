//! Residence-to-centre distance indicators and their summaries.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Graph, MeshCell, Region};
use crate::{Error, Result};

pub mod report;

pub use report::{IndicatorReport, IndicatorRow};

/// Distances above this are dropped from the filtered summaries, in metres.
pub const FILTER_THRESHOLD_M: f64 = 10_000.0;

/// Handling of residences with no network path to any target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disconnected {
    /// Report an infinite distance; summaries exclude it and count it.
    #[default]
    Sentinel,
    /// Fall back to the straight-line distance between centroids.
    Euclidean,
}

/// Shortest-path distances between cell centroids with per-source caching.
#[derive(Debug)]
pub struct DistanceOracle {
    graph: Graph,
    positions: Vec<(f64, f64)>,
    disconnected: Disconnected,
    cache: Vec<OnceLock<Vec<f64>>>,
}

impl DistanceOracle {
    pub fn new(
        graph: Graph,
        positions: Vec<(f64, f64)>,
        disconnected: Disconnected,
    ) -> Result<Self> {
        if graph.n_nodes() != positions.len() {
            return Err(Error::Contract(format!(
                "graph has {} nodes but {} positions were given",
                graph.n_nodes(),
                positions.len()
            )));
        }
        let cache = (0..positions.len()).map(|_| OnceLock::new()).collect();
        Ok(DistanceOracle {
            graph,
            positions,
            disconnected,
            cache,
        })
    }

    pub fn from_region(region: &Region, disconnected: Disconnected) -> Result<Self> {
        let positions = region.cells().iter().map(|c| (c.x, c.y)).collect();
        Self::new(region.graph().clone(), positions, disconnected)
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    fn euclidean(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.positions[a], self.positions[b]);
        ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let d = self.cache[a].get_or_init(|| self.graph.distances_from(&[a]))[b];
        if d.is_infinite() && self.disconnected == Disconnected::Euclidean {
            self.euclidean(a, b)
        } else {
            d
        }
    }

    fn check_targets(&self, targets: &[usize]) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::Domain("target set is empty".into()));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= self.n_nodes()) {
            return Err(Error::Contract(format!(
                "target index {t} outside the network"
            )));
        }
        Ok(())
    }

    fn fallback(&self, residence: usize, targets: &[usize]) -> f64 {
        match self.disconnected {
            Disconnected::Sentinel => f64::INFINITY,
            Disconnected::Euclidean => targets
                .iter()
                .map(|&t| self.euclidean(residence, t))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Distance from `residence` to the closest cell in `targets`; zero when
    /// the residence is itself a target.
    pub fn nearest_target_distance(&self, residence: usize, targets: &[usize]) -> Result<f64> {
        self.check_targets(targets)?;
        if targets.contains(&residence) {
            return Ok(0.0);
        }
        let mut is_target = vec![false; self.n_nodes()];
        for &t in targets {
            is_target[t] = true;
        }
        let d = self.graph.distance_to_nearest(residence, &is_target);
        Ok(if d.is_finite() {
            d
        } else {
            self.fallback(residence, targets)
        })
    }

    /// Nearest-target distance for every cell, by one multi-source search
    /// (the network is undirected).
    pub fn nearest_distances(&self, targets: &[usize]) -> Result<Vec<f64>> {
        self.check_targets(targets)?;
        let d = self.graph.distances_from(targets);
        Ok(d.into_par_iter()
            .enumerate()
            .map(|(i, x)| {
                if x.is_finite() {
                    x
                } else {
                    self.fallback(i, targets)
                }
            })
            .collect())
    }
}

/// Nearest-DAA and nearest-UFAA distance of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDistances {
    pub daa: Vec<f64>,
    pub ufaa: Vec<f64>,
}

impl CellDistances {
    pub fn compute(region: &Region, disconnected: Disconnected) -> Result<Self> {
        let oracle = DistanceOracle::from_region(region, disconnected)?;
        Ok(CellDistances {
            daa: oracle.nearest_distances(&region.daa_cells())?,
            ufaa: oracle.nearest_distances(&region.ufaa_cells())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    /// Non-finite values left out.
    pub excluded: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation; zero for a single value.
    pub std_dev: f64,
}

/// Statistics of the finite values, after removing values strictly above
/// `filter` when given.
pub fn summarize(values: &[f64], filter: Option<f64>) -> Result<Summary> {
    let mut kept: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| v.is_finite() && filter.is_none_or(|t| *v <= t))
        .collect();
    let excluded = values.iter().filter(|v| !v.is_finite()).count();
    if kept.is_empty() {
        return Err(Error::EmptySummary(match filter {
            Some(t) => format!("no values at or below {t} among {} inputs", values.len()),
            None => format!("no finite values among {} inputs", values.len()),
        }));
    }
    kept.sort_by(f64::total_cmp);
    let n = kept.len();
    let mean = kept.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        kept[n / 2]
    } else {
        0.5 * (kept[n / 2 - 1] + kept[n / 2])
    };
    let std_dev = if n > 1 {
        (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        n,
        excluded,
        mean,
        median,
        min: kept[0],
        max: kept[n - 1],
        std_dev,
    })
}

/// Share of residences located in a DAA cell.
pub fn daa_share(residence_cells: &[usize], cells: &[MeshCell]) -> Result<f64> {
    if residence_cells.is_empty() {
        return Err(Error::EmptySummary(
            "no residences to compute a DAA share".into(),
        ));
    }
    let inside = residence_cells.iter().filter(|&&c| cells[c].in_daa).count();
    Ok(inside as f64 / residence_cells.len() as f64)
}

/// `100·(value − baseline)/baseline`.
pub fn percent_change(value: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::Domain(format!(
            "percent change against baseline {baseline}"
        )));
    }
    Ok(100.0 * (value - baseline) / baseline)
}

/// One decimal with an explicit sign, e.g. `+7.2%`; zero prints as `0.0%`.
pub fn format_percent(p: f64) -> String {
    let rounded = (p * 10.0).round() / 10.0;
    if rounded == 0.0 {
        "0.0%".to_string()
    } else {
        format!("{rounded:+.1}%")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Counts over the number of values falling in any bin; all zero when
    /// none does.
    pub shares: Vec<f64>,
}

/// Bins are `[e_i, e_{i+1})` except the last, which is closed.
pub fn distance_histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain(
            "histogram edges must be strictly increasing".into(),
        ));
    }
    let n_bins = edges.len() - 1;
    let last = edges[n_bins];
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        if !(v >= edges[0] && v <= last) {
            continue;
        }
        let bin = if v == last {
            n_bins - 1
        } else {
            edges.partition_point(|e| *e <= v) - 1
        };
        counts[bin] += 1;
    }
    let total: usize = counts.iter().sum();
    let shares = counts
        .iter()
        .map(|&c| {
            if total > 0 {
                c as f64 / total as f64
            } else {
                0.0
            }
        })
        .collect();
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
        shares,
    })
}

/// Default bins: 500 m steps to 10 km.
pub fn default_edges() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 500.0).collect()
}

/// Distance summaries with and without the distance filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub all: Summary,
    pub filtered: Summary,
}

impl DistanceSummary {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(DistanceSummary {
            all: summarize(values, None)?,
            filtered: summarize(values, Some(FILTER_THRESHOLD_M))?,
        })
    }
}

/// Indicators of one residential pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub households: usize,
    pub daa_households: usize,
    pub daa_share: f64,
    pub daa_distance: DistanceSummary,
    pub ufaa_distance: DistanceSummary,
}

impl Indicators {
    /// Indicators of households living at the given cell indices.
    pub fn compute(
        residence_cells: &[usize],
        cells: &[MeshCell],
        distances: &CellDistances,
    ) -> Result<Self> {
        let share = daa_share(residence_cells, cells)?;
        let daa: Vec<f64> = residence_cells.iter().map(|&c| distances.daa[c]).collect();
        let ufaa: Vec<f64> = residence_cells.iter().map(|&c| distances.ufaa[c]).collect();
        Ok(Indicators {
            households: residence_cells.len(),
            daa_households: residence_cells.iter().filter(|&&c| cells[c].in_daa).count(),
            daa_share: share,
            daa_distance: DistanceSummary::of(&daa)?,
            ufaa_distance: DistanceSummary::of(&ufaa)?,
        })
    }

    /// Field-wise mean over Monte-Carlo runs. Counts are averaged and
    /// rounded.
    pub fn mean(runs: &[Indicators]) -> Result<Indicators> {
        let first = runs
            .first()
            .ok_or_else(|| Error::EmptySummary("no runs to average".into()))?;
        if runs.len() == 1 {
            return Ok(*first);
        }
        let k = runs.len() as f64;
        let avg = |f: &dyn Fn(&Indicators) -> f64| runs.iter().map(f).sum::<f64>() / k;
        let avg_summary = |f: &dyn Fn(&Indicators) -> Summary| Summary {
            n: (avg(&|r| f(r).n as f64)).round() as usize,
            excluded: (avg(&|r| f(r).excluded as f64)).round() as usize,
            mean: avg(&|r| f(r).mean),
            median: avg(&|r| f(r).median),
            min: avg(&|r| f(r).min),
            max: avg(&|r| f(r).max),
            std_dev: avg(&|r| f(r).std_dev),
        };
        Ok(Indicators {
            households: avg(&|r| r.households as f64).round() as usize,
            daa_households: avg(&|r| r.daa_households as f64).round() as usize,
            daa_share: avg(&|r| r.daa_share),
            daa_distance: DistanceSummary {
                all: avg_summary(&|r| r.daa_distance.all),
                filtered: avg_summary(&|r| r.daa_distance.filtered),
            },
            ufaa_distance: DistanceSummary {
                all: avg_summary(&|r| r.ufaa_distance.all),
                filtered: avg_summary(&|r| r.ufaa_distance.filtered),
            },
        })
    }
}
