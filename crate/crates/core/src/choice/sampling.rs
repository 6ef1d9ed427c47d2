//! Importance sampling of choice-set alternatives with replacement.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Utility correction attached to a sampled alternative.
///
/// With few cells and many draws most cells are drawn several times, and
/// ignoring the multiplicity biases the estimates strongly; `DrawCount` is
/// therefore the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// ln(1/π) with π the per-draw probability; duplicate draws are ignored.
    InverseProbability,
    /// ln(n/(R·π)) with n the number of times the cell was drawn in R draws.
    /// A force-included chosen cell counts as drawn once.
    #[default]
    DrawCount,
}

impl Correction {
    fn value(self, probability: f64, count: u32, n_draws: usize) -> f64 {
        match self {
            Correction::InverseProbability => -probability.ln(),
            Correction::DrawCount => (count as f64 / (n_draws as f64 * probability)).ln(),
        }
    }
}

/// Unique cells of one sampled choice set, in order of first draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSet {
    /// Cell indices.
    pub cells: Vec<usize>,
    pub corrections: Vec<f64>,
    /// Number of draws that hit each cell.
    pub counts: Vec<u32>,
    /// Position of the chosen cell within `cells`.
    pub chosen: Option<usize>,
}

impl SampledSet {
    /// Every eligible cell with zero correction.
    pub fn full(eligible: &[bool], chosen: Option<usize>) -> Result<SampledSet> {
        let cells: Vec<usize> = (0..eligible.len()).filter(|&i| eligible[i]).collect();
        if cells.is_empty() {
            return Err(Error::Data("no eligible cells for the choice set".into()));
        }
        let chosen = match chosen {
            Some(c) => Some(cells.iter().position(|&i| i == c).ok_or_else(|| {
                Error::Data(format!(
                    "chosen cell index {c} is not an eligible alternative"
                ))
            })?),
            None => None,
        };
        let n = cells.len();
        Ok(SampledSet {
            cells,
            corrections: vec![0.0; n],
            counts: vec![1; n],
            chosen,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ChoiceSetSampler {
    probabilities: Vec<f64>,
    dist: WeightedIndex<f64>,
    n_draws: usize,
    correction: Correction,
}

impl ChoiceSetSampler {
    /// Ineligible cells are never drawn; eligible cells need a finite
    /// positive weight.
    pub fn new(
        weights: &[f64],
        eligible: &[bool],
        n_draws: usize,
        correction: Correction,
    ) -> Result<Self> {
        if weights.len() != eligible.len() {
            return Err(Error::Contract(
                "weights and eligibility differ in length".into(),
            ));
        }
        if n_draws == 0 {
            return Err(Error::Domain("choice sets need at least one draw".into()));
        }
        let mut w = vec![0.0; weights.len()];
        for (i, (&x, &ok)) in weights.iter().zip(eligible).enumerate() {
            if !ok {
                continue;
            }
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Data(format!(
                    "sampling weight {x} at eligible cell index {i}"
                )));
            }
            w[i] = x;
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Data("sampling weights sum to zero".into()));
        }
        let dist =
            WeightedIndex::new(&w).map_err(|e| Error::Data(format!("sampling weights: {e}")))?;
        Ok(ChoiceSetSampler {
            probabilities: w.iter().map(|x| x / total).collect(),
            dist,
            n_draws,
            correction,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn correction(&self) -> Correction {
        self.correction
    }

    /// Per-draw probability of cell index `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.probabilities[i]
    }

    /// Draws a choice set. When `chosen` is given and was not drawn it is
    /// appended with its own correction.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, chosen: Option<usize>) -> Result<SampledSet> {
        let mut cells: Vec<usize> = Vec::with_capacity(self.n_draws.min(64));
        let mut counts: Vec<u32> = Vec::with_capacity(cells.capacity());
        for _ in 0..self.n_draws {
            let c = self.dist.sample(rng);
            match cells.iter().position(|&x| x == c) {
                Some(k) => counts[k] += 1,
                None => {
                    cells.push(c);
                    counts.push(1);
                }
            }
        }
        let chosen = match chosen {
            None => None,
            Some(c) => {
                if self.probabilities.get(c).is_none_or(|p| *p <= 0.0) {
                    return Err(Error::Data(format!(
                        "chosen cell index {c} cannot be sampled"
                    )));
                }
                Some(cells.iter().position(|&x| x == c).unwrap_or_else(|| {
                    cells.push(c);
                    counts.push(1);
                    cells.len() - 1
                }))
            }
        };
        let corrections = cells
            .iter()
            .zip(&counts)
            .map(|(&c, &n)| {
                self.correction
                    .value(self.probabilities[c], n, self.n_draws)
            })
            .collect();
        Ok(SampledSet {
            cells,
            corrections,
            counts,
            chosen,
        })
    }
}
