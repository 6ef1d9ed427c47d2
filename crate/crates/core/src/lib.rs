//! Residential location choice microsimulation driven by activity-based
//! accessibility (ABA).
//!
//! The crate follows the long-term branch of a land-use/transport model:
//!
//! * [`domain`] holds mesh cells, households, segments, scenarios and a
//!   synthetic region generator.
//! * [`accessibility`] turns daily activity pattern utilities into logsum
//!   accessibility, scales it to minutes and builds per-scenario surfaces.
//! * [`hedonic`] fits and applies the log land-price regression.
//! * [`choice`] is the multinomial logit engine: sampled choice sets with
//!   size and sampling corrections, probabilities and maximum likelihood.
//! * [`simulate`] runs Monte-Carlo relocation under scenarios and policies.
//! * [`metrics`] computes distance-to-centre indicators and comparisons.
//! * [`cli`] wires everything into the `resloc` command pipeline.

pub mod accessibility;
pub mod choice;
pub mod cli;
pub mod domain;
mod error;
pub mod hedonic;
pub mod metrics;
pub mod simulate;

pub use error::{Error, Result};
