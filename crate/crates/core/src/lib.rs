//! Long-tailed classification with peer classifiers and consensus voting.
//!
//! The library splits a heavily imbalanced label distribution into head,
//! body, and tail class groups, trains several independent "peer"
//! classifiers on configurable combinations of those groups, and merges
//! their per-instance opinions with a majority-confidence voting rule.
//! Evaluation uses per-scene recall metrics (R@K, mR@K, their mean, and
//! per-group recall statistics) so that head-class dominance and
//! tail-class neglect are both visible.
//!
//! The pipeline, end to end:
//!
//! 1. [`data`] — generate or load a dataset of labeled feature vectors
//!    grouped into scenes.
//! 2. [`taxonomy`] — count class frequencies, partition classes into
//!    head/body/tail, and parse the peer group-assignment grammar
//!    (e.g. `"HBT_B_T"`).
//! 3. [`losses`] — cross-entropy, focal, margin-based (LDAM), and
//!    class-balanced losses, each with its analytic gradient.
//! 4. [`peers`] — linear classifier heads per peer, trained with seeded
//!    mini-batch gradient descent on each peer's filtered view.
//! 5. [`voting`] — consensus voting over the peers' (label, confidence)
//!    opinions.
//! 6. [`metrics`] — R@K / mR@K / mean and per-group recall reports.
//! 7. [`experiment`] — the config-driven pipeline behind the CLI.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the CLI
//! and the text file formats use the `f64` aliases re-exported below.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod peers;
pub mod taxonomy;
pub mod voting;

pub use error::{Error, Result};

/// Floating-point scalar the numeric core is generic over.
///
/// Everything needed by the math (`Float`), by samplers and counters
/// (`FromPrimitive`/`ToPrimitive`), and by the text file formats
/// (`Display`/`FromStr`, both of which round-trip exactly for `f32` and
/// `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Display
    + Debug
    + FromStr
    + Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`, rounding if the target type is narrower.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any float scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Class identifier: an index in `[0, num_classes)`.
pub type ClassId = usize;

/// Concrete double-precision aliases used by the CLI and file formats.
pub type Dataset64 = data::LabeledDataset<f64>;
/// Trained peer ensemble over `f64` parameters.
pub type Ensemble64 = peers::Ensemble<f64>;
/// A single peer's `f64` opinion.
pub type Prediction64 = peers::PeerPrediction<f64>;
/// Metrics report with `f64` percentages.
pub type Report64 = metrics::MetricsReport<f64>;
