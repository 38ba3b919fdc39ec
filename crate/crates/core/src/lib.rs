//! Indoor localisation from beacon RSS fingerprints.
//!
//! The pipeline: parse raw scan logs ([`ingest`]), average them into a
//! fingerprint database ([`preprocess`]), optionally keep only the most
//! stable beacons per grid point ([`select`]), and estimate positions from
//! the most similar fingerprints ([`similarity`], [`estimator`]).
//! [`evalbench`] holds a synthetic path-loss generator and the experiment
//! drivers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod cli;
pub mod estimator;
pub mod evalbench;
pub mod ingest;
pub mod model;
pub mod preprocess;
pub mod select;
pub mod similarity;

pub use estimator::{estimate, top_k, EstimatorConfig, WeightScheme};
pub use model::{
    BeaconId, Estimate, Fingerprint, FingerprintDatabase, GridPoint, Observation, RssRecord,
    SelectionSet, Timing,
};
pub use similarity::{AlignMode, MetricKind};
