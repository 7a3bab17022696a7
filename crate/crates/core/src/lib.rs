//! Reconstructs a 3-D map of Wi-Fi devices from signal strength captured at
//! unknown anchor points along a walk.
//!
//! The pipeline is: capture ([`ingest`]) or simulate ([`synth`]) per-packet
//! RSSI, aggregate into a [`MeasurementSet`], convert to uncalibrated ranges
//! ([`pathloss`]), then run the alternating least-squares localizer
//! ([`alternator::solve_map`]). Results are identifiable only up to a
//! similarity transform, so [`evalmap`] aligns against ground truth before
//! measuring error.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alternator;
mod error;
pub mod evalmap;
pub mod formats;
pub mod ingest;
pub mod model;
pub mod pathloss;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    aggregate, to_ranges, AnchorEstimate, BoundingBox, DeviceEstimate, MapSolution,
    MeasurementSet, Normalization, Packet, RangeMatrix, ReferencePolicy, SolveConfig,
};
pub use pathloss::{PathLossParams, Rssi};

/// Schema version written into every JSON document this crate produces.
pub const SCHEMA_VERSION: u32 = 1;

pub type Point3 = nalgebra::Vector3<f64>;
