//! Reaction-wheel friction anomaly classification with formal local and
//! global robustness checks of its ReLU networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`telemetry`] generates labelled synthetic spin-rate / friction series,
//! * [`pipeline`] turns a series into friction coefficients and the
//!   anomaly C / D histograms,
//! * [`mlp`] holds the one-hidden-layer ReLU classifiers,
//! * [`classifier`] chains thresholds and networks into the 13-way status,
//! * [`verifier`] is a complete branch-and-bound decision procedure for
//!   classification queries over box + linear input regions,
//! * [`perturb`] applies time-series perturbations and builds envelopes,
//! * [`robustness`] runs local-robustness sweeps and global certification,
//! * [`experiment`] runs all of it from one root seed and [`report`] writes
//!   the tables and SVG charts.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mlp;
pub mod perturb;
pub mod pipeline;
pub mod report;
pub mod robustness;
pub mod seed;
pub mod telemetry;
pub mod verifier;

pub use error::{Error, Result};
