//! Survival analysis with state-level expected survival rate (StateESR)
//! features.
//!
//! The pieces: cohort loading and cleaning ([`data`]), county-to-state
//! aggregation of life-table survival ([`geo`]), Cox and Weibull
//! proportional hazards fits ([`estimators`]), Harrell's C-index
//! ([`metrics`]), paired testing ([`stats`]) and the subset experiment that
//! ties them together ([`experiment`]). [`synth`] generates cohorts with a
//! known geographic effect.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod geo;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
