//! Statistical characterization of transformer and transmission-line
//! electrical parameters: ingest grid cases, compute per-class statistics,
//! fit parametric families scored by binned KL divergence, validate against
//! reference profiles, and sample synthetic branch parameters.

pub mod analysis;
pub mod cli;
pub mod distributions;
pub mod empirical_stats;
pub mod error;
pub mod fitting;
pub mod grid_ingest;
pub mod optimize;
pub mod per_unit;
pub mod reference_profiles;
pub mod rng;
pub mod synth_sampler;

pub use error::{Error, Result};
