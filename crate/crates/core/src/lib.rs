//! Regionally additive models.
//!
//! The pipeline trains a differentiable black box, computes its input
//! Jacobian once, searches per feature for subregions in which the feature's
//! local effect no longer depends on the other features, and fits an additive
//! model with one shape function per (feature, subregion).

pub mod blackbox;
pub mod cli;
pub mod data;
pub mod effects;
pub mod error;
pub mod eval;
pub mod gam;
pub mod regions;
pub mod synth;

pub use error::{RamError, Result};
