//! Local-environment graph sets for multi-element alloys, and the LESets
//! permutation-invariant graph network that regresses their properties.

pub mod analysis;
pub mod baselines;
pub mod config;
pub mod dataset;
pub mod elemtable;
pub mod model;
pub mod report;
pub mod repr;
pub mod synth;
pub mod tensor;
pub mod train;
