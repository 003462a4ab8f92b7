//! Simulation and analysis of stepping synchronised to a cue with a single
//! phase perturbation.
//!
//! The pipeline runs cue generation, a phase-correcting stepping agent,
//! optional heel-marker synthesis and onset detection, onset matching with
//! phase-wrap removal, pre-perturbation statistics, relative-asynchrony
//! curves and correction-gain estimation.

pub mod detect;
pub mod estimate;
pub mod harness;
pub mod rng;
pub mod simulate;
pub mod timing;
