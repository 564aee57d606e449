//! Software simulation of an input-interception hardware Trojan on a
//! deep-learning accelerator.
//!
//! The pipeline mirrors the attacker's workflow: run the deployed model over
//! the validation images ([`profiler`]), pick rare activation ranges between
//! the 3- and 4-sigma limits of a watched layer, then arm a Trojan
//! ([`trojan`]) that swaps the *next* input image for a stored one whenever
//! any watched activation lands inside a range. [`defense`] evaluates the two
//! countermeasures: scaling the validation images handed to the designer, and
//! splitting the layer pipeline across independent designers.

pub mod data;
pub mod defense;
pub mod error;
pub mod model;
pub mod ops;
pub mod profiler;
pub mod tensor;
pub mod trojan;

pub use error::{Error, Result};
