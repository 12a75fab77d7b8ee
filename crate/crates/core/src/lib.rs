//! Reconstruction of partially observed interbank liability networks.
//!
//! The crate covers the whole pipeline: the observation model for
//! threshold-disclosed liability matrices ([`netcore`]), dense
//! maximum-entropy reconstruction ([`maxent`]), belief propagation over the
//! space of network supports ([`bpcore`]), decimation-based support sampling
//! and exact feasibility certification ([`sampler`]), Furfine default
//! cascades ([`contagion`]), synthetic ensembles ([`ensembles`]) and the
//! disclosure-threshold sweep ([`thresholdlab`]). The [`cli`] module backs
//! the `netrecon` binary.

pub mod bpcore;
pub mod cli;
pub mod contagion;
pub mod ensembles;
pub mod error;
pub mod maxent;
pub mod netcore;
pub mod rng;
pub mod sampler;
pub mod thresholdlab;

pub use error::{Error, Result};
