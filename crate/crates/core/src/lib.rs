//! Laser phase-noise effects on optomechanical sideband cooling and on
//! coherent photon–phonon oscillations in the strong-coupling regime.

pub mod analytic;
pub mod cli;
pub mod cavityfield;
pub mod ensemble;
pub mod error;
pub mod ingest;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod quad;
pub mod spectrum;

pub use error::{Error, Result};
pub use params::{validate, Drive, NoiseModel, Regime, SpectrumTable, SystemParams, ValidationReport};
pub use spectrum::{Method, SpectrumResult};
