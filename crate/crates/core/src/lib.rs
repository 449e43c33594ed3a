//! Stochastic helical triad models with particle-filter data assimilation.
//!
//! The layers, bottom up: helical basis and triad geometry ([`helical`]),
//! drift and noise fields ([`dynamics`]), the stochastic SSPRK3 stepper
//! ([`integrator`]), ensembles and moment statistics ([`ensemble`]), the
//! SIR filter ([`filter`]), CRPS calibration ([`calibration`]) and the
//! command layer ([`config`], [`commands`]).

pub mod calibration;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod filter;
pub mod helical;
pub mod integrator;
pub mod output;
pub mod rng;
pub mod svg;

pub use dynamics::{ModelKind, NoiseAmplitude};
pub use error::{Error, Result};
pub use helical::{build_triad, Complex3, Parity, TriadGeometry, WaveVector};
