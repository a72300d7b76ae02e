//! Simulation and analysis toolkit for a one-dimensional array of single atoms
//! strongly coupled to a high-finesse Fabry-Perot cavity.
//!
//! * [`qed`] analytic weak-drive transmission, steady-state field and collective coupling
//! * [`spatial`] standing-wave coupling, lattice/mode beat envelope and tweezer layouts
//! * [`thermal`] thermal-motion average of the coupling over harmonic-oscillator states
//! * [`oracle`] brute-force Lindblad steady state of the driven Tavis-Cummings model
//! * [`stochastic`] loading, detection and survival Monte Carlo models
//! * [`fit`] Levenberg-Marquardt engine and the curve models used for analysis
//! * [`io`] configuration, CSV, JSON reports and SVG plots
//! * [`acceptance`] numeric checks that a build reproduces the reference results

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod error;
pub mod fit;
pub mod io;
pub mod optimize;
pub mod oracle;
pub mod qed;
pub mod spatial;
pub mod stats;
pub mod stochastic;
pub mod thermal;

pub use error::{Error, Result};
