//! Simulation and analysis of cavity-mediated adiabatic transfer (CMAT)
//! between two three-level atoms sharing a single cavity mode.
//!
//! Rates are expressed in units of the atomic polarization decay rate `γ`
//! and times in units of `1/γ` unless noted otherwise. Every state vector and
//! matrix uses the fixed basis ordering of [`model::BasisIndex`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod dynamics;
pub mod eigensystem;
pub mod error;
pub mod integrator;
pub mod lossmodel;
pub mod model;
pub mod search;
pub mod sweep;
pub mod validate;

pub use adiabatic::{AdiabaticFactors, Binding, SpeedLimitReport};
pub use dynamics::{SimConfig, SimResult};
pub use eigensystem::EigenSystem;
pub use error::{CmatError, Result};
pub use lossmodel::{LossPrediction, Objective};
pub use model::{BasisIndex, CqedParams, PulseSchedule, StateVector};
pub use sweep::{SweepMode, SweepResult, SweepSpec};
