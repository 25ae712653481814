//! Core algorithms for physics-informed power-system state estimation under
//! stealthy AC false-data-injection attacks.
//!
//! The crate is organised bottom-up:
//!
//! * [`case_model`] parses MATPOWER cases, assembles the bus admittance matrix
//!   and evaluates AC power injections and branch flows.
//! * [`powerflow`] solves Newton-Raphson power flow and generates noisy
//!   steady-state snapshot datasets.
//! * [`pinn`] is the neural state estimator: MLP, normalised losses,
//!   uncertainty-weighted objective, reverse-mode gradients and training.
//! * [`attack`] builds attack zones, the shared stealth feasible set, the four
//!   attack objectives, an augmented-Lagrangian solver and an independent
//!   feasibility checker.
//! * [`eval`] computes MAE metrics, percentile metrics and the scaled
//!   perturbation sweep, and writes reports.

// `!(x <= y)` is used deliberately so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod case_model;
pub mod dataset;
mod error;
pub mod eval;
pub mod pinn;
pub mod powerflow;
pub mod rng;

pub use error::{Error, Result};

pub use attack::{AttackFamily, AttackResult, AttackZone, FamilyConfig, FeasibleSetConfig};
pub use case_model::{Admittance, GridGraph, NetworkModel};
pub use dataset::{Dataset, Snapshot, SnapshotKind};
pub use eval::{DatasetMetrics, MetricReport};
pub use pinn::{MlpParams, Regime, TrainConfig, TrainTrace, UncertaintyState};
pub use powerflow::{ResidualScales, SnapshotSetConfig};
