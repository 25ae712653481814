//! Stealth-constrained AC false-data-injection attacks.
//!
//! Every attack perturbs the measurements and states of one connected zone
//! while the rest of the grid stays at its baseline. All four families share
//! one feasible set (per-bus residual stealth, boundary-transfer
//! preservation, zonal conservation, operating limits, zero-injection
//! equalities) and differ in their objective and a few extra constraints.
//! Instances are solved by an augmented Lagrangian with an L-BFGS inner loop
//! and every emitted sample is re-verified by [`verify_feasibility`].

mod checker;
mod generate;
mod problem;
mod solver;
mod zones;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Snapshot;
use crate::powerflow::ResidualScales;
use crate::{Error, Result};

pub use checker::{verify_feasibility, FeasibilityReport, CHECK_TOL};
pub use generate::{generate_attack_dataset, solve_attack, AttackGenConfig, AttackSet, GenerationSummary};
pub use problem::{line_targets, objective_value, AttackProblem};
pub use solver::{SolveStatus, SolverOptions};
pub use zones::{enumerate_zone, enumerate_zones, AttackZone, ZoneLimits, ZoneSpec, ZoneSpecFile, ZERO_INJECTION_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackFamily {
    Simple,
    Lra,
    #[serde(rename = "line")]
    LineOverload,
    Corruption,
}

impl AttackFamily {
    pub const ALL: [AttackFamily; 4] = [
        AttackFamily::Simple,
        AttackFamily::Lra,
        AttackFamily::LineOverload,
        AttackFamily::Corruption,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackFamily::Simple => "simple",
            AttackFamily::Lra => "lra",
            AttackFamily::LineOverload => "line",
            AttackFamily::Corruption => "corruption",
        }
    }
}

impl fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack family '{s}'")))
    }
}

/// Shared stealth and feasibility settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleSetConfig {
    pub tau_p: f64,
    pub tau_q: f64,
    pub eps_bnd_rel: f64,
    pub eps_bnd_abs: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// `eps_cons = max(eps_cons_rel * |sum_Z P0|, eps_cons_abs)`.
    pub eps_cons_rel: f64,
    pub eps_cons_abs: f64,
}

impl FeasibleSetConfig {
    pub fn from_scales(scales: &ResidualScales) -> Self {
        FeasibleSetConfig {
            tau_p: scales.tau_p,
            tau_q: scales.tau_q,
            eps_bnd_rel: 0.03,
            eps_bnd_abs: 0.01,
            v_min: 0.95,
            v_max: 1.05,
            theta_min: -std::f64::consts::PI,
            theta_max: std::f64::consts::PI,
            eps_cons_rel: 1e-3,
            eps_cons_abs: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_p", self.tau_p),
            ("tau_q", self.tau_q),
            ("eps_bnd_rel", self.eps_bnd_rel),
            ("eps_bnd_abs", self.eps_bnd_abs),
            ("eps_cons_rel", self.eps_cons_rel),
            ("eps_cons_abs", self.eps_cons_abs),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.v_min < self.v_max && self.theta_min < self.theta_max) {
            return Err(Error::Config("bounds need min < max".into()));
        }
        Ok(())
    }

    /// Allowed deviation of the boundary transfer at a bus with baseline `f0`.
    pub fn transfer_band(&self, f0: f64) -> f64 {
        (self.eps_bnd_rel * f0.abs()).max(self.eps_bnd_abs)
    }

    /// Zonal conservation tolerance for a zone with baseline net injection
    /// `sum_p0`.
    pub fn conservation_tol(&self, sum_p0: f64) -> f64 {
        (self.eps_cons_rel * sum_p0.abs()).max(self.eps_cons_abs)
    }
}

/// Optional per-bus generation costs for the load-redistribution family,
/// indexed by internal bus index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostVector {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

/// Family-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyConfig {
    Simple {
        kappa_p: f64,
        kappa_q: f64,
        delta_p: f64,
        delta_q: f64,
    },
    Lra {
        gen_cap: f64,
        gen_fallback: f64,
        load_cap: f64,
        load_fallback: f64,
        lambda: f64,
        /// Bus-index heuristic `id / n_bus` when absent.
        #[serde(default)]
        costs: Option<CostVector>,
    },
    #[serde(rename = "line")]
    LineOverload {
        max_lines: usize,
    },
    Corruption {
        beta: f64,
        eps_r: f64,
    },
}

impl FamilyConfig {
    pub fn default_for(family: AttackFamily) -> Self {
        match family {
            AttackFamily::Simple => FamilyConfig::Simple {
                kappa_p: 0.75,
                kappa_q: 0.75,
                delta_p: 0.01,
                delta_q: 0.01,
            },
            AttackFamily::Lra => FamilyConfig::Lra {
                gen_cap: 0.5,
                gen_fallback: 0.5,
                load_cap: 0.3,
                load_fallback: 0.3,
                lambda: 0.1,
                costs: None,
            },
            AttackFamily::LineOverload => FamilyConfig::LineOverload { max_lines: 3 },
            AttackFamily::Corruption => FamilyConfig::Corruption {
                beta: 0.05,
                eps_r: 1e-3,
            },
        }
    }

    pub fn family(&self) -> AttackFamily {
        match self {
            FamilyConfig::Simple { .. } => AttackFamily::Simple,
            FamilyConfig::Lra { .. } => AttackFamily::Lra,
            FamilyConfig::LineOverload { .. } => AttackFamily::LineOverload,
            FamilyConfig::Corruption { .. } => AttackFamily::Corruption,
        }
    }

    pub fn validate(&self, n_bus: usize) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if x > 0.0 && x <= 1.0 {
                Ok(())
            } else {
                let class = if name.starts_with("kappa") { "kappa" } else { "cap" };
                Err(Error::Config(format!("{class} out of (0,1]: {name} = {x}")))
            }
        };
        match self {
            FamilyConfig::Simple {
                kappa_p,
                kappa_q,
                delta_p,
                delta_q,
            } => {
                unit("kappa_p", *kappa_p)?;
                unit("kappa_q", *kappa_q)?;
                if !(*delta_p > 0.0 && *delta_q > 0.0) {
                    return Err(Error::Config("delta_p and delta_q must be positive".into()));
                }
            }
            FamilyConfig::Lra {
                gen_cap,
                gen_fallback,
                load_cap,
                load_fallback,
                lambda,
                costs,
            } => {
                unit("gen_cap", *gen_cap)?;
                unit("gen_fallback", *gen_fallback)?;
                unit("load_cap", *load_cap)?;
                unit("load_fallback", *load_fallback)?;
                if !(*lambda >= 0.0) {
                    return Err(Error::Config("lambda must be non-negative".into()));
                }
                if let Some(c) = costs {
                    if c.up.len() != n_bus || c.down.len() != n_bus {
                        return Err(Error::Config(format!("cost vectors must have {n_bus} entries")));
                    }
                }
            }
            FamilyConfig::LineOverload { max_lines } => {
                if *max_lines < 1 {
                    return Err(Error::Config("max_lines must be at least 1".into()));
                }
            }
            FamilyConfig::Corruption { beta, eps_r } => {
                if !(*beta > 0.0 && *eps_r > 0.0) {
                    return Err(Error::Config("beta and eps_r must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one attack instance.
#[derive(Clone, Debug)]
pub struct AttackResult {
    pub snapshot: Snapshot,
    pub family: AttackFamily,
    pub zone_id: usize,
    pub objective: f64,
    pub status: SolveStatus,
    pub report: FeasibilityReport,
    /// Augmented-Lagrangian outer iterations summed over all starts.
    pub outer_iterations: usize,
}
