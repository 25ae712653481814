//! Independent feasibility audit of attacked snapshots.
//!
//! Recomputes every constraint from the attacked and baseline snapshots with
//! exact absolute values. Nothing from the solver is reused.

use serde::{Deserialize, Serialize};

use super::problem::lra_partition;
use super::zones::AttackZone;
use super::{FamilyConfig, FeasibleSetConfig};
use crate::case_model::{ac_injections, Admittance, BranchEnd, NetworkModel};
use crate::dataset::Snapshot;

/// Absolute tolerance for every constraint group.
pub const CHECK_TOL: f64 = 1e-6;

/// Largest violation per constraint group; `0` means satisfied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub groups: Vec<(String, f64)>,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.groups.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_violation() <= CHECK_TOL
    }

    pub fn get(&self, group: &str) -> Option<f64> {
        self.groups.iter().find(|(g, _)| g == group).map(|(_, v)| *v)
    }

    /// Groups above tolerance.
    pub fn failures(&self) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|(_, v)| *v > CHECK_TOL)
            .map(|(g, _)| g.as_str())
            .collect()
    }

    fn record(&mut self, group: &str, violation: f64) {
        let v = violation.max(0.0);
        match self.groups.iter_mut().find(|(g, _)| g == group) {
            Some((_, old)) => *old = old.max(v),
            None => self.groups.push((group.to_string(), v)),
        }
    }
}

pub fn verify_feasibility(
    model: &NetworkModel,
    y: &Admittance,
    zone: &AttackZone,
    family: &FamilyConfig,
    feas: &FeasibleSetConfig,
    baseline: &Snapshot,
    attacked: &Snapshot,
) -> FeasibilityReport {
    let mut r = FeasibilityReport::default();
    let n = model.n_bus();
    let inside: Vec<bool> = (0..n).map(|i| zone.contains(i)).collect();

    let mut exterior = 0.0_f64;
    for i in (0..n).filter(|&i| !inside[i]) {
        for (a, b) in [
            (attacked.p[i], baseline.p[i]),
            (attacked.q[i], baseline.q[i]),
            (attacked.v[i], baseline.v[i]),
            (attacked.theta[i], baseline.theta[i]),
        ] {
            if a.to_bits() != b.to_bits() {
                exterior = exterior.max((a - b).abs()).max(f64::MIN_POSITIVE);
            }
        }
    }
    // bit-level changes count even when they round to zero difference
    r.record(
        "exterior untouched",
        if exterior > 0.0 {
            exterior.max(2.0 * CHECK_TOL)
        } else {
            0.0
        },
    );

    let (pa, qa) = ac_injections(&attacked.v, &attacked.theta, y).expect("snapshot matches network");
    for i in 0..n {
        r.record("stealth P", (attacked.p[i] - pa[i]).abs() - feas.tau_p);
        r.record("stealth Q", (attacked.q[i] - qa[i]).abs() - feas.tau_q);
    }

    // boundary transfer over every in-service branch leaving the zone
    let mut transfer_a = vec![0.0; n];
    let mut transfer_0 = vec![0.0; n];
    let mut is_boundary = vec![false; n];
    for (_, br) in y.branches() {
        for (end, at, other) in [(BranchEnd::From, br.from, br.to), (BranchEnd::To, br.to, br.from)] {
            if inside[at] && !inside[other] {
                let t = br.terminal(end);
                transfer_a[at] += t.value(&attacked.v, &attacked.theta);
                transfer_0[at] += t.value(&baseline.v, &baseline.theta);
                is_boundary[at] = true;
            }
        }
    }
    r.record("boundary transfer", 0.0);
    for i in (0..n).filter(|&i| is_boundary[i]) {
        r.record(
            "boundary transfer",
            (transfer_a[i] - transfer_0[i]).abs() - feas.transfer_band(transfer_0[i]),
        );
    }

    let sum0: f64 = zone.buses.iter().map(|&i| baseline.p[i]).sum();
    let eps = feas.conservation_tol(sum0);
    let dp: f64 = zone.buses.iter().map(|&i| attacked.p[i] - baseline.p[i]).sum();
    let dq: f64 = zone.buses.iter().map(|&i| attacked.q[i] - baseline.q[i]).sum();
    r.record("conservation P", dp.abs() - eps);
    r.record("conservation Q", dq.abs() - eps);

    r.record("voltage bounds", 0.0);
    r.record("angle bounds", 0.0);
    for &i in &zone.buses {
        r.record(
            "voltage bounds",
            (feas.v_min - attacked.v[i]).max(attacked.v[i] - feas.v_max),
        );
        r.record(
            "angle bounds",
            (feas.theta_min - attacked.theta[i]).max(attacked.theta[i] - feas.theta_max),
        );
    }

    r.record("zero injection", 0.0);
    for i in zone.detect_zero_injection(&baseline.p, &baseline.q) {
        r.record("zero injection", attacked.p[i].abs().max(attacked.q[i].abs()));
    }

    match family {
        FamilyConfig::Simple {
            kappa_p,
            kappa_q,
            delta_p,
            delta_q,
        } => {
            for &i in &zone.buses {
                let ep = kappa_p * baseline.p[i].abs().max(*delta_p);
                let eq = kappa_q * baseline.q[i].abs().max(*delta_q);
                r.record("injection envelope P", (attacked.p[i] - baseline.p[i]).abs() - ep);
                r.record("injection envelope Q", (attacked.q[i] - baseline.q[i]).abs() - eq);
            }
        }
        FamilyConfig::Corruption { beta, eps_r } => {
            let (p0, q0) = ac_injections(&baseline.v, &baseline.theta, y).expect("snapshot matches network");
            for &i in &zone.buses {
                let rp0 = baseline.p[i] - p0[i];
                let rq0 = baseline.q[i] - q0[i];
                let rpa = attacked.p[i] - pa[i];
                let rqa = attacked.q[i] - qa[i];
                r.record("residual match P", (rpa - rp0).abs() - (beta * rp0.abs()).max(*eps_r));
                r.record("residual match Q", (rqa - rq0).abs() - (beta * rq0.abs()).max(*eps_r));
            }
        }
        FamilyConfig::Lra {
            gen_cap,
            gen_fallback,
            load_cap,
            load_fallback,
            ..
        } => {
            let (gens, loads) = lra_partition(model, zone, baseline);
            let cap = |p0: f64, rel: f64, fallback: f64| {
                if p0 == 0.0 {
                    fallback
                } else {
                    rel * p0.abs()
                }
            };
            r.record("generator cap", 0.0);
            for &i in &gens {
                r.record(
                    "generator cap",
                    (attacked.p[i] - baseline.p[i]).abs() - cap(baseline.p[i], *gen_cap, *gen_fallback),
                );
            }
            r.record("load cap", 0.0);
            let mut shift = 0.0;
            for &i in &loads {
                let d = attacked.p[i] - baseline.p[i];
                shift += d;
                r.record("load cap", d.abs() - cap(baseline.p[i], *load_cap, *load_fallback));
            }
            r.record("load balance", shift.abs());
        }
        FamilyConfig::LineOverload { .. } => {}
    }
    r
}
