//! Fixtures and brute-force oracles shared by integration tests.

#![allow(dead_code)]

use gridshield_core::attack::{objective_value, verify_feasibility, ZoneLimits};
use gridshield_core::case_model::{ac_injections, build_admittance, parse_case};
use gridshield_core::powerflow::solve_nr;
use gridshield_core::{Admittance, AttackZone, FamilyConfig, FeasibleSetConfig, NetworkModel, Snapshot, SnapshotKind};
use rand::Rng;

pub const CASE4GS: &str = include_str!("../fixtures/case4gs.m");
pub const CASE118: &str = include_str!("../fixtures/case118.m");
pub const CASE118_PF: &str = include_str!("../fixtures/case118_pf.csv");

/// Converged base case of `text` as a noiseless snapshot.
pub fn base_snapshot(text: &str) -> (NetworkModel, Admittance, Snapshot) {
    let model = parse_case(text).unwrap();
    let y = build_admittance(&model).unwrap();
    let (p, q) = model.scheduled_injections();
    let (v0, t0) = model.flat_start();
    let sol = solve_nr(&model, &y, &p, &q, &v0, &t0, &Default::default()).unwrap();
    let (p, q) = ac_injections(&sol.v, &sol.theta, &y).unwrap();
    let snap = Snapshot {
        p,
        q,
        v: sol.v,
        theta: sol.theta,
        kind: SnapshotKind::Clean,
        seed: 0,
        clean: None,
    };
    (model, y, snap)
}

/// The 4-bus case with every non-slack bus in the zone.
pub fn toy_zone() -> (NetworkModel, Admittance, Snapshot, AttackZone) {
    let (model, y, snap) = base_snapshot(CASE4GS);
    let zone = AttackZone::from_buses(&model.graph(), &[1, 2, 3], ZoneLimits::default())
        .unwrap()
        .with_zero_injection(&snap.p, &snap.q);
    (model, y, snap, zone)
}

/// Loose but bounded stealth settings that random sampling can hit.
pub fn generous_feasible_set() -> FeasibleSetConfig {
    FeasibleSetConfig {
        tau_p: 0.05,
        tau_q: 0.05,
        eps_bnd_rel: 0.03,
        eps_bnd_abs: 0.1,
        v_min: 0.95,
        v_max: 1.05,
        theta_min: -std::f64::consts::PI,
        theta_max: std::f64::consts::PI,
        eps_cons_rel: 1e-3,
        eps_cons_abs: 0.05,
    }
}

/// Best objective among `n` random points that pass the checker.
///
/// Each draw picks a scale `r = 10^U(-4, -1)`, moves zone states by
/// `U(-r, r)` and sets zone measurements to the new injections plus
/// `U(-tau, tau)` noise, so stealth at zone buses holds by construction.
#[allow(clippy::too_many_arguments)]
pub fn rejection_sampling_best(
    model: &NetworkModel,
    y: &Admittance,
    zone: &AttackZone,
    family: &FamilyConfig,
    feas: &FeasibleSetConfig,
    baseline: &Snapshot,
    n: usize,
    rng: &mut impl Rng,
) -> (usize, f64) {
    let mut feasible = 0;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n {
        let att = sample_candidate(model, y, zone, feas, baseline, rng);
        if verify_feasibility(model, y, zone, family, feas, baseline, &att).passed() {
            feasible += 1;
            best = best.max(objective_value(model, y, zone, family, baseline, &att));
        }
    }
    (feasible, best)
}

/// One random candidate for [`rejection_sampling_best`].
pub fn sample_candidate(
    model: &NetworkModel,
    y: &Admittance,
    zone: &AttackZone,
    feas: &FeasibleSetConfig,
    baseline: &Snapshot,
    rng: &mut impl Rng,
) -> Snapshot {
    let slack = model.slack();
    let r = 10f64.powf(rng.random_range(-4.0..-1.0));
    let mut att = baseline.clone();
    for &i in &zone.buses {
        att.v[i] += rng.random_range(-r..r);
        if i != slack {
            att.theta[i] += rng.random_range(-r..r);
        }
    }
    let (p, q) = ac_injections(&att.v, &att.theta, y).unwrap();
    for &i in &zone.buses {
        if zone.zero_injection.contains(&i) {
            continue;
        }
        att.p[i] = p[i] + rng.random_range(-feas.tau_p..feas.tau_p);
        att.q[i] = q[i] + rng.random_range(-feas.tau_q..feas.tau_q);
    }
    att
}
