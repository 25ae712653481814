mod support;

use gridshield_core::case_model::ac_injections;
use support::*;

fn reference() -> Vec<(usize, f64, f64)> {
    let mut rdr = csv::Reader::from_reader(CASE118_PF.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn ieee118_matches_reference_solution() {
    let (model, _, snap) = base_snapshot(CASE118);
    let slack = model.slack();
    let rows = reference();
    assert_eq!(rows.len(), model.n_bus());
    let ref_slack = rows.iter().find(|r| model.bus_index(r.0) == Some(slack)).unwrap().2;
    let mut worst_v = 0.0_f64;
    let mut worst_t = 0.0_f64;
    for (id, vm, va) in rows {
        let i = model.bus_index(id).unwrap();
        worst_v = worst_v.max((snap.v[i] - vm).abs());
        worst_t = worst_t.max(((snap.theta[i] - snap.theta[slack]) - (va - ref_slack)).abs());
    }
    assert!(worst_v < 1e-6, "max |dV| {worst_v:e}");
    assert!(worst_t < 1e-6, "max |dtheta| {worst_t:e}");
}

#[test]
fn ieee118_solution_reproduces_schedule() {
    let (model, y, snap) = base_snapshot(CASE118);
    let (p_sched, q_sched) = model.scheduled_injections();
    let (p, q) = ac_injections(&snap.v, &snap.theta, &y).unwrap();
    let has_gen = model.has_generator();
    for i in (0..model.n_bus()).filter(|&i| i != model.slack()) {
        assert!((p[i] - p_sched[i]).abs() < 1e-8, "P at bus {i}");
        if !has_gen[i] {
            assert!((q[i] - q_sched[i]).abs() < 1e-8, "Q at bus {i}");
        }
    }
}
