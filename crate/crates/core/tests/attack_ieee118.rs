mod support;

use std::time::Instant;

use gridshield_core::attack::{generate_attack_dataset, AttackGenConfig, SolverOptions, ZoneSpecFile, CHECK_TOL};
use gridshield_core::case_model::{build_admittance, parse_case};
use gridshield_core::powerflow::{generate_snapshots, residual_scales, SnapshotSetConfig};
use gridshield_core::{AttackFamily, FamilyConfig, FeasibleSetConfig};
use support::*;

#[test]
fn ieee118_zones_yield_verified_attacks_for_every_family() {
    let model = parse_case(CASE118).unwrap();
    let y = build_admittance(&model).unwrap();
    let reference = SnapshotSetConfig {
        n_samples: 300,
        ..Default::default()
    };
    let (pool, _) = generate_snapshots(&model, &y, &reference).unwrap();
    let scales = residual_scales(&pool, &y).unwrap();
    let clean = pool.subset(0..4);
    let spec: ZoneSpecFile = serde_json::from_str(
        r#"{"index_base": 0, "zones": [
            {"name": "zone1", "buses": [18, 19, 20, 21, 22]},
            {"name": "zone2", "buses": [69, 70, 71, 72]},
            {"name": "zone3", "buses": [22, 26, 30, 31, 112, 113, 114]}]}"#,
    )
    .unwrap();
    let zones = spec.resolve(&model).unwrap();
    let families: Vec<FamilyConfig> = AttackFamily::ALL.into_iter().map(FamilyConfig::default_for).collect();
    let cfg = AttackGenConfig {
        feasible: FeasibleSetConfig::from_scales(&scales),
        solver: SolverOptions::default(),
        seed: 11,
    };
    let t = Instant::now();
    let sets = generate_attack_dataset(&model, &y, &clean, &zones, &families, &cfg).unwrap();
    let per_instance = t.elapsed().as_secs_f64() / (clean.len() * 12) as f64;
    println!("{per_instance:.3} s per instance");
    assert_eq!(sets.len(), 12);
    for s in &sets {
        println!("{}: {:?}", s.file_name(), s.summary.status_counts);
        assert!(
            s.summary.emitted > 0,
            "{} emitted nothing: {:?}",
            s.file_name(),
            s.summary
        );
        for (k, e) in s.extras.iter().enumerate() {
            assert!(e[3].parse::<f64>().unwrap() <= CHECK_TOL);
            assert!(s.objectives[k] > 0.0);
        }
    }
}
