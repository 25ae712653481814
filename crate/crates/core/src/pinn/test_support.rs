use crate::case_model::{build_admittance, parse_case, test_cases, Admittance};
use crate::dataset::Dataset;
use crate::powerflow::{generate_snapshots, SnapshotSetConfig};

/// Noisy snapshots of the 4-bus case.
pub(crate) fn toy_dataset(n_samples: usize, seed: u64) -> (Dataset, Admittance) {
    let model = parse_case(test_cases::CASE4GS).unwrap();
    let y = build_admittance(&model).unwrap();
    let cfg = SnapshotSetConfig {
        n_samples,
        load_scale_range: [0.7, 1.3],
        per_bus_jitter_sigma: 0.05,
        noise_sigma_pq: 0.005,
        rng_seed: seed,
    };
    let (ds, _) = generate_snapshots(&model, &y, &cfg).unwrap();
    (ds, y)
}
