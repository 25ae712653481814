use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_nr, NrOptions, PfSolution};
use crate::case_model::{ac_injections, ac_injections_into, Admittance, BusType, NetworkModel};
use crate::dataset::{Dataset, Snapshot, SnapshotKind};
use crate::{Error, Result};

/// Minimum residual scale, p.u.
pub const RESIDUAL_FLOOR: f64 = 0.01;
/// Stealth thresholds are this fraction of the clean residual scales.
pub const STEALTH_FACTOR: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotSetConfig {
    pub n_samples: usize,
    /// Global multiplicative load scale, drawn uniformly per sample.
    pub load_scale_range: [f64; 2],
    /// Relative per-bus Gaussian jitter on top of the global scale.
    pub per_bus_jitter_sigma: f64,
    /// Additive Gaussian noise on measured P and Q, p.u.
    pub noise_sigma_pq: f64,
    pub rng_seed: u64,
}

impl Default for SnapshotSetConfig {
    fn default() -> Self {
        SnapshotSetConfig {
            n_samples: 14_822,
            load_scale_range: [0.85, 1.15],
            per_bus_jitter_sigma: 0.03,
            noise_sigma_pq: 0.01,
            rng_seed: 2024,
        }
    }
}

impl SnapshotSetConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.load_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "load_scale_range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if !(self.per_bus_jitter_sigma >= 0.0 && self.noise_sigma_pq >= 0.0) {
            return Err(Error::Config("noise and jitter sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub requested: usize,
    pub converged: usize,
    pub failed: usize,
}

/// JSON sidecar written next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub schema_version: u32,
    pub case: String,
    pub n_bus: usize,
    pub n_samples: usize,
    pub config: SnapshotSetConfig,
    pub residual_scales: Option<ResidualScales>,
    pub stats: GenerationStats,
    pub config_hash: String,
}

/// Draws `cfg.n_samples` load scenarios, solves each with Newton-Raphson and
/// records noisy injections with exact state labels.
///
/// Zero-injection buses (no load, no generation) carry exact zero
/// measurements. Samples that fail to converge are skipped; more than 10 %
/// failures aborts.
pub fn generate_snapshots(
    model: &NetworkModel,
    y: &Admittance,
    cfg: &SnapshotSetConfig,
) -> Result<(Dataset, GenerationStats)> {
    cfg.validate()?;
    let n = model.n_bus();
    let (v0, t0) = model.flat_start();
    let (p_base, q_base) = model.scheduled_injections();
    let opts = NrOptions::default();
    let base = solve_nr(model, y, &p_base, &q_base, &v0, &t0, &opts)?;

    let has_gen = model.has_generator();
    let zero_injection: Vec<bool> = (0..n)
        .map(|i| !has_gen[i] && model.buses[i].pd == 0.0 && model.buses[i].qd == 0.0)
        .collect();
    let total_load: f64 = model.buses.iter().map(|b| b.pd).sum();

    let results: Vec<Option<Snapshot>> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|k| {
            let seed = crate::rng::stream_seed(cfg.rng_seed, k as u64);
            let mut rng = crate::rng::stream(cfg.rng_seed, k as u64);
            let [lo, hi] = cfg.load_scale_range;
            let scale = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let mut pd = vec![0.0; n];
            let mut qd = vec![0.0; n];
            for i in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let f = scale * (1.0 + cfg.per_bus_jitter_sigma * z);
                pd[i] = model.buses[i].pd * f;
                qd[i] = model.buses[i].qd * f;
            }
            let ratio = if total_load != 0.0 {
                pd.iter().sum::<f64>() / total_load
            } else {
                1.0
            };
            let mut p_spec: Vec<f64> = pd.iter().map(|x| -x).collect();
            let mut q_spec: Vec<f64> = qd.iter().map(|x| -x).collect();
            for g in model.gens.iter().filter(|g| g.in_service) {
                let redispatch = if model.buses[g.bus].kind == BusType::Pv {
                    ratio
                } else {
                    1.0
                };
                p_spec[g.bus] += g.pg * redispatch;
                q_spec[g.bus] += g.qg;
            }
            let PfSolution { v, theta, .. } = solve_nr(model, y, &p_spec, &q_spec, &base.v, &base.theta, &opts).ok()?;
            let mut p_clean = vec![0.0; n];
            let mut q_clean = vec![0.0; n];
            ac_injections_into(&v, &theta, y, &mut p_clean, &mut q_clean);
            let mut p = p_clean.clone();
            let mut q = q_clean.clone();
            for i in 0..n {
                let zp: f64 = rng.sample(StandardNormal);
                let zq: f64 = rng.sample(StandardNormal);
                if zero_injection[i] {
                    p[i] = 0.0;
                    q[i] = 0.0;
                } else {
                    p[i] += cfg.noise_sigma_pq * zp;
                    q[i] += cfg.noise_sigma_pq * zq;
                }
            }
            Some(Snapshot {
                p,
                q,
                v,
                theta,
                kind: SnapshotKind::Clean,
                seed,
                clean: Some((p_clean, q_clean)),
            })
        })
        .collect();

    let failed = results.iter().filter(|r| r.is_none()).count();
    let stats = GenerationStats {
        requested: cfg.n_samples,
        converged: cfg.n_samples - failed,
        failed,
    };
    if failed * 10 > cfg.n_samples {
        return Err(Error::ConvergenceRate {
            failed,
            total: cfg.n_samples,
        });
    }
    Ok((
        Dataset {
            n_bus: n,
            snapshots: results.into_iter().flatten().collect(),
        },
        stats,
    ))
}

/// Clean-data residual scales and the stealth thresholds derived from them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualScales {
    pub tau_bar_p: f64,
    pub tau_bar_q: f64,
    pub tau_p: f64,
    pub tau_q: f64,
}

impl ResidualScales {
    pub fn from_maxima(max_p: f64, max_q: f64) -> Self {
        let tau_bar_p = max_p.max(RESIDUAL_FLOOR);
        let tau_bar_q = max_q.max(RESIDUAL_FLOOR);
        ResidualScales {
            tau_bar_p,
            tau_bar_q,
            tau_p: STEALTH_FACTOR * tau_bar_p,
            tau_q: STEALTH_FACTOR * tau_bar_q,
        }
    }
}

/// Maximum `|P - P_inj(V, theta)|` (and Q analog) over all samples and buses.
pub fn residual_scales(dataset: &Dataset, y: &Admittance) -> Result<ResidualScales> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut max_p, mut max_q) = (0.0f64, 0.0f64);
    for s in &dataset.snapshots {
        let (pi, qi) = ac_injections(&s.v, &s.theta, y)?;
        for i in 0..y.n() {
            max_p = max_p.max((s.p[i] - pi[i]).abs());
            max_q = max_q.max((s.q[i] - qi[i]).abs());
        }
    }
    Ok(ResidualScales::from_maxima(max_p, max_q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::test_cases::{CASE118, CASE4GS};
    use crate::case_model::{build_admittance, parse_case};

    fn setup(text: &str) -> (NetworkModel, Admittance) {
        let m = parse_case(text).unwrap();
        let y = build_admittance(&m).unwrap();
        (m, y)
    }

    #[test]
    fn zero_samples_give_empty_dataset() {
        let (m, y) = setup(CASE4GS);
        let cfg = SnapshotSetConfig {
            n_samples: 0,
            ..Default::default()
        };
        let (ds, stats) = generate_snapshots(&m, &y, &cfg).unwrap();
        assert!(ds.is_empty());
        assert_eq!(stats.failed, 0);
    }

    #[test]
    fn degenerate_config_reproduces_base_case() {
        let (m, y) = setup(CASE4GS);
        let cfg = SnapshotSetConfig {
            n_samples: 3,
            load_scale_range: [1.0, 1.0],
            per_bus_jitter_sigma: 0.0,
            noise_sigma_pq: 0.0,
            rng_seed: 1,
        };
        let (ds, _) = generate_snapshots(&m, &y, &cfg).unwrap();
        let (p, q) = m.scheduled_injections();
        let (v0, t0) = m.flat_start();
        let base = solve_nr(&m, &y, &p, &q, &v0, &t0, &NrOptions::default()).unwrap();
        for s in &ds.snapshots {
            assert_eq!(s.v, base.v);
            assert_eq!(s.theta, base.theta);
            assert_eq!(s.p, s.clean.as_ref().unwrap().0);
        }
    }

    #[test]
    fn labels_are_exact_and_generation_is_reproducible() {
        let (m, y) = setup(CASE118);
        let cfg = SnapshotSetConfig {
            n_samples: 20,
            ..Default::default()
        };
        let (a, stats) = generate_snapshots(&m, &y, &cfg).unwrap();
        let (b, _) = generate_snapshots(&m, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(stats.converged, 20);
        let (p_sched, _) = m.scheduled_injections();
        let zi: Vec<usize> = (0..m.n_bus())
            .filter(|&i| p_sched[i] == 0.0 && !m.has_generator()[i])
            .collect();
        assert!(!zi.is_empty());
        for s in &a.snapshots {
            let (pc, qc) = s.clean.as_ref().unwrap();
            let (pi, qi) = ac_injections(&s.v, &s.theta, &y).unwrap();
            for i in 0..m.n_bus() {
                assert!((pc[i] - pi[i]).abs() < 1e-8 && (qc[i] - qi[i]).abs() < 1e-8);
            }
            // measurement noise is present but labels are clean
            assert!(s.p.iter().zip(pc).any(|(a, b)| a != b));
            for &i in &zi {
                assert_eq!((s.p[i], s.q[i]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn noiseless_dataset_hits_residual_floor() {
        let (m, y) = setup(CASE4GS);
        let cfg = SnapshotSetConfig {
            n_samples: 10,
            noise_sigma_pq: 0.0,
            ..Default::default()
        };
        let (ds, _) = generate_snapshots(&m, &y, &cfg).unwrap();
        let r = residual_scales(&ds, &y).unwrap();
        assert_eq!((r.tau_bar_p, r.tau_bar_q), (0.01, 0.01));
        assert_eq!(r.tau_p, 0.95 * 0.01);
    }

    #[test]
    fn single_large_residual_sets_scale() {
        let (m, y) = setup(CASE4GS);
        let cfg = SnapshotSetConfig {
            n_samples: 1,
            noise_sigma_pq: 0.0,
            ..Default::default()
        };
        let (mut ds, _) = generate_snapshots(&m, &y, &cfg).unwrap();
        ds.snapshots[0].p[2] += 0.2;
        let r = residual_scales(&ds, &y).unwrap();
        assert!((r.tau_bar_p - 0.2).abs() < 1e-9);
        assert!((r.tau_p - 0.19).abs() < 1e-9);
        assert_eq!(r.tau_bar_q, 0.01);
    }

    #[test]
    fn noisy_dataset_ratio_is_exact() {
        let (m, y) = setup(CASE4GS);
        let cfg = SnapshotSetConfig {
            n_samples: 50,
            ..Default::default()
        };
        let (ds, _) = generate_snapshots(&m, &y, &cfg).unwrap();
        let r = residual_scales(&ds, &y).unwrap();
        assert!(r.tau_bar_p >= 0.01);
        assert_eq!(r.tau_p, STEALTH_FACTOR * r.tau_bar_p);
        assert!((r.tau_p / r.tau_bar_p - 0.95).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (_, y) = setup(CASE4GS);
        assert!(matches!(
            residual_scales(&Dataset::new(4), &y),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (m, y) = setup(CASE4GS);
        let cfg = SnapshotSetConfig {
            load_scale_range: [1.2, 0.8],
            ..Default::default()
        };
        assert!(matches!(generate_snapshots(&m, &y, &cfg), Err(Error::Config(_))));
    }
}
