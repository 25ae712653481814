use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{metrics_from_errors, per_sample_errors, DatasetMetrics};
use crate::dataset::{Dataset, SnapshotKind};
use crate::pinn::MlpParams;
use crate::{rng, Error, Result};

/// Recorded in every table so the sign convention travels with the numbers.
pub const PERTURBATION_RULE: &str = "P_i, Q_i scaled by (1 + level) on the selected buses";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    /// Fraction, e.g. `0.05` for 5%.
    pub level: f64,
    /// Overall MAE per entry of [`PerturbationTable::bus_counts`].
    pub mae: Vec<f64>,
    pub metrics: Vec<DatasetMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTable {
    pub rule: String,
    pub seed: u64,
    pub bus_counts: Vec<usize>,
    pub rows: Vec<PerturbationRow>,
}

impl PerturbationTable {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["level".to_string()];
        h.extend(self.bus_counts.iter().map(|k| format!("mae_{k}bus")));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![format!("{:?}", r.level)];
                row.extend(r.mae.iter().map(|x| format!("{x:?}")));
                row
            })
            .collect()
    }
}

/// Scales the measured injections of `k` random buses per snapshot and
/// reports MAE against the unchanged state labels.
///
/// Each snapshot draws one bus ordering from its own stream; count `k` uses
/// its first `k` buses, so selections are nested across counts and shared
/// across levels.
pub fn scaled_perturbation_eval(
    params: &MlpParams,
    clean: &Dataset,
    levels: &[f64],
    bus_counts: &[usize],
    seed: u64,
) -> Result<PerturbationTable> {
    if clean.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = clean.n_bus;
    let k_max = bus_counts.iter().copied().max().unwrap_or(0);
    if k_max > n {
        return Err(Error::Config(format!(
            "cannot perturb {k_max} buses of a {n}-bus network"
        )));
    }
    if let Some(l) = levels.iter().find(|l| !(l.is_finite() && **l > -1.0)) {
        return Err(Error::Config(format!(
            "perturbation level {l} must be finite and above -1"
        )));
    }
    let orders: Vec<Vec<usize>> = (0..clean.len())
        .map(|s| sample(&mut rng::stream(seed, s as u64), n, k_max).into_vec())
        .collect();

    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut mae = Vec::with_capacity(bus_counts.len());
        let mut metrics = Vec::with_capacity(bus_counts.len());
        for &k in bus_counts {
            let mut ds = clean.clone();
            for (snap, order) in ds.snapshots.iter_mut().zip(&orders) {
                for &i in &order[..k] {
                    snap.p[i] *= 1.0 + level;
                    snap.q[i] *= 1.0 + level;
                }
                snap.kind = SnapshotKind::Perturbed;
            }
            let (ev, et) = per_sample_errors(params, &ds)?;
            let m = metrics_from_errors(&format!("level{level}_k{k}"), &ev, &et)?;
            mae.push(m.mae_overall);
            metrics.push(m);
        }
        rows.push(PerturbationRow { level, mae, metrics });
    }
    Ok(PerturbationTable {
        rule: PERTURBATION_RULE.to_string(),
        seed,
        bus_counts: bus_counts.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::dataset::Snapshot;
    use crate::eval::mae;

    fn random_dataset(n: usize, m: usize) -> Dataset {
        let mut r = rng::stream(3, 0);
        Dataset {
            n_bus: n,
            snapshots: (0..m)
                .map(|k| Snapshot {
                    p: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
                    q: (0..n).map(|_| r.random_range(-0.5..0.5)).collect(),
                    v: (0..n).map(|_| r.random_range(0.95..1.05)).collect(),
                    theta: (0..n).map(|_| r.random_range(-0.3..0.3)).collect(),
                    kind: SnapshotKind::Clean,
                    seed: k as u64,
                    clean: None,
                })
                .collect(),
        }
    }

    fn net(n: usize) -> MlpParams {
        MlpParams::init(n, 2, 16, &mut rng::stream(9, 0))
    }

    #[test]
    fn zero_level_matches_clean_mae() {
        let ds = random_dataset(6, 20);
        let p = net(6);
        let t = scaled_perturbation_eval(&p, &ds, &[0.0], &[1, 6], 5).unwrap();
        let clean = mae(&p, &ds, "clean").unwrap().mae_overall;
        assert_eq!(t.rows[0].mae, vec![clean, clean]);
    }

    #[test]
    fn layout_and_determinism() {
        let ds = random_dataset(12, 10);
        let p = net(12);
        let levels = [0.05, 0.1, 0.2, 0.3];
        let a = scaled_perturbation_eval(&p, &ds, &levels, &[1, 10], 11).unwrap();
        let b = scaled_perturbation_eval(&p, &ds, &levels, &[1, 10], 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.csv_header(), vec!["level", "mae_1bus", "mae_10bus"]);
        assert_eq!(a.csv_rows().len(), 4);
        assert!(a.rows.iter().all(|r| r.mae.iter().all(|x| *x >= 0.0)));
    }

    #[test]
    fn too_many_buses_is_an_error() {
        let ds = random_dataset(4, 3);
        assert!(scaled_perturbation_eval(&net(4), &ds, &[0.1], &[5], 0).is_err());
    }
}
