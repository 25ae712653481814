//! Estimator robustness metrics and reports.

mod report;
mod sweep;

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::attack::AttackFamily;
use crate::dataset::Dataset;
use crate::pinn::{forward_batch, MlpParams};
use crate::{Error, Result};

pub use report::{emit_report, read_report, Aggregate, MetricReport, REPORT_SCHEMA_VERSION};
pub use sweep::{scaled_perturbation_eval, PerturbationRow, PerturbationTable, PERTURBATION_RULE};

/// `q`-quantile (`q` in `[0, 1]`) by linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub name: String,
    pub family: Option<AttackFamily>,
    pub zone: Option<String>,
    pub n_samples: usize,
    pub mae_v: f64,
    pub mae_theta: f64,
    /// Unweighted mean of the two channels.
    pub mae_overall: f64,
    pub mae95_v: f64,
    pub mae99_v: f64,
    pub mae95_theta: f64,
    pub mae99_theta: f64,
}

/// Per-sample bus-mean absolute errors `(V, theta)`.
pub fn per_sample_errors(params: &MlpParams, ds: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    if ds.n_bus != params.n_bus {
        return Err(Error::Dimension {
            expected: params.n_bus,
            got: ds.n_bus,
        });
    }
    let n = ds.n_bus;
    let mut ev = Vec::with_capacity(ds.len());
    let mut et = Vec::with_capacity(ds.len());
    for chunk in ds.snapshots.chunks(256) {
        let part = Dataset {
            n_bus: n,
            snapshots: chunk.to_vec(),
        };
        let out = forward_batch(params, part.inputs().view())?;
        let v_hat = out.slice(s![.., 2 * n..3 * n]);
        let th_hat = out.slice(s![.., 3 * n..4 * n]);
        for (r, snap) in chunk.iter().enumerate() {
            let dv: f64 = (0..n).map(|i| (v_hat[(r, i)] - snap.v[i]).abs()).sum();
            let dt: f64 = (0..n).map(|i| (th_hat[(r, i)] - snap.theta[i]).abs()).sum();
            ev.push(dv / n as f64);
            et.push(dt / n as f64);
        }
    }
    Ok((ev, et))
}

pub fn metrics_from_errors(name: &str, ev: &[f64], et: &[f64]) -> Result<DatasetMetrics> {
    if ev.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (mae_v, mae_theta) = (mean(ev), mean(et));
    Ok(DatasetMetrics {
        name: name.to_string(),
        family: None,
        zone: None,
        n_samples: ev.len(),
        mae_v,
        mae_theta,
        mae_overall: 0.5 * (mae_v + mae_theta),
        mae95_v: percentile(ev, 0.95),
        mae99_v: percentile(ev, 0.99),
        mae95_theta: percentile(et, 0.95),
        mae99_theta: percentile(et, 0.99),
    })
}

/// MAE of the estimator's state outputs against the dataset labels.
pub fn mae(params: &MlpParams, ds: &Dataset, name: &str) -> Result<DatasetMetrics> {
    let (ev, et) = per_sample_errors(params, ds)?;
    metrics_from_errors(name, &ev, &et)
}
