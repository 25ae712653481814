use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::{gradients, Batch};
use super::loss::{component_losses, ComponentLosses};
use super::mlp::MlpParams;
use super::objective::{dynamic_objective, ObjectiveParts, Regime, UncertaintyState};
use crate::case_model::Admittance;
use crate::dataset::Dataset;
use crate::{rng, Error, Result};

pub const LAYER_CHOICES: [usize; 3] = [2, 4, 6];
pub const WIDTH_RANGE: (usize, usize) = (64, 4096);
pub const BATCH_RANGE: (usize, usize) = (32, 128);
pub const LR_RANGE: (f64, f64) = (1e-5, 1e-3);
pub const LAMBDA_RANGE: (f64, f64) = (1e-4, 10.0);
pub const LOG_SIGMA_RANGE: (f64, f64) = (-5.0, 5.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub n_layers: usize,
    pub width: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda_r: f64,
    pub epochs: usize,
    pub eps_norm: f64,
    pub eps_ratio: f64,
    pub rng_seed: u64,
    /// Static log-uncertainties for the fixed regime.
    pub fixed_log_sigmas: Option<[f64; 4]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_layers: 2,
            width: 64,
            batch: 64,
            lr: 1e-3,
            lambda_r: 0.1,
            epochs: 100,
            eps_norm: 1e-8,
            eps_ratio: 1e-12,
            rng_seed: 7,
            fixed_log_sigmas: None,
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Display + Copy>(name: &str, x: T, (lo, hi): (T, T)) -> Result<()> {
    if x >= lo && x <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} {x} out of [{lo}, {hi}]")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !LAYER_CHOICES.contains(&self.n_layers) {
            return Err(Error::Config(format!("n_layers {} not in {{2, 4, 6}}", self.n_layers)));
        }
        check_range("width", self.width, WIDTH_RANGE)?;
        check_range("batch", self.batch, BATCH_RANGE)?;
        check_range("lr", self.lr, LR_RANGE)?;
        check_range("lambda_r", self.lambda_r, LAMBDA_RANGE)?;
        if !(self.eps_norm > 0.0 && self.eps_ratio > 0.0) {
            return Err(Error::Config("eps_norm and eps_ratio must be positive".into()));
        }
        if let Some(s) = self.fixed_log_sigmas {
            for x in s {
                check_range("fixed log-sigma", x, LOG_SIGMA_RANGE)?;
            }
        }
        Ok(())
    }

    /// Starting uncertainty state for `regime`. Frozen runs need the final
    /// state of a dynamic run.
    pub fn initial_state(&self, regime: Regime, dynamic_result: Option<&UncertaintyState>) -> Result<UncertaintyState> {
        match regime {
            Regime::Dynamic => Ok(UncertaintyState::dynamic()),
            Regime::Fixed => self
                .fixed_log_sigmas
                .map(UncertaintyState::fixed)
                .ok_or_else(|| Error::Config("fixed regime needs fixed_log_sigmas".into())),
            Regime::Frozen => dynamic_result
                .map(UncertaintyState::frozen_from)
                .ok_or_else(|| Error::Config("frozen regime needs a dynamic checkpoint".into())),
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..x.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * g[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
            x[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Per-epoch means over minibatches; weights are the end-of-epoch values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub total: Vec<f64>,
    pub l_p: Vec<f64>,
    pub l_q: Vec<f64>,
    pub l_v: Vec<f64>,
    pub l_theta: Vec<f64>,
    pub w_p: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_v: Vec<f64>,
    pub w_theta: Vec<f64>,
    pub w_phys: Vec<f64>,
    pub w_data: Vec<f64>,
    pub ratio: Vec<f64>,
}

impl TrainTrace {
    pub const COLUMNS: [&'static str; 12] = [
        "total", "l_p", "l_q", "l_v", "l_theta", "w_p", "w_q", "w_v", "w_theta", "w_phys", "w_data", "ratio",
    ];

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn row(&self, epoch: usize) -> [f64; 12] {
        [
            self.total[epoch],
            self.l_p[epoch],
            self.l_q[epoch],
            self.l_v[epoch],
            self.l_theta[epoch],
            self.w_p[epoch],
            self.w_q[epoch],
            self.w_v[epoch],
            self.w_theta[epoch],
            self.w_phys[epoch],
            self.w_data[epoch],
            self.ratio[epoch],
        ]
    }

    pub(crate) fn push(&mut self, total: f64, losses: [f64; 4], u: &UncertaintyState) {
        let w = u.weights();
        self.total.push(total);
        self.l_p.push(losses[0]);
        self.l_q.push(losses[1]);
        self.l_v.push(losses[2]);
        self.l_theta.push(losses[3]);
        self.w_p.push(w[0]);
        self.w_q.push(w[1]);
        self.w_v.push(w[2]);
        self.w_theta.push(w[3]);
        self.w_phys.push(w[0] + w[1]);
        self.w_data.push(w[2] + w[3]);
        self.ratio.push((w[0] + w[1]) / (w[2] + w[3]));
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub uncertainty: UncertaintyState,
    pub trace: TrainTrace,
    /// Total objective on the validation set with the final parameters;
    /// `None` when the validation set is empty.
    pub val_loss: Option<f64>,
}

/// Minibatch training. The regime is taken from `start`; only the dynamic
/// regime updates the log-uncertainties.
pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    y: &Admittance,
    cfg: &TrainConfig,
    start: UncertaintyState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_ds.n_bus != y.n() {
        return Err(Error::Dimension {
            expected: y.n(),
            got: train_ds.n_bus,
        });
    }
    let mut params = MlpParams::init(
        train_ds.n_bus,
        cfg.n_layers,
        cfg.width,
        &mut rng::stream(cfg.rng_seed, 0),
    );
    let mut u = start;
    let mut opt = Adam::new(params.len(), cfg.lr);
    let mut opt_s = Adam::new(4, cfg.lr);
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..train_ds.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.rng_seed, 1 + epoch as u64));
        let mut total = 0.0;
        let mut losses = [0.0; 4];
        let mut n_batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch = Batch::from_dataset(train_ds, chunk);
            let g = match gradients(&batch, &params, &u, cfg, y) {
                Ok(g) => g,
                Err(Error::NonFiniteGradient(what)) => {
                    return Err(Error::NonFinite { what, epoch, batch: b });
                }
                Err(e) => return Err(e),
            };
            if !g.parts.total.is_finite() || !g.losses.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss".into(),
                    epoch,
                    batch: b,
                });
            }
            opt.step(&mut params.data, &g.params);
            if u.trainable() {
                opt_s.step(&mut u.s, &g.s);
            }
            total += g.parts.total;
            for (acc, l) in losses.iter_mut().zip(g.losses.as_array()) {
                *acc += l;
            }
            n_batches += 1;
        }
        let k = n_batches as f64;
        trace.push(total / k, losses.map(|l| l / k), &u);
    }

    let val_loss = if val_ds.is_empty() {
        None
    } else {
        Some(evaluate_objective(val_ds, &params, &u, cfg, y)?.0.total)
    };
    Ok(TrainOutcome {
        params,
        uncertainty: u,
        trace,
        val_loss,
    })
}

/// Objective over `ds` evaluated in consecutive minibatches of `cfg.batch`
/// and averaged, so batch moments match training.
pub fn evaluate_objective(
    ds: &Dataset,
    params: &MlpParams,
    u: &UncertaintyState,
    cfg: &TrainConfig,
    y: &Admittance,
) -> Result<(ObjectiveParts, ComponentLosses)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut acc = [0.0; 4];
    let mut n = 0usize;
    for chunk in idx.chunks(cfg.batch.max(1)) {
        let l = component_losses(&Batch::from_dataset(ds, chunk), params, y, cfg.eps_norm)?;
        for (a, x) in acc.iter_mut().zip(l.as_array()) {
            *a += x;
        }
        n += 1;
    }
    let losses = ComponentLosses::from_array(acc.map(|a| a / n as f64));
    // J is linear in the losses, so the mean objective equals the objective of the mean losses.
    Ok((dynamic_objective(&losses, u, cfg.lambda_r, cfg.eps_ratio), losses))
}
