use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objective::Regime;
use super::train::{
    train, TrainConfig, BATCH_RANGE, LAMBDA_RANGE, LAYER_CHOICES, LOG_SIGMA_RANGE, LR_RANGE, WIDTH_RANGE,
};
use crate::case_model::Admittance;
use crate::dataset::Dataset;
use crate::{rng, Error, Result};

/// Sampling ranges. Integer ranges are inclusive; `lr` is drawn
/// log-uniformly, everything else uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub n_layers: Vec<usize>,
    pub width: (usize, usize),
    pub batch: (usize, usize),
    pub lr: (f64, f64),
    pub lambda_r: (f64, f64),
    /// Sampled only when searching the fixed regime.
    pub log_sigma: (f64, f64),
    /// Reduced epoch budget per trial.
    pub epochs: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_layers: LAYER_CHOICES.to_vec(),
            width: WIDTH_RANGE,
            batch: BATCH_RANGE,
            lr: LR_RANGE,
            lambda_r: LAMBDA_RANGE,
            log_sigma: LOG_SIGMA_RANGE,
            epochs: 5,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let probe = |cfg: TrainConfig| cfg.validate();
        let base = TrainConfig::default();
        if self.n_layers.is_empty() || self.epochs == 0 {
            return Err(Error::Config("search space needs layer choices and epochs > 0".into()));
        }
        for &n_layers in &self.n_layers {
            probe(TrainConfig {
                n_layers,
                ..base.clone()
            })?;
        }
        for width in [self.width.0, self.width.1] {
            probe(TrainConfig { width, ..base.clone() })?;
        }
        for batch in [self.batch.0, self.batch.1] {
            probe(TrainConfig { batch, ..base.clone() })?;
        }
        for lr in [self.lr.0, self.lr.1] {
            probe(TrainConfig { lr, ..base.clone() })?;
        }
        for lambda_r in [self.lambda_r.0, self.lambda_r.1] {
            probe(TrainConfig {
                lambda_r,
                ..base.clone()
            })?;
        }
        for s in [self.log_sigma.0, self.log_sigma.1] {
            probe(TrainConfig {
                fixed_log_sigmas: Some([s; 4]),
                ..base.clone()
            })?;
        }
        if self.width.0 > self.width.1
            || self.batch.0 > self.batch.1
            || self.lr.0 > self.lr.1
            || self.lambda_r.0 > self.lambda_r.1
            || self.log_sigma.0 > self.log_sigma.1
        {
            return Err(Error::Config("search range with lower bound above upper bound".into()));
        }
        Ok(())
    }

    /// Space that varies only the fixed-regime log-uncertainties and holds
    /// architecture and optimiser settings at `base`.
    pub fn weights_only(base: &TrainConfig, log_sigma: (f64, f64), epochs: usize) -> Self {
        SearchSpace {
            n_layers: vec![base.n_layers],
            width: (base.width, base.width),
            batch: (base.batch, base.batch),
            lr: (base.lr, base.lr),
            lambda_r: (base.lambda_r, base.lambda_r),
            log_sigma,
            epochs,
        }
    }

    /// Draws one configuration; fields not searched are copied from `base`.
    pub fn sample(&self, base: &TrainConfig, regime: Regime, rng: &mut impl Rng) -> TrainConfig {
        let n_layers = self.n_layers[rng.random_range(0..self.n_layers.len())];
        let width = rng.random_range(self.width.0..=self.width.1);
        let batch = rng.random_range(self.batch.0..=self.batch.1);
        let lr = if self.lr.0 == self.lr.1 {
            self.lr.0
        } else {
            (rng.random_range(0.0..=1.0) * (self.lr.1.ln() - self.lr.0.ln()) + self.lr.0.ln()).exp()
        };
        let lambda_r = rng.random_range(self.lambda_r.0..=self.lambda_r.1);
        let fixed_log_sigmas = match regime {
            Regime::Fixed => Some(std::array::from_fn(|_| {
                rng.random_range(self.log_sigma.0..=self.log_sigma.1)
            })),
            _ => base.fixed_log_sigmas,
        };
        TrainConfig {
            n_layers,
            width,
            batch,
            lr,
            lambda_r,
            epochs: self.epochs,
            fixed_log_sigmas,
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: TrainConfig,
    /// `None` when the trial diverged.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_val_loss: f64,
    pub trials: Vec<TrialRecord>,
}

/// Random search with a caller-supplied trial evaluator. A trial counts as
/// diverged when the evaluator errors or returns a non-finite loss. Ties go
/// to the earlier trial.
pub fn random_search_with<F>(
    space: &SearchSpace,
    base: &TrainConfig,
    regime: Regime,
    n_trials: usize,
    seed: u64,
    mut trial: F,
) -> Result<SearchOutcome>
where
    F: FnMut(&TrainConfig) -> Result<f64>,
{
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    space.validate()?;
    let mut rng = rng::stream(seed, 0x5ea2c4);
    let mut trials = Vec::with_capacity(n_trials);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..n_trials {
        let config = space.sample(base, regime, &mut rng);
        let val_loss = trial(&config).ok().filter(|l| l.is_finite());
        if let Some(l) = val_loss {
            if best.is_none_or(|(_, b)| l < b) {
                best = Some((k, l));
            }
        }
        trials.push(TrialRecord { config, val_loss });
    }
    let (k, best_val_loss) = best.ok_or(Error::SearchDiverged(n_trials))?;
    Ok(SearchOutcome {
        best: trials[k].config.clone(),
        best_val_loss,
        trials,
    })
}

/// Random search that trains every sampled configuration and scores it by
/// validation total loss.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    train_ds: &Dataset,
    val_ds: &Dataset,
    y: &Admittance,
    space: &SearchSpace,
    base: &TrainConfig,
    regime: Regime,
    n_trials: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if regime == Regime::Frozen {
        return Err(Error::Config("the frozen regime has nothing to search".into()));
    }
    random_search_with(space, base, regime, n_trials, seed, |cfg| {
        let start = cfg.initial_state(regime, None)?;
        let out = train(train_ds, val_ds, y, cfg, start)?;
        out.val_loss.ok_or(Error::EmptyDataset)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        SearchSpace::default()
    }

    #[test]
    fn single_trial_returns_its_sample() {
        let base = TrainConfig::default();
        let out = random_search_with(&space(), &base, Regime::Dynamic, 1, 4, |_| Ok(0.5)).unwrap();
        let expect = space().sample(&base, Regime::Dynamic, &mut rng::stream(4, 0x5ea2c4));
        assert_eq!(out.best, expect);
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn diverged_trials_are_skipped() {
        let mut k = 0;
        let out = random_search_with(&space(), &TrainConfig::default(), Regime::Fixed, 2, 1, |_| {
            k += 1;
            if k == 1 {
                Ok(f64::NAN)
            } else {
                Ok(3.0)
            }
        })
        .unwrap();
        assert_eq!(out.trials[0].val_loss, None);
        assert_eq!(out.best, out.trials[1].config);
        assert!(out.best.fixed_log_sigmas.is_some());
    }

    #[test]
    fn all_diverged_is_an_error() {
        let r = random_search_with(&space(), &TrainConfig::default(), Regime::Dynamic, 3, 0, |_| {
            Err(Error::NonFiniteGradient("x".into()))
        });
        assert!(matches!(r, Err(Error::SearchDiverged(3))));
    }

    #[test]
    fn best_is_no_worse_than_median() {
        let out = random_search_with(&space(), &TrainConfig::default(), Regime::Dynamic, 10, 2, |c| {
            Ok(c.lr.ln().abs())
        })
        .unwrap();
        let mut losses: Vec<f64> = out.trials.iter().filter_map(|t| t.val_loss).collect();
        losses.sort_by(f64::total_cmp);
        assert!(out.best_val_loss <= losses[losses.len() / 2]);
    }

    #[test]
    fn weights_only_space_keeps_the_architecture() {
        let base = TrainConfig {
            width: 96,
            lr: 3e-4,
            ..TrainConfig::default()
        };
        let space = SearchSpace::weights_only(&base, (-1.0, 1.0), 30);
        space.validate().unwrap();
        let c = space.sample(&base, Regime::Fixed, &mut rng::stream(1, 0));
        assert_eq!(
            (c.n_layers, c.width, c.batch, c.lr, c.lambda_r),
            (2, 96, base.batch, 3e-4, base.lambda_r)
        );
        assert_eq!(c.epochs, 30);
        assert!(c.fixed_log_sigmas.unwrap().iter().all(|s| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn samples_respect_the_space() {
        let mut r = rng::stream(9, 0);
        for _ in 0..200 {
            let c = space().sample(&TrainConfig::default(), Regime::Fixed, &mut r);
            c.validate().unwrap();
        }
    }
}
