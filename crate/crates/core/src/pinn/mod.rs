//! Physics-informed state estimator.
//!
//! A fully connected swish network maps measured injections `[P, Q]` to
//! `(P_hat, Q_hat, V_hat, theta_hat)`. Training minimises four normalised
//! losses (two physics terms comparing `P_hat, Q_hat` with the AC injections
//! reconstructed from `V_hat, theta_hat`, and two supervised state terms)
//! combined through learned, clipped log-uncertainties plus a one-sided
//! penalty that keeps the aggregate physics weight from falling below the
//! data weight.

mod checkpoint;
mod grad;
mod loss;
mod mlp;
mod objective;
mod search;
mod train;

#[cfg(test)]
pub(crate) mod test_support;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, write_trace_csv, Checkpoint,
};
pub use grad::{finite_difference_check, gradients, Batch, Gradients};
pub use loss::{component_losses, normalized_loss, ComponentLosses};
pub use mlp::{forward, forward_batch, swish, MlpParams, Prediction};
pub use objective::{dynamic_objective, objective_grads, ObjectiveParts, Regime, UncertaintyState, S_MAX, S_MIN};
pub use search::{random_search, random_search_with, SearchOutcome, SearchSpace, TrialRecord};
pub use train::{evaluate_objective, train, Adam, TrainConfig, TrainOutcome, TrainTrace};
