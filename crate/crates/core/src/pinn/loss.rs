use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::grad::Batch;
use super::mlp::{forward_batch, MlpParams};
use crate::case_model::{ac_injections_into, Admittance};
use crate::Result;

/// Population mean and standard deviation.
pub(crate) fn moments(a: &[f64]) -> (f64, f64) {
    let d = a.len() as f64;
    let mean = a.iter().sum::<f64>() / d;
    let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    (mean, var.sqrt())
}

/// `(1/d) sum_k ((a_k - b_k) / (sigma_a + eps))^2` with `sigma_a` the
/// population standard deviation of the reference `a`.
pub fn normalized_loss(a: &[f64], b: &[f64], eps: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (_, sigma) = moments(a);
    let scale = sigma + eps;
    a.iter().zip(b).map(|(x, y)| ((x - y) / scale).powi(2)).sum::<f64>() / a.len() as f64
}

/// Value and gradients of [`normalized_loss`]. The gradient with respect to
/// `a` includes the path through `sigma_a` and is only formed when
/// `reference_is_variable`.
pub(crate) fn normalized_loss_grad(
    a: &[f64],
    b: &[f64],
    eps: f64,
    reference_is_variable: bool,
) -> (f64, Option<Vec<f64>>, Vec<f64>) {
    let d = a.len() as f64;
    let (mean, sigma) = moments(a);
    let scale = sigma + eps;
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let value = sq / (d * scale * scale);
    let coef = 2.0 / (d * scale * scale);
    let db: Vec<f64> = a.iter().zip(b).map(|(x, y)| -coef * (x - y)).collect();
    let da = reference_is_variable.then(|| {
        // dL/dsigma * dsigma/da_k, dsigma/da_k = (a_k - mean) / (d sigma)
        let dsigma = -2.0 * sq / (d * scale * scale * scale);
        let through_sigma = if sigma > 0.0 { dsigma / (d * sigma) } else { 0.0 };
        a.iter()
            .zip(b)
            .map(|(x, y)| coef * (x - y) + through_sigma * (x - mean))
            .collect()
    });
    (value, da, db)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentLosses {
    pub p: f64,
    pub q: f64,
    pub v: f64,
    pub theta: f64,
}

impl ComponentLosses {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p, self.q, self.v, self.theta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ComponentLosses {
            p: a[0],
            q: a[1],
            v: a[2],
            theta: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }
}

/// Splits a batch output into its four `B x n` blocks.
pub(crate) fn split_blocks(out: &Array2<f64>, n: usize) -> [Array2<f64>; 4] {
    std::array::from_fn(|k| out.slice(s![.., k * n..(k + 1) * n]).to_owned())
}

/// AC injections reconstructed row by row from predicted states.
pub(crate) fn reconstruct_injections(
    v: &Array2<f64>,
    theta: &Array2<f64>,
    y: &Admittance,
) -> (Array2<f64>, Array2<f64>) {
    let (rows, n) = v.dim();
    let mut p = Array2::zeros((rows, n));
    let mut q = Array2::zeros((rows, n));
    for r in 0..rows {
        let vr = v.row(r);
        let tr = theta.row(r);
        let mut pr = p.row_mut(r);
        let mut qr = q.row_mut(r);
        ac_injections_into(
            vr.as_slice().unwrap(),
            tr.as_slice().unwrap(),
            y,
            pr.as_slice_mut().unwrap(),
            qr.as_slice_mut().unwrap(),
        );
    }
    (p, q)
}

/// Batch-mean normalised losses. Moments of each reference block are taken
/// over the whole minibatch (all samples x all buses).
pub fn component_losses(batch: &Batch, params: &MlpParams, y: &Admittance, eps_norm: f64) -> Result<ComponentLosses> {
    let out = forward_batch(params, batch.x.view())?;
    let [p_hat, q_hat, v_hat, th_hat] = split_blocks(&out, params.n_bus);
    let (p_inj, q_inj) = reconstruct_injections(&v_hat, &th_hat, y);
    let flat = |a: &Array2<f64>| a.as_slice().unwrap().to_vec();
    Ok(ComponentLosses {
        p: normalized_loss(&flat(&p_hat), &flat(&p_inj), eps_norm),
        q: normalized_loss(&flat(&q_hat), &flat(&q_inj), eps_norm),
        v: normalized_loss(&flat(&batch.v), &flat(&v_hat), eps_norm),
        theta: normalized_loss(&flat(&batch.theta), &flat(&th_hat), eps_norm),
    })
}
