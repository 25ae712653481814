//! Reverse-mode gradients of the training objective.
//!
//! The forward pass records every layer's pre-activation and activation (the
//! tape); the reverse pass walks it back through the loss blocks, the AC
//! injection reconstruction and the affine/swish layers.

use ndarray::{Array2, Axis};

use super::loss::{component_losses, normalized_loss_grad, reconstruct_injections, split_blocks, ComponentLosses};
use super::mlp::{swish, swish_grad, MlpParams};
use super::objective::{dynamic_objective, objective_grads, ObjectiveParts, UncertaintyState};
use super::train::TrainConfig;
use crate::case_model::{ac_injections_vjp, Admittance};
use crate::dataset::Dataset;
use crate::{Error, Result};

/// Minibatch of inputs and state labels, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub v: Array2<f64>,
    pub theta: Array2<f64>,
}

impl Batch {
    pub fn from_dataset(ds: &Dataset, indices: &[usize]) -> Batch {
        let n = ds.n_bus;
        let mut x = Array2::zeros((indices.len(), 2 * n));
        let mut v = Array2::zeros((indices.len(), n));
        let mut theta = Array2::zeros((indices.len(), n));
        for (r, &k) in indices.iter().enumerate() {
            let snap = &ds.snapshots[k];
            for i in 0..n {
                x[(r, i)] = snap.p[i];
                x[(r, n + i)] = snap.q[i];
                v[(r, i)] = snap.v[i];
                theta[(r, i)] = snap.theta[i];
            }
        }
        Batch { x, v, theta }
    }

    pub fn all(ds: &Dataset) -> Batch {
        let idx: Vec<usize> = (0..ds.len()).collect();
        Self::from_dataset(ds, &idx)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    /// Same layout as [`MlpParams::data`].
    pub params: Vec<f64>,
    /// Zero unless the regime is dynamic.
    pub s: [f64; 4],
    pub losses: ComponentLosses,
    pub parts: ObjectiveParts,
}

struct Tape {
    /// Inputs to each affine layer.
    inputs: Vec<Array2<f64>>,
    /// Hidden-layer pre-activations.
    pre: Vec<Array2<f64>>,
    out: Array2<f64>,
}

fn record_forward(params: &MlpParams, x: &Array2<f64>) -> Tape {
    let mut inputs = Vec::with_capacity(params.n_affine());
    let mut pre = Vec::with_capacity(params.n_layers);
    let mut h = x.clone();
    for l in 0..params.n_affine() {
        let (w, b) = params.layer(l);
        let mut z = h.dot(&w);
        z += &b.insert_axis(Axis(0));
        inputs.push(h);
        if l < params.n_layers {
            h = z.mapv(swish);
            pre.push(z);
        } else {
            h = z;
        }
    }
    Tape { inputs, pre, out: h }
}

/// Exact gradients of the total objective with respect to the network
/// parameters and (in the dynamic regime) the log-uncertainties.
pub fn gradients(
    batch: &Batch,
    params: &MlpParams,
    u: &UncertaintyState,
    cfg: &TrainConfig,
    y: &Admittance,
) -> Result<Gradients> {
    if batch.x.ncols() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            got: batch.x.ncols(),
        });
    }
    let n = params.n_bus;
    let rows = batch.len();
    let tape = record_forward(params, &batch.x);
    let [p_hat, q_hat, v_hat, th_hat] = split_blocks(&tape.out, n);
    let (p_inj, q_inj) = reconstruct_injections(&v_hat, &th_hat, y);

    let flat = |a: &Array2<f64>| a.as_slice().unwrap().to_vec();
    let eps = cfg.eps_norm;
    let (l_p, dp_hat, dp_inj) = normalized_loss_grad(&flat(&p_hat), &flat(&p_inj), eps, true);
    let (l_q, dq_hat, dq_inj) = normalized_loss_grad(&flat(&q_hat), &flat(&q_inj), eps, true);
    let (l_v, _, dv_hat) = normalized_loss_grad(&flat(&batch.v), &flat(&v_hat), eps, false);
    let (l_t, _, dth_hat) = normalized_loss_grad(&flat(&batch.theta), &flat(&th_hat), eps, false);
    let losses = ComponentLosses {
        p: l_p,
        q: l_q,
        v: l_v,
        theta: l_t,
    };
    let parts = dynamic_objective(&losses, u, cfg.lambda_r, cfg.eps_ratio);
    let (d_loss, d_s) = objective_grads(&losses, u, cfg.lambda_r, cfg.eps_ratio);

    // dTotal/dOutput, assembled block by block
    let mut d_out = Array2::<f64>::zeros((rows, 4 * n));
    let dp_hat = dp_hat.unwrap();
    let dq_hat = dq_hat.unwrap();
    let mut dv = vec![0.0; n];
    let mut dth = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut gq = vec![0.0; n];
    for r in 0..rows {
        let base = r * n;
        for i in 0..n {
            gp[i] = d_loss[0] * dp_inj[base + i];
            gq[i] = d_loss[1] * dq_inj[base + i];
            dv[i] = d_loss[2] * dv_hat[base + i];
            dth[i] = d_loss[3] * dth_hat[base + i];
        }
        ac_injections_vjp(
            v_hat.row(r).as_slice().unwrap(),
            th_hat.row(r).as_slice().unwrap(),
            y,
            &gp,
            &gq,
            &mut dv,
            &mut dth,
        );
        let mut row = d_out.row_mut(r);
        for i in 0..n {
            row[i] = d_loss[0] * dp_hat[base + i];
            row[n + i] = d_loss[1] * dq_hat[base + i];
            row[2 * n + i] = dv[i];
            row[3 * n + i] = dth[i];
        }
    }

    let mut grad = vec![0.0; params.len()];
    let mut dz = d_out;
    for l in (0..params.n_affine()).rev() {
        if l < params.n_layers {
            dz.zip_mut_with(&tape.pre[l], |d, &z| *d *= swish_grad(z));
        }
        let (offset, (fi, fo)) = params.layer_offset(l);
        let dw = tape.inputs[l].t().dot(&dz);
        grad[offset..offset + fi * fo].copy_from_slice(dw.as_slice().unwrap());
        let db = dz.sum_axis(Axis(0));
        grad[offset + fi * fo..offset + fi * fo + fo].copy_from_slice(db.as_slice().unwrap());
        if l > 0 {
            let (w, _) = params.layer(l);
            dz = dz.dot(&w.t());
        }
    }

    let d_s = if u.trainable() { d_s } else { [0.0; 4] };
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(describe_param(params, k)));
    }
    if let Some(m) = d_s.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(format!(
            "log-uncertainty {}",
            ["s_p", "s_q", "s_v", "s_theta"][m]
        )));
    }
    Ok(Gradients {
        params: grad,
        s: d_s,
        losses,
        parts,
    })
}

/// Largest relative error between [`gradients`] and central differences
/// with step `h`, over parameter coordinates `coords` and, when the regime
/// is dynamic, all four log-uncertainties.
///
/// Relative error is `|a - f| / max(|a|, |f|, floor)`; the floor keeps
/// coordinates whose true derivative vanishes from dividing noise by zero.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_check(
    batch: &Batch,
    params: &MlpParams,
    u: &UncertaintyState,
    cfg: &TrainConfig,
    y: &Admittance,
    coords: &[usize],
    h: f64,
    floor: f64,
) -> Result<f64> {
    let g = gradients(batch, params, u, cfg, y)?;
    let objective = |p: &MlpParams, u: &UncertaintyState| -> Result<f64> {
        let l = component_losses(batch, p, y, cfg.eps_norm)?;
        Ok(dynamic_objective(&l, u, cfg.lambda_r, cfg.eps_ratio).total)
    };
    let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(floor);
    let mut worst = 0.0_f64;
    let mut p = params.clone();
    for &k in coords {
        let x0 = p.data[k];
        p.data[k] = x0 + h;
        let fp = objective(&p, u)?;
        p.data[k] = x0 - h;
        let fm = objective(&p, u)?;
        p.data[k] = x0;
        worst = worst.max(rel(g.params[k], (fp - fm) / (2.0 * h)));
    }
    if u.trainable() {
        for m in 0..4 {
            let (mut up, mut um) = (*u, *u);
            up.s[m] += h;
            um.s[m] -= h;
            let fd = (objective(params, &up)? - objective(params, &um)?) / (2.0 * h);
            worst = worst.max(rel(g.s[m], fd));
        }
    }
    Ok(worst)
}

fn describe_param(params: &MlpParams, k: usize) -> String {
    for l in 0..params.n_affine() {
        let (offset, (fi, fo)) = params.layer_offset(l);
        if k < offset + fi * fo {
            return format!("layer {l} weight {}", k - offset);
        }
        if k < offset + fi * fo + fo {
            return format!("layer {l} bias {}", k - offset - fi * fo);
        }
    }
    format!("parameter {k}")
}
