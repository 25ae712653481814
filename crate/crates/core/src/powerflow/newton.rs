use nalgebra::{DMatrix, DVector};

use crate::case_model::{ac_injections_into, Admittance, BusType, NetworkModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NrOptions {
    /// Convergence threshold on the max absolute mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NrOptions {
    fn default() -> Self {
        NrOptions {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Number of Newton updates taken.
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Newton-Raphson on the polar mismatch equations.
///
/// `p_spec` is enforced at every non-slack bus and `q_spec` at PQ buses.
/// PV and slack magnitudes are held at their `v_start` values and the slack
/// angle is the zero reference.
pub fn solve_nr(
    model: &NetworkModel,
    y: &Admittance,
    p_spec: &[f64],
    q_spec: &[f64],
    v_start: &[f64],
    theta_start: &[f64],
    opts: &NrOptions,
) -> Result<PfSolution> {
    let n = model.n_bus();
    for len in [p_spec.len(), q_spec.len(), v_start.len(), theta_start.len(), y.n()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    let slack = model.slack();
    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| model.buses[i].kind == BusType::Pq).collect();
    // position of each bus in the angle / magnitude blocks of the unknowns
    let mut ang_pos = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        ang_pos[i] = k;
    }
    let mut mag_pos = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        mag_pos[i] = pvpq.len() + k;
    }
    let dim = pvpq.len() + pq.len();

    let mut v = v_start.to_vec();
    let ref_angle = theta_start[slack];
    let mut theta: Vec<f64> = theta_start.iter().map(|t| t - ref_angle).collect();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut mismatch = DVector::zeros(dim);

    let mut iterations = 0;
    loop {
        ac_injections_into(&v, &theta, y, &mut p, &mut q);
        for &i in &pvpq {
            mismatch[ang_pos[i]] = p_spec[i] - p[i];
        }
        for &i in &pq {
            mismatch[mag_pos[i]] = q_spec[i] - q[i];
        }
        let worst = mismatch.amax();
        if !worst.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: worst,
            });
        }
        if worst < opts.tol {
            return Ok(PfSolution {
                v,
                theta,
                iterations,
                max_mismatch: worst,
            });
        }
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: worst,
            });
        }

        let jac = jacobian(y, &v, &theta, &p, &q, &ang_pos, &mag_pos, dim);
        let step = jac.lu().solve(&mismatch).ok_or(Error::SingularJacobian(iterations))?;
        for &i in &pvpq {
            theta[i] += step[ang_pos[i]];
        }
        for &i in &pq {
            v[i] += step[mag_pos[i]];
        }
        iterations += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn jacobian(
    y: &Admittance,
    v: &[f64],
    theta: &[f64],
    p: &[f64],
    q: &[f64],
    ang_pos: &[usize],
    mag_pos: &[usize],
    dim: usize,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(dim, dim);
    for i in 0..y.n() {
        let (ri_p, ri_q) = (ang_pos[i], mag_pos[i]);
        if ri_p == usize::MAX {
            continue;
        }
        for (j, g, b) in y.row(i) {
            let (cp, cq) = (ang_pos[j], mag_pos[j]);
            if i == j {
                let vi2 = v[i] * v[i];
                // dP/dth, dP/dV, dQ/dth, dQ/dV on the diagonal
                jac[(ri_p, cp)] += -q[i] - b * vi2;
                if cq != usize::MAX {
                    jac[(ri_p, cq)] += p[i] / v[i] + g * v[i];
                }
                if ri_q != usize::MAX {
                    jac[(ri_q, cp)] += p[i] - g * vi2;
                    if cq != usize::MAX {
                        jac[(ri_q, cq)] += q[i] / v[i] - b * v[i];
                    }
                }
                continue;
            }
            let (s, c) = (theta[i] - theta[j]).sin_cos();
            let vv = v[i] * v[j];
            let t_pc = g * c + b * s;
            let t_qs = g * s - b * c;
            if cp != usize::MAX {
                jac[(ri_p, cp)] += vv * t_qs;
                if ri_q != usize::MAX {
                    jac[(ri_q, cp)] += -vv * t_pc;
                }
            }
            if cq != usize::MAX {
                jac[(ri_p, cq)] += v[i] * t_pc;
                if ri_q != usize::MAX {
                    jac[(ri_q, cq)] += v[i] * t_qs;
                }
            }
        }
    }
    jac
}
