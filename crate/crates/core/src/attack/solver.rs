//! Augmented-Lagrangian maximisation with an L-BFGS inner loop.
//!
//! Two-sided constraints `lo <= c(x) <= hi` get one Powell-Hestenes-
//! Rockafellar multiplier per finite side; `lo == hi` is an equality with a
//! free multiplier.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Smooth program: maximise `objective` subject to `lower <= c(x) <= upper`.
pub(crate) trait Nlp {
    fn n_vars(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// Objective value; overwrites `grad`.
    fn objective(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Objective without smoothing, for reporting.
    fn objective_exact(&self, x: &[f64]) -> f64;
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    /// Accumulates `J(x)^T w` into `grad`.
    fn constraints_vjp(&self, x: &[f64], w: &[f64], grad: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_outer: usize,
    /// Relative objective change counted as a stall.
    pub stall_tol: f64,
    /// Outer iterations the stall must persist.
    pub stall_window: usize,
    /// Constraint violation accepted as feasible by the solver. Kept below
    /// the checker tolerance.
    pub feas_tol: f64,
    pub max_inner: usize,
    pub memory: usize,
    pub rho_init: f64,
    pub rho_max: f64,
    /// Random restarts in addition to the baseline start.
    pub restarts: usize,
    pub restart_dv: f64,
    pub restart_dtheta: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer: 50,
            stall_tol: 1e-8,
            stall_window: 5,
            feas_tol: 1e-7,
            max_inner: 200,
            memory: 8,
            rho_init: 10.0,
            rho_max: 1e10,
            restarts: 3,
            restart_dv: 0.03,
            restart_dtheta: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// Feasible point improving on the baseline.
    Optimal,
    /// No feasible improvement; the baseline is returned.
    Degenerate,
    /// No point met the feasibility tolerance.
    Infeasible,
    /// The family does not apply to the zone.
    Skipped,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Degenerate => "degenerate",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Skipped => "skipped",
        }
    }
}

/// Violation above which an inner solve that also worsened tenfold is
/// rejected.
const RUNAWAY_VIOLATION: f64 = 1.0;

#[derive(Clone, Debug)]
pub(crate) struct AlOutcome {
    /// Best feasible iterate and its exact objective.
    pub best: Option<(Vec<f64>, f64)>,
    /// Best-feasible objective after each outer iteration.
    #[cfg_attr(not(test), allow(dead_code))]
    pub best_trace: Vec<Option<f64>>,
    pub outer_iterations: usize,
}

pub(crate) fn max_violation(c: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    c.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| (v - h).max(l - v).max(0.0))
        .fold(0.0, f64::max)
}

struct Lagrangian<'p, P: Nlp> {
    nlp: &'p P,
    rho: f64,
    mu_lo: Vec<f64>,
    mu_hi: Vec<f64>,
    c: Vec<f64>,
    w: Vec<f64>,
}

impl<P: Nlp> Lagrangian<'_, P> {
    /// Value and gradient of `-f(x) + penalty(c(x))`.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (lo, hi) = (self.nlp.lower(), self.nlp.upper());
        let f = self.nlp.objective(x, grad);
        for g in grad.iter_mut() {
            *g = -*g;
        }
        self.nlp.constraints(x, &mut self.c);
        let rho = self.rho;
        let mut pen = 0.0;
        for k in 0..self.c.len() {
            let c = self.c[k];
            if lo[k] == hi[k] {
                let r = c - lo[k];
                pen += self.mu_lo[k] * r + 0.5 * rho * r * r;
                self.w[k] = self.mu_lo[k] + rho * r;
            } else {
                let mut wk = 0.0;
                if hi[k].is_finite() {
                    let t = (self.mu_hi[k] + rho * (c - hi[k])).max(0.0);
                    pen += (t * t - self.mu_hi[k] * self.mu_hi[k]) / (2.0 * rho);
                    wk += t;
                }
                if lo[k].is_finite() {
                    let t = (self.mu_lo[k] + rho * (lo[k] - c)).max(0.0);
                    pen += (t * t - self.mu_lo[k] * self.mu_lo[k]) / (2.0 * rho);
                    wk -= t;
                }
                self.w[k] = wk;
            }
        }
        self.nlp.constraints_vjp(x, &self.w, grad);
        -f + pen
    }

    fn update_multipliers(&mut self) {
        let (lo, hi) = (self.nlp.lower(), self.nlp.upper());
        for k in 0..self.c.len() {
            let c = self.c[k];
            if lo[k] == hi[k] {
                self.mu_lo[k] += self.rho * (c - lo[k]);
            } else {
                if hi[k].is_finite() {
                    self.mu_hi[k] = (self.mu_hi[k] + self.rho * (c - hi[k])).max(0.0);
                }
                if lo[k].is_finite() {
                    self.mu_lo[k] = (self.mu_lo[k] + self.rho * (lo[k] - c)).max(0.0);
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// L-BFGS with Armijo backtracking. Returns the final value.
pub(crate) fn lbfgs<F>(mut fun: F, x: &mut [f64], gtol: f64, max_iter: usize, memory: usize) -> f64
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = fun(x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; memory];
    for _ in 0..max_iter {
        if !fx.is_finite() || inf_norm(&g) <= gtol {
            break;
        }
        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        let gamma = hist
            .back()
            .map_or(1.0 / inf_norm(&g).max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        d.iter_mut().for_each(|di| *di *= gamma);
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hist.clear();
            d.iter_mut()
                .zip(&g)
                .for_each(|(di, gi)| *di = -gi / inf_norm(&g).max(1.0));
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = fun(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-14 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                    if hist.len() == memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    fx
}

/// One augmented-Lagrangian run from `x0`.
pub(crate) fn augmented_lagrangian<P: Nlp>(nlp: &P, x0: &[f64], opts: &SolverOptions) -> AlOutcome {
    assert_eq!(x0.len(), nlp.n_vars(), "start point has the wrong length");
    let m = nlp.lower().len();
    let mut al = Lagrangian {
        nlp,
        rho: opts.rho_init,
        mu_lo: vec![0.0; m],
        mu_hi: vec![0.0; m],
        c: vec![0.0; m],
        w: vec![0.0; m],
    };
    let mut x = x0.to_vec();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_trace = Vec::new();
    let mut objective_hist: Vec<f64> = Vec::new();
    nlp.constraints(&x, &mut al.c);
    let mut prev_violation = max_violation(&al.c, nlp.lower(), nlp.upper());
    let mut gtol = 1e-3;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let x_prev = x.clone();
        lbfgs(|z, g| al.eval(z, g), &mut x, gtol, opts.max_inner, opts.memory);
        nlp.constraints(&x, &mut al.c);
        let violation = max_violation(&al.c, nlp.lower(), nlp.upper());
        let f = nlp.objective_exact(&x);
        // a penalty too weak for the objective's curvature lets the inner
        // solve run away; retry from the previous iterate with a larger rho
        if !(violation <= (10.0 * prev_violation).max(RUNAWAY_VIOLATION)) && al.rho < opts.rho_max {
            x = x_prev;
            al.rho = (al.rho * 10.0).min(opts.rho_max);
            best_trace.push(best.as_ref().map(|(_, fb)| *fb));
            continue;
        }
        if violation <= opts.feas_tol && best.as_ref().is_none_or(|(_, fb)| f > *fb) {
            best = Some((x.clone(), f));
        }
        best_trace.push(best.as_ref().map(|(_, fb)| *fb));
        objective_hist.push(f);
        let h = objective_hist.len();
        if violation < opts.feas_tol && h > opts.stall_window {
            let past = objective_hist[h - 1 - opts.stall_window];
            if (f - past).abs() <= opts.stall_tol * f.abs().max(1e-12) {
                break;
            }
        }
        al.update_multipliers();
        if violation > 0.25 * prev_violation {
            al.rho = (al.rho * 10.0).min(opts.rho_max);
        }
        prev_violation = violation;
        gtol = (gtol * 0.1).max(1e-10);
    }
    AlOutcome {
        best,
        best_trace,
        outer_iterations: outer,
    }
}
