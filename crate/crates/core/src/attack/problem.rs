//! Compilation of one attack instance into a smooth nonlinear program.
//!
//! Decision variables are the attacked `V, theta, P, Q` of the zone buses
//! (slack angle and zero-injection `P, Q` are fixed) followed by the LRA
//! generator deltas. Exterior buses are constants. Every constraint is a
//! scalar function `c(x)` with bounds `lo <= c(x) <= hi`; `lo == hi` marks an
//! equality.

use std::collections::BTreeMap;

use rand::Rng;

use super::solver::Nlp;
use super::zones::AttackZone;
use super::{FamilyConfig, FeasibleSetConfig};
use crate::case_model::{bus_injection, bus_injection_vjp, terminal_flows_at, Admittance, NetworkModel, TerminalFlow};
use crate::dataset::{Snapshot, SnapshotKind};

/// Smoothing of `|x|` inside solver objectives.
const ABS_SMOOTHING: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Comp {
    P,
    Q,
}

#[derive(Clone, Debug)]
enum Con {
    /// `sum_k a_k x_k + constant`.
    Linear { terms: Vec<(usize, f64)>, constant: f64 },
    /// Measurement minus AC reconstruction at one bus.
    Residual { bus: usize, comp: Comp },
    /// Active transfer from a boundary bus into the exterior.
    Transfer(Vec<TerminalFlow>),
}

#[derive(Clone, Debug)]
enum Objective {
    /// `sum_Z (V - V0)^2 + (theta - theta0)^2`.
    StateDeviation,
    Lra {
        gens: Vec<LraGen>,
        /// `(P var, P0)`.
        loads: Vec<(usize, f64)>,
        lambda: f64,
    },
    Line {
        targets: Vec<(usize, usize, f64)>,
    },
}

#[derive(Clone, Copy, Debug)]
struct LraGen {
    up: usize,
    down: usize,
    p: usize,
    p0: f64,
    c_up: f64,
    c_down: f64,
}

/// A family-specific attack program over one zone and one baseline.
#[derive(Clone, Debug)]
pub struct AttackProblem<'a> {
    y: &'a Admittance,
    zone: Vec<usize>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    v0: Vec<f64>,
    th0: Vec<f64>,
    v_var: Vec<Option<usize>>,
    th_var: Vec<Option<usize>>,
    p_var: Vec<Option<usize>>,
    q_var: Vec<Option<usize>>,
    zero_injection: Vec<usize>,
    n_vars: usize,
    cons: Vec<Con>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    groups: Vec<&'static str>,
    objective: Objective,
}

/// Up to `max_lines` zone or boundary-interface lines by descending
/// `|B_ij|`, each new line touching the lines already picked. Parallel
/// circuits count once. Returns `(i, j, B_ij)` with `i < j`.
pub fn line_targets(y: &Admittance, zone: &AttackZone, max_lines: usize) -> Vec<(usize, usize, f64)> {
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (_, br) in y.branches() {
        let (i, j) = (br.from.min(br.to), br.from.max(br.to));
        if zone.contains(i) || zone.contains(j) {
            pairs.insert((i, j), y.get(i, j).1);
        }
    }
    let mut cands: Vec<(usize, usize, f64)> = pairs.into_iter().map(|((i, j), b)| (i, j, b)).collect();
    cands.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut picked: Vec<(usize, usize, f64)> = Vec::new();
    let mut used = vec![false; cands.len()];
    while picked.len() < max_lines {
        let next = cands.iter().enumerate().position(|(k, &(i, j, _))| {
            !used[k] && (picked.is_empty() || picked.iter().any(|&(a, b, _)| a == i || a == j || b == i || b == j))
        });
        match next {
            Some(k) => {
                used[k] = true;
                picked.push(cands[k]);
            }
            None => break,
        }
    }
    picked
}

/// Surrogate line stress `sum_T (B (th_i - th_j))^2 + (|B| (V_i - V_j))^2`.
pub fn line_stress(targets: &[(usize, usize, f64)], v: &[f64], theta: &[f64]) -> f64 {
    targets
        .iter()
        .map(|&(i, j, b)| (b * (theta[i] - theta[j])).powi(2) + (b * (v[i] - v[j])).powi(2))
        .sum()
}

/// Zone state deviation `sum_Z (V - V0)^2 + (theta - theta0)^2`.
pub fn state_deviation(zone: &[usize], attacked: &Snapshot, baseline: &Snapshot) -> f64 {
    zone.iter()
        .map(|&i| (attacked.v[i] - baseline.v[i]).powi(2) + (attacked.theta[i] - baseline.theta[i]).powi(2))
        .sum()
}

/// Exact family objective of an attacked snapshot. LRA generator deltas
/// are split as `up = max(d, 0)`, `down = max(-d, 0)`.
pub fn objective_value(
    model: &NetworkModel,
    y: &Admittance,
    zone: &AttackZone,
    family: &FamilyConfig,
    baseline: &Snapshot,
    attacked: &Snapshot,
) -> f64 {
    match family {
        FamilyConfig::Simple { .. } | FamilyConfig::Corruption { .. } => {
            state_deviation(&zone.buses, attacked, baseline)
        }
        FamilyConfig::LineOverload { max_lines } => {
            line_stress(&line_targets(y, zone, *max_lines), &attacked.v, &attacked.theta)
        }
        FamilyConfig::Lra { lambda, costs, .. } => {
            let (gens, loads) = lra_partition(model, zone, baseline);
            let (up, down) = lra_costs(model, costs.as_ref());
            let g: f64 = gens
                .iter()
                .map(|&i| {
                    let d = attacked.p[i] - baseline.p[i];
                    up[i] * d.max(0.0) - down[i] * (-d).max(0.0)
                })
                .sum();
            let l: f64 = loads.iter().map(|&i| (attacked.p[i] - baseline.p[i]).abs()).sum();
            g + lambda * l
        }
    }
}

/// Generator and load buses of a zone for the LRA family: generator buses
/// carry an in-service unit, load buses are the remaining buses outside the
/// zero-injection set.
pub(crate) fn lra_partition(model: &NetworkModel, zone: &AttackZone, baseline: &Snapshot) -> (Vec<usize>, Vec<usize>) {
    let is_gen = model.has_generator();
    let zi = zone.detect_zero_injection(&baseline.p, &baseline.q);
    zone.buses
        .iter()
        .copied()
        .filter(|i| !zi.contains(i))
        .partition(|&i| is_gen[i])
}

pub(crate) fn lra_costs(model: &NetworkModel, costs: Option<&super::CostVector>) -> (Vec<f64>, Vec<f64>) {
    match costs {
        Some(c) => (c.up.clone(), c.down.clone()),
        None => {
            let n = model.n_bus() as f64;
            let h: Vec<f64> = (0..model.n_bus()).map(|i| model.bus_id(i) as f64 / n).collect();
            (h.clone(), h)
        }
    }
}

/// Why a family cannot be posed on a zone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inapplicable(pub String);

impl<'a> AttackProblem<'a> {
    pub fn new(
        model: &NetworkModel,
        y: &'a Admittance,
        zone: &AttackZone,
        baseline: &Snapshot,
        feas: &FeasibleSetConfig,
        family: &FamilyConfig,
    ) -> Result<Self, Inapplicable> {
        let n = y.n();
        let graph = model.graph();
        let slack = model.slack();
        let zero_injection = zone.detect_zero_injection(&baseline.p, &baseline.q);
        let mut pb = AttackProblem {
            y,
            zone: zone.buses.clone(),
            p0: baseline.p.clone(),
            q0: baseline.q.clone(),
            v0: baseline.v.clone(),
            th0: baseline.theta.clone(),
            v_var: vec![None; n],
            th_var: vec![None; n],
            p_var: vec![None; n],
            q_var: vec![None; n],
            zero_injection: zero_injection.clone(),
            n_vars: 0,
            cons: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            groups: Vec::new(),
            objective: Objective::StateDeviation,
        };
        let mut k = 0;
        let mut next = || {
            k += 1;
            Some(k - 1)
        };
        for &i in &zone.buses {
            pb.v_var[i] = next();
            if i != slack {
                pb.th_var[i] = next();
            }
            if !zero_injection.contains(&i) {
                pb.p_var[i] = next();
                pb.q_var[i] = next();
            }
        }
        pb.n_vars = k;

        // Stealth at every bus whose reconstruction can move.
        let mut watched = zone.buses.clone();
        watched.extend(zone.exterior_neighbors(&graph));
        for &i in &watched {
            pb.push(
                Con::Residual { bus: i, comp: Comp::P },
                -feas.tau_p,
                feas.tau_p,
                "stealth P",
            );
            pb.push(
                Con::Residual { bus: i, comp: Comp::Q },
                -feas.tau_q,
                feas.tau_q,
                "stealth Q",
            );
        }

        for &i in &zone.boundary {
            let flows = terminal_flows_at(y, i, |j| !zone.contains(j));
            if flows.is_empty() {
                continue;
            }
            let f0: f64 = flows.iter().map(|f| f.value(&baseline.v, &baseline.theta)).sum();
            let band = feas.transfer_band(f0);
            pb.push(Con::Transfer(flows), f0 - band, f0 + band, "boundary transfer");
        }

        let eps = feas.conservation_tol(zone.buses.iter().map(|&i| baseline.p[i]).sum());
        for (comp, base, name) in [
            (Comp::P, &baseline.p, "conservation P"),
            (Comp::Q, &baseline.q, "conservation Q"),
        ] {
            let mut terms = Vec::new();
            let mut constant = 0.0;
            for &i in &zone.buses {
                // a fixed zero-injection measurement contributes exactly 0
                if let Some(k) = pb.meas_var(i, comp) {
                    terms.push((k, 1.0));
                }
                constant -= base[i];
            }
            pb.push(Con::Linear { terms, constant }, -eps, eps, name);
        }

        for &i in &zone.buses {
            pb.push_bound(pb.v_var[i], feas.v_min, feas.v_max, "voltage bounds");
            pb.push_bound(pb.th_var[i], feas.theta_min, feas.theta_max, "angle bounds");
        }

        match family {
            FamilyConfig::Simple {
                kappa_p,
                kappa_q,
                delta_p,
                delta_q,
            } => {
                for &i in &zone.buses {
                    let ep = kappa_p * baseline.p[i].abs().max(*delta_p);
                    let eq = kappa_q * baseline.q[i].abs().max(*delta_q);
                    pb.push_bound(
                        pb.p_var[i],
                        baseline.p[i] - ep,
                        baseline.p[i] + ep,
                        "injection envelope P",
                    );
                    pb.push_bound(
                        pb.q_var[i],
                        baseline.q[i] - eq,
                        baseline.q[i] + eq,
                        "injection envelope Q",
                    );
                }
            }
            FamilyConfig::Corruption { beta, eps_r } => {
                for &i in &zone.buses {
                    let (pi, qi) = bus_injection(i, &baseline.v, &baseline.theta, y);
                    let rp = baseline.p[i] - pi;
                    let rq = baseline.q[i] - qi;
                    let dp = (beta * rp.abs()).max(*eps_r);
                    let dq = (beta * rq.abs()).max(*eps_r);
                    pb.push(
                        Con::Residual { bus: i, comp: Comp::P },
                        rp - dp,
                        rp + dp,
                        "residual match P",
                    );
                    pb.push(
                        Con::Residual { bus: i, comp: Comp::Q },
                        rq - dq,
                        rq + dq,
                        "residual match Q",
                    );
                }
            }
            FamilyConfig::LineOverload { max_lines } => {
                let targets = line_targets(y, zone, *max_lines);
                if targets.is_empty() {
                    return Err(Inapplicable("zone has no candidate lines".into()));
                }
                pb.objective = Objective::Line { targets };
            }
            FamilyConfig::Lra {
                gen_cap,
                gen_fallback,
                load_cap,
                load_fallback,
                lambda,
                costs,
            } => {
                let (gens, loads) = lra_partition(model, zone, baseline);
                if gens.is_empty() && loads.len() < 2 {
                    return Err(Inapplicable(format!(
                        "zone has {} generator and {} load buses",
                        gens.len(),
                        loads.len()
                    )));
                }
                let (up, down) = lra_costs(model, costs.as_ref());
                let cap = |p0: f64, rel: f64, fallback: f64| {
                    if p0 == 0.0 {
                        fallback
                    } else {
                        rel * p0.abs()
                    }
                };
                let mut gen_terms = Vec::new();
                for &i in &gens {
                    let c = cap(baseline.p[i], *gen_cap, *gen_fallback);
                    let (ku, kd) = (pb.n_vars, pb.n_vars + 1);
                    pb.n_vars += 2;
                    pb.push_bound(Some(ku), 0.0, c, "generator cap");
                    pb.push_bound(Some(kd), 0.0, c, "generator cap");
                    let kp = pb.p_var[i].expect("generator bus outside zero-injection set");
                    pb.push(
                        Con::Linear {
                            terms: vec![(kp, 1.0), (ku, -1.0), (kd, 1.0)],
                            constant: -baseline.p[i],
                        },
                        0.0,
                        0.0,
                        "generator link",
                    );
                    gen_terms.push(LraGen {
                        up: ku,
                        down: kd,
                        p: kp,
                        p0: baseline.p[i],
                        c_up: up[i],
                        c_down: down[i],
                    });
                }
                let mut load_terms = Vec::new();
                let mut balance = Vec::new();
                let mut balance_const = 0.0;
                for &i in &loads {
                    let c = cap(baseline.p[i], *load_cap, *load_fallback);
                    let kp = pb.p_var[i].expect("load bus outside zero-injection set");
                    pb.push_bound(Some(kp), baseline.p[i] - c, baseline.p[i] + c, "load cap");
                    balance.push((kp, 1.0));
                    balance_const -= baseline.p[i];
                    load_terms.push((kp, baseline.p[i]));
                }
                if !balance.is_empty() {
                    pb.push(
                        Con::Linear {
                            terms: balance,
                            constant: balance_const,
                        },
                        0.0,
                        0.0,
                        "load balance",
                    );
                }
                pb.objective = Objective::Lra {
                    gens: gen_terms,
                    loads: load_terms,
                    lambda: *lambda,
                };
            }
        }
        Ok(pb)
    }

    fn push(&mut self, con: Con, lo: f64, hi: f64, group: &'static str) {
        self.cons.push(con);
        self.lo.push(lo);
        self.hi.push(hi);
        self.groups.push(group);
    }

    fn push_bound(&mut self, var: Option<usize>, lo: f64, hi: f64, group: &'static str) {
        if let Some(k) = var {
            self.push(
                Con::Linear {
                    terms: vec![(k, 1.0)],
                    constant: 0.0,
                },
                lo,
                hi,
                group,
            );
        }
    }

    fn meas_var(&self, bus: usize, comp: Comp) -> Option<usize> {
        match comp {
            Comp::P => self.p_var[bus],
            Comp::Q => self.q_var[bus],
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn group(&self, k: usize) -> &'static str {
        self.groups[k]
    }

    /// Baseline point: attacked equals clean, LRA deltas zero.
    pub fn baseline_x(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars];
        for &i in &self.zone {
            let set = |x: &mut Vec<f64>, var: Option<usize>, val: f64| {
                if let Some(k) = var {
                    x[k] = val;
                }
            };
            set(&mut x, self.v_var[i], self.v0[i]);
            set(&mut x, self.th_var[i], self.th0[i]);
            set(&mut x, self.p_var[i], self.p0[i]);
            set(&mut x, self.q_var[i], self.q0[i]);
        }
        x
    }

    /// Random start near the baseline: zone states jittered by up to `dv`
    /// and `dtheta`, measurements re-derived so the baseline residuals are
    /// kept.
    pub fn perturbed_x(&self, rng: &mut impl Rng, dv: f64, dtheta: f64) -> Vec<f64> {
        let mut v = self.v0.clone();
        let mut th = self.th0.clone();
        for &i in &self.zone {
            if self.v_var[i].is_some() {
                v[i] += rng.random_range(-dv..=dv);
            }
            if self.th_var[i].is_some() {
                th[i] += rng.random_range(-dtheta..=dtheta);
            }
        }
        let mut x = self.baseline_x();
        for &i in &self.zone {
            if let Some(k) = self.v_var[i] {
                x[k] = v[i];
            }
            if let Some(k) = self.th_var[i] {
                x[k] = th[i];
            }
            let (p1, q1) = bus_injection(i, &v, &th, self.y);
            let (p0i, q0i) = bus_injection(i, &self.v0, &self.th0, self.y);
            if let Some(k) = self.p_var[i] {
                x[k] = self.p0[i] + (p1 - p0i);
            }
            if let Some(k) = self.q_var[i] {
                x[k] = self.q0[i] + (q1 - q0i);
            }
        }
        if let Objective::Lra { gens, .. } = &self.objective {
            for g in gens {
                let d = x[g.p] - g.p0;
                x[g.up] = d.max(0.0);
                x[g.down] = (-d).max(0.0);
            }
        }
        x
    }

    /// Full `(P, Q, V, theta)` implied by `x`.
    pub fn state(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut p, mut q, mut v, mut th) = (self.p0.clone(), self.q0.clone(), self.v0.clone(), self.th0.clone());
        for &i in &self.zone {
            if let Some(k) = self.v_var[i] {
                v[i] = x[k];
            }
            if let Some(k) = self.th_var[i] {
                th[i] = x[k];
            }
            if let Some(k) = self.p_var[i] {
                p[i] = x[k];
            }
            if let Some(k) = self.q_var[i] {
                q[i] = x[k];
            }
        }
        for &i in &self.zero_injection {
            p[i] = 0.0;
            q[i] = 0.0;
        }
        (p, q, v, th)
    }

    /// Attacked snapshot for `x`, exterior copied from the baseline.
    pub fn snapshot(&self, x: &[f64], baseline: &Snapshot, family: super::AttackFamily) -> Snapshot {
        let (p, q, v, theta) = self.state(x);
        Snapshot {
            p,
            q,
            v,
            theta,
            kind: SnapshotKind::Attacked(family),
            seed: baseline.seed,
            clean: None,
        }
    }

    fn objective_impl(&self, x: &[f64], grad: Option<&mut [f64]>, smooth: bool) -> f64 {
        let mut scratch;
        let grad = match grad {
            Some(g) => {
                g.fill(0.0);
                g
            }
            None => {
                scratch = vec![0.0; self.n_vars];
                &mut scratch[..]
            }
        };
        match &self.objective {
            Objective::StateDeviation => {
                let mut f = 0.0;
                for &i in &self.zone {
                    if let Some(k) = self.v_var[i] {
                        let d = x[k] - self.v0[i];
                        f += d * d;
                        grad[k] += 2.0 * d;
                    }
                    if let Some(k) = self.th_var[i] {
                        let d = x[k] - self.th0[i];
                        f += d * d;
                        grad[k] += 2.0 * d;
                    }
                }
                f
            }
            Objective::Line { targets } => {
                let (_, _, v, th) = self.state(x);
                let mut dv = vec![0.0; v.len()];
                let mut dth = vec![0.0; v.len()];
                let mut f = 0.0;
                for &(i, j, b) in targets {
                    let a = th[i] - th[j];
                    let m = v[i] - v[j];
                    f += b * b * (a * a + m * m);
                    dth[i] += 2.0 * b * b * a;
                    dth[j] -= 2.0 * b * b * a;
                    dv[i] += 2.0 * b * b * m;
                    dv[j] -= 2.0 * b * b * m;
                }
                for &i in &self.zone {
                    if let Some(k) = self.v_var[i] {
                        grad[k] += dv[i];
                    }
                    if let Some(k) = self.th_var[i] {
                        grad[k] += dth[i];
                    }
                }
                f
            }
            Objective::Lra { gens, loads, lambda } => {
                let mut f = 0.0;
                for g in gens {
                    f += g.c_up * x[g.up] - g.c_down * x[g.down];
                    grad[g.up] += g.c_up;
                    grad[g.down] -= g.c_down;
                }
                for &(k, p0) in loads {
                    let d = x[k] - p0;
                    if smooth {
                        let s = (d * d + ABS_SMOOTHING).sqrt();
                        f += lambda * s;
                        grad[k] += lambda * d / s;
                    } else {
                        f += lambda * d.abs();
                    }
                }
                f
            }
        }
    }

    /// Family objective at `x` with exact absolute values.
    pub fn objective_exact(&self, x: &[f64]) -> f64 {
        self.objective_impl(x, None, false)
    }
}

impl Nlp for AttackProblem<'_> {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn lower(&self) -> &[f64] {
        &self.lo
    }

    fn upper(&self) -> &[f64] {
        &self.hi
    }

    fn objective(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.objective_impl(x, Some(grad), true)
    }

    fn objective_exact(&self, x: &[f64]) -> f64 {
        AttackProblem::objective_exact(self, x)
    }

    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        let (p, q, v, th) = self.state(x);
        for (k, con) in self.cons.iter().enumerate() {
            out[k] = match con {
                Con::Linear { terms, constant } => terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + constant,
                Con::Residual { bus, comp } => {
                    let (pi, qi) = bus_injection(*bus, &v, &th, self.y);
                    match comp {
                        Comp::P => p[*bus] - pi,
                        Comp::Q => q[*bus] - qi,
                    }
                }
                Con::Transfer(flows) => flows.iter().map(|f| f.value(&v, &th)).sum(),
            };
        }
    }

    fn constraints_vjp(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        let (_, _, v, th) = self.state(x);
        let n = v.len();
        let mut dv = vec![0.0; n];
        let mut dth = vec![0.0; n];
        let mut touched = false;
        for (k, con) in self.cons.iter().enumerate() {
            let wk = w[k];
            if wk == 0.0 {
                continue;
            }
            match con {
                Con::Linear { terms, .. } => {
                    for &(j, a) in terms {
                        grad[j] += wk * a;
                    }
                }
                Con::Residual { bus, comp } => {
                    if let Some(j) = self.meas_var(*bus, *comp) {
                        grad[j] += wk;
                    }
                    let (wp, wq) = match comp {
                        Comp::P => (-wk, 0.0),
                        Comp::Q => (0.0, -wk),
                    };
                    bus_injection_vjp(*bus, &v, &th, self.y, wp, wq, &mut dv, &mut dth);
                    touched = true;
                }
                Con::Transfer(flows) => {
                    for f in flows {
                        f.accumulate_grad(&v, &th, wk, &mut dv, &mut dth);
                    }
                    touched = true;
                }
            }
        }
        if touched {
            for &i in &self.zone {
                if let Some(j) = self.v_var[i] {
                    grad[j] += dv[i];
                }
                if let Some(j) = self.th_var[i] {
                    grad[j] += dth[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{AttackFamily, ZoneLimits};
    use crate::case_model::GridGraph;
    use crate::powerflow::ResidualScales;

    fn ring_admittance() -> (Admittance, GridGraph) {
        // 4-bus ring with distinct susceptances
        let text = "function mpc = ring\nmpc.baseMVA = 100;\nmpc.bus = [\n\
            1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n2 1 50 10 0 0 1 1 0 230 1 1.1 0.9;\n\
            3 1 50 10 0 0 1 1 0 230 1 1.1 0.9;\n4 2 0 0 0 0 1 1 0 230 1 1.1 0.9;\n];\n\
            mpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n4 30 0 100 -100 1 100 1 200 0;\n];\n\
            mpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1;\n2 3 0 0.08 0 0 0 0 0 0 1;\n\
            3 4 0 0.125 0 0 0 0 0 0 1;\n4 1 0 0.2 0 0 0 0 0 0 1;\n];\n";
        let model = crate::case_model::parse_case(text).unwrap();
        (crate::case_model::build_admittance(&model).unwrap(), model.graph())
    }

    #[test]
    fn line_targets_pick_strongest_connected_lines() {
        let (y, g) = ring_admittance();
        let zone = AttackZone::from_buses(&g, &[0, 1, 2, 3], ZoneLimits::default()).unwrap();
        // |B| = 12.5, 10, 8, 5 on lines 2-3, 1-2, 3-4, 4-1
        let t = line_targets(&y, &zone, 3);
        let bs: Vec<f64> = t.iter().map(|x| x.2.abs()).collect();
        assert_eq!(bs.len(), 3);
        assert!((bs[0] - 12.5).abs() < 1e-12 && (bs[1] - 10.0).abs() < 1e-12 && (bs[2] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn line_targets_skip_disconnected_candidates() {
        // path 0-1-2-3-4 where the strongest remaining line is not adjacent
        let text = "function mpc = p\nmpc.baseMVA = 100;\nmpc.bus = [\n\
            1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n2 1 0 0 0 0 1 1 0 230 1 1.1 0.9;\n\
            3 1 0 0 0 0 1 1 0 230 1 1.1 0.9;\n4 1 0 0 0 0 1 1 0 230 1 1.1 0.9;\n5 1 0 0 0 0 1 1 0 230 1 1.1 0.9;\n];\n\
            mpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n];\n\
            mpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1;\n2 3 0 0.5 0 0 0 0 0 0 1;\n\
            3 4 0 1.0 0 0 0 0 0 0 1;\n4 5 0 0.05 0 0 0 0 0 0 1;\n];\n";
        let model = crate::case_model::parse_case(text).unwrap();
        let y = crate::case_model::build_admittance(&model).unwrap();
        let zone = AttackZone::from_buses(&model.graph(), &[0, 1, 2, 3, 4], ZoneLimits::default()).unwrap();
        let t = line_targets(&y, &zone, 2);
        let pairs: Vec<(usize, usize)> = t.iter().map(|x| (x.0, x.1)).collect();
        // 3-4 (|B|=20) first, then the strongest line touching it: 2-3 (|B|=1)
        assert_eq!(pairs, vec![(3, 4), (2, 3)]);
    }

    #[test]
    fn line_stress_hand_value() {
        let f = line_stress(&[(0, 1, -10.0)], &[1.01, 1.0], &[0.1, 0.0]);
        assert!((f - 1.01).abs() < 1e-12, "{f}");
    }

    #[test]
    fn state_deviation_hand_value() {
        let base = Snapshot {
            p: vec![0.0; 2],
            q: vec![0.0; 2],
            v: vec![1.0, 1.0],
            theta: vec![0.0, 0.0],
            kind: SnapshotKind::Clean,
            seed: 0,
            clean: None,
        };
        let mut att = base.clone();
        att.v[1] += 0.02;
        att.theta[1] += 0.01;
        assert!((state_deviation(&[0, 1], &att, &base) - 5e-4).abs() < 1e-15);
    }

    fn toy() -> (NetworkModel, Admittance, Snapshot) {
        let model = crate::case_model::parse_case(crate::case_model::test_cases::CASE4GS).unwrap();
        let y = crate::case_model::build_admittance(&model).unwrap();
        let (p, q) = model.scheduled_injections();
        let (v0, th0) = model.flat_start();
        let sol = crate::powerflow::solve_nr(&model, &y, &p, &q, &v0, &th0, &Default::default()).unwrap();
        let (p, q) = crate::case_model::ac_injections(&sol.v, &sol.theta, &y).unwrap();
        let snap = Snapshot {
            p,
            q,
            v: sol.v,
            theta: sol.theta,
            kind: SnapshotKind::Clean,
            seed: 1,
            clean: None,
        };
        (model, y, snap)
    }

    #[test]
    fn constraint_gradients_match_finite_differences() {
        let (model, y, base) = toy();
        let zone = AttackZone::from_buses(&model.graph(), &[1, 3, 2], ZoneLimits::default()).unwrap();
        let feas = FeasibleSetConfig::from_scales(&ResidualScales::from_maxima(0.05, 0.05));
        for fam in AttackFamily::ALL {
            let pb = AttackProblem::new(&model, &y, &zone, &base, &feas, &FamilyConfig::default_for(fam)).unwrap();
            let mut rng = crate::rng::stream(3, fam as u64);
            let x = pb.perturbed_x(&mut rng, 0.02, 0.05);
            let m = pb.n_constraints();
            let w: Vec<f64> = (0..m).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.3).collect();
            let mut g = vec![0.0; pb.n_vars()];
            pb.constraints_vjp(&x, &w, &mut g);
            let mut go = vec![0.0; pb.n_vars()];
            pb.objective(&x, &mut go);
            let h = 1e-6;
            for j in 0..pb.n_vars() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
                pb.constraints(&xp, &mut cp);
                pb.constraints(&xm, &mut cm);
                let fd: f64 = (0..m).map(|k| w[k] * (cp[k] - cm[k]) / (2.0 * h)).sum();
                assert!(
                    (fd - g[j]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{fam} var {j}: {fd} vs {}",
                    g[j]
                );
                let mut sink = vec![0.0; pb.n_vars()];
                let fd_obj = (pb.objective(&xp, &mut sink) - pb.objective(&xm, &mut sink)) / (2.0 * h);
                assert!(
                    (fd_obj - go[j]).abs() < 1e-6 * (1.0 + fd_obj.abs()),
                    "{fam} objective var {j}"
                );
            }
        }
    }

    #[test]
    fn baseline_point_reproduces_baseline() {
        let (model, y, base) = toy();
        let zone = AttackZone::from_buses(&model.graph(), &[1, 3, 2], ZoneLimits::default()).unwrap();
        let feas = FeasibleSetConfig::from_scales(&ResidualScales::from_maxima(0.05, 0.05));
        let pb = AttackProblem::new(
            &model,
            &y,
            &zone,
            &base,
            &feas,
            &FamilyConfig::default_for(AttackFamily::Simple),
        )
        .unwrap();
        let snap = pb.snapshot(&pb.baseline_x(), &base, AttackFamily::Simple);
        assert_eq!(snap.v, base.v);
        assert_eq!(snap.p, base.p);
        assert_eq!(pb.objective_exact(&pb.baseline_x()), 0.0);
        let mut c = vec![0.0; pb.n_constraints()];
        pb.constraints(&pb.baseline_x(), &mut c);
        for (k, ck) in c.iter().enumerate() {
            assert!(*ck >= pb.lo[k] - 1e-12 && *ck <= pb.hi[k] + 1e-12, "{}", pb.group(k));
        }
    }

    #[test]
    fn lra_with_single_load_and_no_generator_is_inapplicable() {
        let (model, y, mut base) = toy();
        // zone {2, 3} (ids 2, 3) are loads; zero one to leave a single load
        let zone = AttackZone::from_buses(&model.graph(), &[1, 0, 2], ZoneLimits::default()).unwrap();
        for i in [0, 1] {
            base.p[i] = 0.0;
            base.q[i] = 0.0;
        }
        let feas = FeasibleSetConfig::from_scales(&ResidualScales::from_maxima(0.05, 0.05));
        let r = AttackProblem::new(
            &model,
            &y,
            &zone,
            &base,
            &feas,
            &FamilyConfig::default_for(AttackFamily::Lra),
        );
        assert!(r.is_err());
    }
}
