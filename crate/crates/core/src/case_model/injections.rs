use super::{Admittance, BranchAdmittance, BranchEnd, TerminalFlow};
use crate::{Error, Result};

/// AC net injections `P_i = sum_j V_i V_j (G_ij cos th_ij + B_ij sin th_ij)`,
/// `Q_i = sum_j V_i V_j (G_ij sin th_ij - B_ij cos th_ij)` over the sparse
/// pattern of `y`.
pub fn ac_injections(v: &[f64], theta: &[f64], y: &Admittance) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(v, theta, y)?;
    let mut p = vec![0.0; y.n()];
    let mut q = vec![0.0; y.n()];
    ac_injections_into(v, theta, y, &mut p, &mut q);
    Ok((p, q))
}

fn check_dims(v: &[f64], theta: &[f64], y: &Admittance) -> Result<()> {
    for len in [v.len(), theta.len()] {
        if len != y.n() {
            return Err(Error::Dimension {
                expected: y.n(),
                got: len,
            });
        }
    }
    Ok(())
}

/// Unchecked variant writing into caller buffers.
pub fn ac_injections_into(v: &[f64], theta: &[f64], y: &Admittance, p: &mut [f64], q: &mut [f64]) {
    let (row_ptr, col, g, b) = y.raw();
    for i in 0..y.n() {
        let (mut pi, mut qi) = (0.0, 0.0);
        for k in row_ptr[i]..row_ptr[i + 1] {
            let j = col[k];
            let (s, c) = (theta[i] - theta[j]).sin_cos();
            let vv = v[i] * v[j];
            pi += vv * (g[k] * c + b[k] * s);
            qi += vv * (g[k] * s - b[k] * c);
        }
        p[i] = pi;
        q[i] = qi;
    }
}

/// Reverse pass of [`ac_injections_into`]: accumulates
/// `dv += (dP/dV)^T gp + (dQ/dV)^T gq` and likewise for `dtheta`.
pub fn ac_injections_vjp(
    v: &[f64],
    theta: &[f64],
    y: &Admittance,
    gp: &[f64],
    gq: &[f64],
    dv: &mut [f64],
    dtheta: &mut [f64],
) {
    for i in 0..y.n() {
        if gp[i] != 0.0 || gq[i] != 0.0 {
            bus_injection_vjp(i, v, theta, y, gp[i], gq[i], dv, dtheta);
        }
    }
}

/// `(P_i, Q_i)` at a single bus.
pub fn bus_injection(i: usize, v: &[f64], theta: &[f64], y: &Admittance) -> (f64, f64) {
    let (mut pi, mut qi) = (0.0, 0.0);
    for (j, g, b) in y.row(i) {
        let (s, c) = (theta[i] - theta[j]).sin_cos();
        let vv = v[i] * v[j];
        pi += vv * (g * c + b * s);
        qi += vv * (g * s - b * c);
    }
    (pi, qi)
}

/// Adds `wp * grad P_i + wq * grad Q_i` into `dv`, `dtheta`.
#[allow(clippy::too_many_arguments)]
pub fn bus_injection_vjp(
    i: usize,
    v: &[f64],
    theta: &[f64],
    y: &Admittance,
    wp: f64,
    wq: f64,
    dv: &mut [f64],
    dtheta: &mut [f64],
) {
    for (j, g, b) in y.row(i) {
        let (s, c) = (theta[i] - theta[j]).sin_cos();
        let cp = g * c + b * s;
        let cq = g * s - b * c;
        let radial = wp * cp + wq * cq;
        dv[i] += radial * v[j];
        dv[j] += radial * v[i];
        // d(cp)/d(th_i) = -G s + B c; d(cq)/d(th_i) = cp
        let angular = v[i] * v[j] * (wp * (b * c - g * s) + wq * cp);
        dtheta[i] += angular;
        dtheta[j] -= angular;
    }
}

/// Sending-end active power flow of an in-service branch.
pub fn branch_active_flow(v: &[f64], theta: &[f64], branch: &BranchAdmittance) -> f64 {
    branch.terminal(BranchEnd::From).value(v, theta)
}

/// Active-flow terminals leaving `bus` through in-service branches whose far
/// end satisfies `keep`.
pub fn terminal_flows_at(y: &Admittance, bus: usize, mut keep: impl FnMut(usize) -> bool) -> Vec<TerminalFlow> {
    let mut out = Vec::new();
    for (_, br) in y.branches() {
        if br.from == bus && keep(br.to) {
            out.push(br.terminal(BranchEnd::From));
        } else if br.to == bus && keep(br.from) {
            out.push(br.terminal(BranchEnd::To));
        }
    }
    out
}

impl TerminalFlow {
    pub fn value(&self, v: &[f64], theta: &[f64]) -> f64 {
        let (a, o) = (self.at, self.other);
        let (s, c) = (theta[a] - theta[o]).sin_cos();
        v[a] * v[a] * self.g_self + v[a] * v[o] * (self.g_mut * c + self.b_mut * s)
    }

    /// Adds `weight * grad` of [`value`](Self::value) into `dv`, `dtheta`.
    pub fn accumulate_grad(&self, v: &[f64], theta: &[f64], weight: f64, dv: &mut [f64], dtheta: &mut [f64]) {
        let (a, o) = (self.at, self.other);
        let (s, c) = (theta[a] - theta[o]).sin_cos();
        let mutual = self.g_mut * c + self.b_mut * s;
        dv[a] += weight * (2.0 * v[a] * self.g_self + v[o] * mutual);
        dv[o] += weight * v[a] * mutual;
        let dth = weight * v[a] * v[o] * (self.b_mut * c - self.g_mut * s);
        dtheta[a] += dth;
        dtheta[o] -= dth;
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::case_model::test_cases::{CASE118, CASE4GS, TWO_BUS};
    use crate::case_model::{build_admittance, parse_case, BranchRecord, BusRecord, BusType, NetworkModel};

    /// Dense double loop straight from the injection formulas.
    fn dense_injections(v: &[f64], theta: &[f64], y: &Admittance) -> (Vec<f64>, Vec<f64>) {
        let (g, b) = y.to_dense();
        let n = v.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let d = theta[i] - theta[j];
                p[i] += v[i] * v[j] * (g[(i, j)] * d.cos() + b[(i, j)] * d.sin());
                q[i] += v[i] * v[j] * (g[(i, j)] * d.sin() - b[(i, j)] * d.cos());
            }
        }
        (p, q)
    }

    #[test]
    fn flat_profile_on_reactive_network_has_no_active_injection() {
        let y = build_admittance(&parse_case(TWO_BUS).unwrap()).unwrap();
        let (p, _) = ac_injections(&[1.0, 1.0], &[0.0, 0.0], &y).unwrap();
        assert!(p.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn two_bus_angle_difference() {
        let y = build_admittance(&parse_case(TWO_BUS).unwrap()).unwrap();
        let (p, _) = ac_injections(&[1.0, 1.0], &[0.1, 0.0], &y).unwrap();
        assert!((p[0] - 10.0 * 0.1f64.sin()).abs() < 1e-12);
        assert!((p[0] - 0.998334).abs() < 1e-6);
        let flow = branch_active_flow(&[1.0, 1.0], &[0.1, 0.0], y.branch(0).unwrap());
        assert!((flow - 0.998334).abs() < 1e-6);
    }

    #[test]
    fn equal_states_give_zero_flow_on_lossless_branch() {
        let y = build_admittance(&parse_case(TWO_BUS).unwrap()).unwrap();
        let flow = branch_active_flow(&[1.03, 1.03], &[0.2, 0.2], y.branch(0).unwrap());
        assert!(flow.abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let y = build_admittance(&parse_case(TWO_BUS).unwrap()).unwrap();
        assert!(matches!(
            ac_injections(&[1.0], &[0.0, 0.0], &y),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn terminal_flows_balance_injection() {
        // At every bus, flows leaving through all branches plus the shunt
        // term equal the net injection.
        let m = parse_case(CASE4GS).unwrap();
        let y = build_admittance(&m).unwrap();
        let v = [1.0, 0.98, 0.97, 1.02];
        let th = [0.0, -0.02, -0.035, 0.015];
        let (p, _) = ac_injections(&v, &th, &y).unwrap();
        for i in 0..4 {
            let total: f64 = terminal_flows_at(&y, i, |_| true)
                .iter()
                .map(|t| t.value(&v, &th))
                .sum();
            let shunt = v[i] * v[i] * m.buses[i].gs;
            assert!((total + shunt - p[i]).abs() < 1e-12, "bus {i}");
        }
        // boundary bus 2 (index 1) with exterior {1}: flows to exterior equal
        // injection minus flows to the interior bus 4.
        let to_ext: f64 = terminal_flows_at(&y, 1, |o| o == 0)
            .iter()
            .map(|t| t.value(&v, &th))
            .sum();
        let to_int: f64 = terminal_flows_at(&y, 1, |o| o == 3)
            .iter()
            .map(|t| t.value(&v, &th))
            .sum();
        assert!((to_ext - (p[1] - to_int)).abs() < 1e-12);
    }

    #[test]
    fn sparse_matches_dense_on_ieee118() {
        let y = build_admittance(&parse_case(CASE118).unwrap()).unwrap();
        let n = y.n();
        let v: Vec<f64> = (0..n).map(|i| 0.95 + 0.001 * (i % 97) as f64).collect();
        let th: Vec<f64> = (0..n).map(|i| -0.4 + 0.007 * (i % 113) as f64).collect();
        let (p, q) = ac_injections(&v, &th, &y).unwrap();
        let (pd, qd) = dense_injections(&v, &th, &y);
        for i in 0..n {
            assert!((p[i] - pd[i]).abs() < 1e-12);
            assert!((q[i] - qd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let y = build_admittance(&parse_case(CASE4GS).unwrap()).unwrap();
        let v = vec![1.01, 0.97, 0.99, 1.02];
        let th = vec![0.0, -0.03, -0.05, 0.02];
        let gp = [0.3, -1.2, 0.7, 0.1];
        let gq = [-0.4, 0.5, 0.9, -0.2];
        let f = |v: &[f64], th: &[f64]| {
            let (p, q) = ac_injections(v, th, &y).unwrap();
            (0..4).map(|i| gp[i] * p[i] + gq[i] * q[i]).sum::<f64>()
        };
        let mut dv = vec![0.0; 4];
        let mut dth = vec![0.0; 4];
        ac_injections_vjp(&v, &th, &y, &gp, &gq, &mut dv, &mut dth);
        let h = 1e-6;
        for k in 0..4 {
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp[k] += h;
            vm[k] -= h;
            assert!(((f(&vp, &th) - f(&vm, &th)) / (2.0 * h) - dv[k]).abs() < 1e-7);
            let (mut tp, mut tm) = (th.clone(), th.clone());
            tp[k] += h;
            tm[k] -= h;
            assert!(((f(&v, &tp) - f(&v, &tm)) / (2.0 * h) - dth[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn terminal_flow_gradient_matches_finite_differences() {
        let y = build_admittance(&parse_case(CASE4GS).unwrap()).unwrap();
        let v = vec![1.01, 0.97, 0.99, 1.02];
        let th = vec![0.0, -0.03, -0.05, 0.02];
        for t in terminal_flows_at(&y, 1, |_| true) {
            let mut dv = vec![0.0; 4];
            let mut dth = vec![0.0; 4];
            t.accumulate_grad(&v, &th, 1.0, &mut dv, &mut dth);
            let h = 1e-6;
            for k in 0..4 {
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[k] += h;
                vm[k] -= h;
                assert!(((t.value(&vp, &th) - t.value(&vm, &th)) / (2.0 * h) - dv[k]).abs() < 1e-7);
                let (mut tp, mut tm) = (th.clone(), th.clone());
                tp[k] += h;
                tm[k] -= h;
                assert!(((t.value(&v, &tp) - t.value(&v, &tm)) / (2.0 * h) - dth[k]).abs() < 1e-7);
            }
        }
    }

    fn lossless_ring(n: usize, x: &[f64]) -> NetworkModel {
        let buses = (0..n)
            .map(|i| BusRecord {
                id: i + 1,
                kind: if i == 0 { BusType::Slack } else { BusType::Pq },
                pd: 0.0,
                qd: 0.0,
                gs: 0.0,
                bs: 0.0,
                vm: 1.0,
                va: 0.0,
                base_kv: 1.0,
            })
            .collect();
        let branches = (0..n)
            .map(|i| BranchRecord {
                from: i,
                to: (i + 1) % n,
                r: 0.0,
                x: x[i % x.len()],
                b: 0.0,
                ratio: 0.0,
                shift: 0.0,
                in_service: true,
            })
            .collect();
        NetworkModel::new("ring", 100.0, buses, branches, vec![]).unwrap()
    }

    proptest! {
        #[test]
        fn lossless_network_conserves_active_power(
            x in proptest::collection::vec(0.01f64..0.5, 3..4),
            state in proptest::collection::vec((0.9f64..1.1, -0.5f64..0.5), 6),
        ) {
            let m = lossless_ring(6, &x);
            let y = build_admittance(&m).unwrap();
            let v: Vec<f64> = state.iter().map(|s| s.0).collect();
            let th: Vec<f64> = state.iter().map(|s| s.1).collect();
            let (p, _) = ac_injections(&v, &th, &y).unwrap();
            prop_assert!(p.iter().sum::<f64>().abs() < 1e-9);
        }

        #[test]
        fn sparse_and_dense_agree(state in proptest::collection::vec((0.9f64..1.1, -0.5f64..0.5), 4)) {
            let y = build_admittance(&parse_case(CASE4GS).unwrap()).unwrap();
            let v: Vec<f64> = state.iter().map(|s| s.0).collect();
            let th: Vec<f64> = state.iter().map(|s| s.1).collect();
            let (p, q) = ac_injections(&v, &th, &y).unwrap();
            let (pd, qd) = dense_injections(&v, &th, &y);
            for i in 0..4 {
                prop_assert!((p[i] - pd[i]).abs() < 1e-12 && (q[i] - qd[i]).abs() < 1e-12);
            }
        }
    }
}
