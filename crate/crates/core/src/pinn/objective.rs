use serde::{Deserialize, Serialize};

use super::loss::ComponentLosses;

/// Lower clip bound on the log-uncertainties.
pub const S_MIN: f64 = -4.0;
/// Upper clip bound on the log-uncertainties.
pub const S_MAX: f64 = 2.0;

/// How the log-uncertainties evolve during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Learned jointly with the network weights, starting from zero.
    Dynamic,
    /// Held at configured values.
    Fixed,
    /// Held at the final values of an earlier dynamic run.
    Frozen,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Dynamic => "dynamic",
            Regime::Fixed => "fixed",
            Regime::Frozen => "frozen",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "dynamic" => Ok(Regime::Dynamic),
            "fixed" => Ok(Regime::Fixed),
            "frozen" => Ok(Regime::Frozen),
            _ => Err(crate::Error::Config(format!("unknown regime '{s}'"))),
        }
    }
}

/// Log-uncertainties `(s_p, s_q, s_v, s_theta)`. The stored values are
/// unconstrained; clipping happens inside the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyState {
    pub s: [f64; 4],
    pub regime: Regime,
}

impl UncertaintyState {
    pub fn dynamic() -> Self {
        UncertaintyState {
            s: [0.0; 4],
            regime: Regime::Dynamic,
        }
    }

    pub fn fixed(s: [f64; 4]) -> Self {
        UncertaintyState {
            s,
            regime: Regime::Fixed,
        }
    }

    pub fn frozen_from(dynamic: &UncertaintyState) -> Self {
        UncertaintyState {
            s: dynamic.s,
            regime: Regime::Frozen,
        }
    }

    pub fn trainable(&self) -> bool {
        self.regime == Regime::Dynamic
    }

    pub fn clipped(&self) -> [f64; 4] {
        self.s.map(|s| s.clamp(S_MIN, S_MAX))
    }

    /// Inverse-variance weights `exp(-2 clip(s))`, always in `[e^-4, e^8]`.
    pub fn weights(&self) -> [f64; 4] {
        self.clipped().map(|s| (-2.0 * s).exp())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    pub total: f64,
    pub j_dyn: f64,
    pub p_ratio: f64,
    pub weights: [f64; 4],
    pub w_phys: f64,
    pub w_data: f64,
    pub ratio: f64,
    pub delta: f64,
}

/// Uncertainty-weighted objective plus the one-sided log-ratio penalty.
///
/// `J = sum_m (w_m L_m / 2 + s_m)` with `w_m = exp(-2 s_m)` on clipped
/// `s_m`; `r = (w_p + w_q) / (w_v + w_theta + eps)`; the target ratio is 1
/// (two physics and two data terms); the penalty is
/// `lambda_r * max(0, log(1 + eps) - log(r + eps))^2`.
pub fn dynamic_objective(
    losses: &ComponentLosses,
    u: &UncertaintyState,
    lambda_r: f64,
    eps_ratio: f64,
) -> ObjectiveParts {
    let s = u.clipped();
    let w = u.weights();
    let l = losses.as_array();
    let j_dyn: f64 = (0..4).map(|m| 0.5 * w[m] * l[m] + s[m]).sum();
    let w_phys = w[0] + w[1];
    let w_data = w[2] + w[3];
    let ratio = w_phys / (w_data + eps_ratio);
    let target = 1.0;
    let delta = (target + eps_ratio).ln() - (ratio + eps_ratio).ln();
    let hinge = delta.max(0.0);
    let p_ratio = lambda_r * hinge * hinge;
    ObjectiveParts {
        total: j_dyn + p_ratio,
        j_dyn,
        p_ratio,
        weights: w,
        w_phys,
        w_data,
        ratio,
        delta,
    }
}

/// Partial derivatives of the total objective with respect to the four
/// component losses and the four stored log-uncertainties. The clip has a
/// zero subgradient outside `[S_MIN, S_MAX]` and the hinge is inactive at
/// `delta <= 0`.
pub fn objective_grads(
    losses: &ComponentLosses,
    u: &UncertaintyState,
    lambda_r: f64,
    eps_ratio: f64,
) -> ([f64; 4], [f64; 4]) {
    let parts = dynamic_objective(losses, u, lambda_r, eps_ratio);
    let w = parts.weights;
    let l = losses.as_array();
    let d_loss = w.map(|wm| 0.5 * wm);

    // dP_ratio/dw_m
    let mut d_w_pen = [0.0; 4];
    if parts.delta > 0.0 {
        let d_delta = 2.0 * lambda_r * parts.delta;
        let d_ratio = -d_delta / (parts.ratio + eps_ratio);
        let denom = parts.w_data + eps_ratio;
        d_w_pen[0] = d_ratio / denom;
        d_w_pen[1] = d_ratio / denom;
        d_w_pen[2] = -d_ratio * parts.w_phys / (denom * denom);
        d_w_pen[3] = d_w_pen[2];
    }
    let mut d_s = [0.0; 4];
    for m in 0..4 {
        let inside = u.s[m] > S_MIN && u.s[m] < S_MAX;
        if inside {
            // dw/ds = -2w
            d_s[m] = (0.5 * l[m] + d_w_pen[m]) * (-2.0 * w[m]) + 1.0;
        }
    }
    (d_loss, d_s)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const E: f64 = 1e-12;

    #[test]
    fn symmetric_state_gives_twice_the_loss() {
        let l = 0.37;
        let parts = dynamic_objective(
            &ComponentLosses::from_array([l; 4]),
            &UncertaintyState::dynamic(),
            1.0,
            E,
        );
        assert_eq!(parts.j_dyn, 2.0 * l);
        assert!((parts.total - 2.0 * l).abs() < 1e-15);
        assert!(parts.p_ratio < 1e-20);
        assert!((parts.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn physics_light_state_hand_example() {
        let u = UncertaintyState::fixed([1.0, 1.0, 0.0, 0.0]);
        let parts = dynamic_objective(&ComponentLosses::from_array([0.0; 4]), &u, 1.0, E);
        let e2 = (-2.0f64).exp();
        assert!((parts.w_phys - 2.0 * e2).abs() < 1e-15);
        assert_eq!(parts.w_data, 2.0);
        assert!((parts.ratio - e2).abs() < 1e-12);
        assert!((parts.delta - 2.0).abs() < 1e-9);
        assert!((parts.p_ratio - 4.0).abs() < 1e-8);
    }

    #[test]
    fn clip_bounds() {
        let u = UncertaintyState::fixed([5.0, -9.0, 0.0, 0.0]);
        assert_eq!(u.clipped()[..2], [2.0, -4.0]);
        let w = u.weights();
        assert_eq!(w[0], (-4.0f64).exp());
        assert_eq!(w[1], 8.0f64.exp());
    }

    #[test]
    fn hinge_inactive_when_physics_heavy() {
        let u = UncertaintyState {
            s: [-1.0, -0.5, 0.5, 1.0],
            regime: Regime::Dynamic,
        };
        let losses = ComponentLosses::from_array([0.2, 0.3, 0.4, 0.5]);
        let parts = dynamic_objective(&losses, &u, 3.0, E);
        assert!(parts.delta < 0.0);
        assert_eq!(parts.p_ratio, 0.0);
        // with the hinge off, dS is exactly the J_dyn derivative
        let (_, ds) = objective_grads(&losses, &u, 3.0, E);
        let l = losses.as_array();
        for m in 0..4 {
            assert_eq!(ds[m], -u.weights()[m] * l[m] + 1.0);
        }
    }

    #[test]
    fn s_gradient_matches_finite_differences() {
        let losses = ComponentLosses::from_array([0.8, 1.7, 0.05, 0.3]);
        let u = UncertaintyState {
            s: [0.9, 0.4, -0.3, 0.2],
            regime: Regime::Dynamic,
        };
        let (dl, ds) = objective_grads(&losses, &u, 2.5, E);
        let h = 1e-6;
        for m in 0..4 {
            let mut up = u;
            let mut um = u;
            up.s[m] += h;
            um.s[m] -= h;
            let fd = (dynamic_objective(&losses, &up, 2.5, E).total - dynamic_objective(&losses, &um, 2.5, E).total)
                / (2.0 * h);
            assert!((fd - ds[m]).abs() < 1e-6, "m={m}: {fd} vs {}", ds[m]);
            let mut lp = losses.as_array();
            let mut lm = losses.as_array();
            lp[m] += h;
            lm[m] -= h;
            let fd = (dynamic_objective(&ComponentLosses::from_array(lp), &u, 2.5, E).total
                - dynamic_objective(&ComponentLosses::from_array(lm), &u, 2.5, E).total)
                / (2.0 * h);
            assert!((fd - dl[m]).abs() < 1e-6);
        }
    }

    #[test]
    fn clipped_coordinates_have_zero_gradient() {
        let u = UncertaintyState {
            s: [3.0, -5.0, 0.0, 0.0],
            regime: Regime::Dynamic,
        };
        let (_, ds) = objective_grads(&ComponentLosses::from_array([1.0; 4]), &u, 1.0, E);
        assert_eq!(ds[0], 0.0);
        assert_eq!(ds[1], 0.0);
    }

    proptest! {
        #[test]
        fn weights_stay_bounded(s in proptest::array::uniform4(-50.0f64..50.0)) {
            let w = UncertaintyState::fixed(s).weights();
            for wm in w {
                prop_assert!(wm >= (-4.0f64).exp() && wm <= 8.0f64.exp());
            }
        }

        #[test]
        fn hinge_is_one_sided(s in proptest::array::uniform4(-6.0f64..4.0), lambda in 1e-4f64..10.0) {
            let parts = dynamic_objective(&ComponentLosses::from_array([1.0; 4]), &UncertaintyState::fixed(s), lambda, E);
            if parts.w_phys >= parts.w_data {
                // only the eps_ratio offset can open the hinge here
                prop_assert!(parts.p_ratio <= lambda * 1e-20);
            }
            if parts.w_phys > parts.w_data * (1.0 + 1e-9) {
                prop_assert_eq!(parts.p_ratio, 0.0);
            }
            if parts.w_phys < parts.w_data * (1.0 - 1e-9) {
                prop_assert!(parts.p_ratio > 0.0);
            }
        }
    }
}
