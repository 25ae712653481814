mod support;

use gridshield_core::attack::{solve_attack, verify_feasibility, SolveStatus, SolverOptions};
use gridshield_core::{rng, AttackFamily, FamilyConfig, FeasibleSetConfig};
use proptest::prelude::*;
use support::*;

fn simple(kappa: f64, delta: f64) -> FamilyConfig {
    FamilyConfig::Simple {
        kappa_p: kappa,
        kappa_q: kappa,
        delta_p: delta,
        delta_q: delta,
    }
}

#[test]
fn pinned_problem_only_admits_the_baseline() {
    let (model, y, base, zone) = toy_zone();
    let tiny = 1e-12;
    let feas = FeasibleSetConfig {
        tau_p: tiny,
        tau_q: tiny,
        eps_bnd_rel: tiny,
        eps_bnd_abs: tiny,
        eps_cons_rel: tiny,
        eps_cons_abs: tiny,
        ..generous_feasible_set()
    };
    let res = solve_attack(
        &model,
        &y,
        &zone,
        0,
        &FamilyConfig::default_for(AttackFamily::Simple),
        &feas,
        &base,
        &SolverOptions::default(),
        &mut rng::stream(0, 0),
    );
    assert_ne!(res.status, SolveStatus::Infeasible);
    assert!(res.objective < 1e-10, "objective {}", res.objective);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The shared constraints are identical across families: a point that
    /// passes Corruption and meets the Simple envelope passes Simple, and with
    /// an unbounded residual-match band every Simple point passes Corruption.
    #[test]
    fn corruption_and_simple_share_the_feasible_set(seed in any::<u64>()) {
        let (model, y, base, zone) = toy_zone();
        let feas = generous_feasible_set();
        let att = sample_candidate(&model, &y, &zone, &feas, &base, &mut rng::stream(seed, 0));
        let check = |f: &FamilyConfig| verify_feasibility(&model, &y, &zone, f, &feas, &base, &att);
        let envelope = check(&simple(0.75, 0.01));
        let corruption = check(&FamilyConfig::Corruption { beta: 0.05, eps_r: 1e-3 });
        let envelope_ok = ["injection envelope P", "injection envelope Q"]
            .iter()
            .all(|g| envelope.get(g).unwrap_or(0.0) <= 1e-6);
        if corruption.passed() && envelope_ok {
            prop_assert!(envelope.passed(), "{:?}", envelope.failures());
        }
        let loose = check(&FamilyConfig::Corruption { beta: 1e9, eps_r: 1e9 });
        if envelope.passed() {
            prop_assert!(loose.passed(), "{:?}", loose.failures());
        }
    }

    /// Emitted results are stealthy, leave the exterior bit-identical and keep
    /// zero-injection buses at zero.
    #[test]
    fn optimal_results_satisfy_the_invariants(seed in 0u64..1000, fam in 0usize..4) {
        let (model, y, base, zone) = toy_zone();
        let feas = generous_feasible_set();
        let family = FamilyConfig::default_for(AttackFamily::ALL[fam]);
        let opts = SolverOptions { restarts: 1, max_outer: 20, ..Default::default() };
        let res = solve_attack(&model, &y, &zone, 0, &family, &feas, &base, &opts, &mut rng::stream(seed, 0));
        if res.status == SolveStatus::Optimal {
            prop_assert!(res.report.passed());
            for i in (0..model.n_bus()).filter(|&i| !zone.contains(i)) {
                prop_assert_eq!(res.snapshot.p[i].to_bits(), base.p[i].to_bits());
                prop_assert_eq!(res.snapshot.v[i].to_bits(), base.v[i].to_bits());
                prop_assert_eq!(res.snapshot.theta[i].to_bits(), base.theta[i].to_bits());
            }
            for &i in &zone.zero_injection {
                prop_assert_eq!(res.snapshot.p[i], 0.0);
                prop_assert_eq!(res.snapshot.q[i], 0.0);
            }
        }
    }
}
