use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checker::{verify_feasibility, FeasibilityReport, CHECK_TOL};
use super::problem::AttackProblem;
use super::solver::{augmented_lagrangian, SolveStatus, SolverOptions};
use super::zones::AttackZone;
use super::{AttackResult, FamilyConfig, FeasibleSetConfig};
use crate::case_model::{Admittance, NetworkModel};
use crate::dataset::{Dataset, ExtraColumns, Snapshot};
use crate::{rng, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackGenConfig {
    pub feasible: FeasibleSetConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    pub seed: u64,
}

/// Solves one instance: a baseline start plus `opts.restarts` random starts,
/// keeping the best feasible point, then audits it.
#[allow(clippy::too_many_arguments)]
pub fn solve_attack(
    model: &NetworkModel,
    y: &Admittance,
    zone: &AttackZone,
    zone_id: usize,
    family: &FamilyConfig,
    feas: &FeasibleSetConfig,
    baseline: &Snapshot,
    opts: &SolverOptions,
    rng: &mut impl Rng,
) -> AttackResult {
    let fam = family.family();
    let mut iterations = 0;
    let finish =
        |snapshot: Snapshot, objective: f64, status: SolveStatus, report: FeasibilityReport, iterations: usize| {
            AttackResult {
                snapshot,
                family: fam,
                zone_id,
                objective,
                status,
                report,
                outer_iterations: iterations,
            }
        };
    let problem = match AttackProblem::new(model, y, zone, baseline, feas, family) {
        Ok(p) => p,
        Err(_) => {
            return finish(
                baseline.clone(),
                0.0,
                SolveStatus::Skipped,
                FeasibilityReport::default(),
                0,
            )
        }
    };
    let x_base = problem.baseline_x();
    let f_base = problem.objective_exact(&x_base);
    let base_report = verify_feasibility(model, y, zone, family, feas, baseline, baseline);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut starts = vec![x_base.clone()];
    for _ in 0..opts.restarts {
        starts.push(problem.perturbed_x(rng, opts.restart_dv, opts.restart_dtheta));
    }
    for x0 in &starts {
        let out = augmented_lagrangian(&problem, x0, opts);
        iterations += out.outer_iterations;
        if let Some((x, f)) = out.best {
            if best.as_ref().is_none_or(|(_, fb)| f > *fb) {
                best = Some((x, f));
            }
        }
    }

    let improved = best
        .as_ref()
        .filter(|(_, f)| !base_report.passed() || *f > f_base + 1e-12 * f_base.abs().max(1.0));
    match improved {
        Some((x, f)) => {
            let snap = problem.snapshot(x, baseline, fam);
            let report = verify_feasibility(model, y, zone, family, feas, baseline, &snap);
            let status = if report.passed() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            };
            finish(snap, *f, status, report, iterations)
        }
        None if base_report.passed() => finish(
            baseline.clone(),
            f_base,
            SolveStatus::Degenerate,
            base_report,
            iterations,
        ),
        None => finish(
            baseline.clone(),
            f_base,
            SolveStatus::Infeasible,
            base_report,
            iterations,
        ),
    }
}

/// Solver statistics of one (zone, family) batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub attempted: usize,
    pub emitted: usize,
    pub status_counts: BTreeMap<String, usize>,
    /// Count of non-emitted instances failing each constraint group.
    pub violation_histogram: BTreeMap<String, usize>,
}

impl GenerationSummary {
    pub fn feasible_yield(&self) -> f64 {
        if self.attempted == 0 {
            1.0
        } else {
            self.emitted as f64 / self.attempted as f64
        }
    }
}

/// Verified attacks of one family on one zone.
#[derive(Clone, Debug)]
pub struct AttackSet {
    pub zone_name: String,
    pub zone_id: usize,
    pub family: super::AttackFamily,
    pub dataset: Dataset,
    /// Per-row `family, zone_id, objective, max_violation`.
    pub extras: Vec<ExtraColumns>,
    pub objectives: Vec<f64>,
    pub summary: GenerationSummary,
}

impl AttackSet {
    pub const EXTRA_HEADER: [&'static str; 4] = ["family", "zone_id", "objective", "max_violation"];

    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.zone_name, self.family)
    }
}

/// Attacks every clean snapshot for each (zone, family) pair, in zone-major
/// order. Only optimal results that pass the checker are emitted.
pub fn generate_attack_dataset(
    model: &NetworkModel,
    y: &Admittance,
    clean: &Dataset,
    zones: &[(String, AttackZone)],
    families: &[FamilyConfig],
    cfg: &AttackGenConfig,
) -> Result<Vec<AttackSet>> {
    cfg.feasible.validate()?;
    for f in families {
        f.validate(model.n_bus())?;
    }
    let mut sets = Vec::with_capacity(zones.len() * families.len());
    for (zone_id, (zone_name, zone)) in zones.iter().enumerate() {
        for (fam_idx, family) in families.iter().enumerate() {
            let base_seed = rng::stream_seed(rng::stream_seed(cfg.seed, zone_id as u64), fam_idx as u64);
            let results: Vec<AttackResult> = clean
                .snapshots
                .par_iter()
                .enumerate()
                .map(|(k, snap)| {
                    let mut r = rng::stream(base_seed, k as u64);
                    solve_attack(
                        model,
                        y,
                        zone,
                        zone_id,
                        family,
                        &cfg.feasible,
                        snap,
                        &cfg.solver,
                        &mut r,
                    )
                })
                .collect();
            sets.push(collect_set(zone_name, zone_id, family, clean.n_bus, results));
        }
    }
    Ok(sets)
}

fn collect_set(
    zone_name: &str,
    zone_id: usize,
    family: &FamilyConfig,
    n_bus: usize,
    results: Vec<AttackResult>,
) -> AttackSet {
    let mut summary = GenerationSummary {
        attempted: results.len(),
        ..Default::default()
    };
    let mut dataset = Dataset::new(n_bus);
    let mut extras = Vec::new();
    let mut objectives = Vec::new();
    for r in results {
        *summary.status_counts.entry(r.status.name().to_string()).or_default() += 1;
        if r.status == SolveStatus::Optimal && r.report.max_violation() <= CHECK_TOL {
            extras.push(vec![
                r.family.to_string(),
                zone_id.to_string(),
                format!("{:?}", r.objective),
                format!("{:?}", r.report.max_violation()),
            ]);
            objectives.push(r.objective);
            dataset.snapshots.push(r.snapshot);
        } else {
            for g in r.report.failures() {
                *summary.violation_histogram.entry(g.to_string()).or_default() += 1;
            }
        }
    }
    summary.emitted = dataset.len();
    AttackSet {
        zone_name: zone_name.to_string(),
        zone_id,
        family: family.family(),
        dataset,
        extras,
        objectives,
        summary,
    }
}
