//! Pipeline stages. Each stage reads and writes files so it can run on its
//! own from the command line or as part of [`run_ablation`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gridshield_core::attack::{generate_attack_dataset, AttackGenConfig, AttackSet, GenerationSummary};
use gridshield_core::case_model::{build_admittance, parse_case};
use gridshield_core::eval::{emit_report, mae, scaled_perturbation_eval, PerturbationTable};
use gridshield_core::pinn::{
    load_checkpoint, random_search, save_checkpoint, train, write_trace_csv, Checkpoint, SearchOutcome, SearchSpace,
};
use gridshield_core::powerflow::{generate_snapshots, residual_scales, DatasetSidecar};
use gridshield_core::{
    Admittance, AttackFamily, AttackZone, Dataset, FamilyConfig, FeasibleSetConfig, MetricReport, MlpParams,
    NetworkModel, Regime, SnapshotSetConfig, TrainConfig, TrainTrace, UncertaintyState,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{seed_stream, validate_config, PipelineConfig};
use crate::logging::Logger;
use crate::{Failure, StageExt};

pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

/// Yield below which a (zone, family) batch is reported as a warning.
pub const LOW_YIELD: f64 = 0.5;

pub struct Network {
    pub model: NetworkModel,
    pub y: Admittance,
    /// File stem of the case, recorded in artifacts.
    pub name: String,
}

/// Parses a case file and assembles its admittance matrix. Unreadable or
/// malformed cases are configuration errors.
pub fn load_case(path: &Path) -> Result<Network, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("case {}: {e}", path.display())))?;
    let model = parse_case(&text).map_err(|e| Failure::Config(format!("case {}: {e}", path.display())))?;
    let y = build_admittance(&model).stage("load-case")?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Network { model, y, name })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).stage(stage)?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path, stage: &'static str) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>], stage: &'static str) -> Result<(), Failure> {
    let fail = |e: csv::Error| Failure::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().stage(stage)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Generates clean snapshots and writes `<out>.csv` plus its JSON sidecar.
pub fn gen_data(
    net: &Network,
    cfg: &SnapshotSetConfig,
    config_hash: &str,
    csv_path: &Path,
    log: &Logger,
) -> Result<(Dataset, DatasetSidecar), Failure> {
    const STAGE: &str = "gen-data";
    log.event(
        STAGE,
        "start",
        serde_json::json!({ "case": net.name, "n_samples": cfg.n_samples }),
    );
    let (ds, stats) = generate_snapshots(&net.model, &net.y, cfg).stage(STAGE)?;
    let scales = if ds.is_empty() {
        None
    } else {
        Some(residual_scales(&ds, &net.y).stage(STAGE)?)
    };
    ds.write_csv(csv_path).stage(STAGE)?;
    let sidecar = DatasetSidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        case: net.name.clone(),
        n_bus: ds.n_bus,
        n_samples: ds.len(),
        config: cfg.clone(),
        residual_scales: scales,
        stats,
        config_hash: config_hash.to_string(),
    };
    write_json(&csv_path.with_extension("json"), &sidecar, STAGE)?;
    log.event(
        STAGE,
        "done",
        serde_json::json!({ "stats": stats, "residual_scales": scales }),
    );
    Ok((ds, sidecar))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::read_csv(path)
        .map(|(ds, _, _)| ds)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Sidecar next to a dataset CSV, when present.
pub fn read_sidecar(csv_path: &Path) -> Result<Option<DatasetSidecar>, Failure> {
    let path = csv_path.with_extension("json");
    if path.exists() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSetSummary {
    pub zone: String,
    pub zone_id: usize,
    pub family: AttackFamily,
    pub file: String,
    pub zone_buses: Vec<usize>,
    pub feasible_yield: f64,
    pub summary: GenerationSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackManifest {
    pub config_hash: String,
    pub gen: AttackGenConfig,
    pub families: Vec<FamilyConfig>,
    pub n_baseline: usize,
    pub sets: Vec<AttackSetSummary>,
}

/// Attacks every snapshot of `clean` for each (zone, family), writes one CSV
/// per pair and `summary.json` into `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn gen_attacks(
    net: &Network,
    clean: &Dataset,
    zones: &[(String, AttackZone)],
    families: &[FamilyConfig],
    gen: &AttackGenConfig,
    config_hash: &str,
    out_dir: &Path,
    log: &Logger,
) -> Result<(Vec<AttackSet>, AttackManifest), Failure> {
    const STAGE: &str = "gen-attacks";
    create_dir(out_dir, STAGE)?;
    log.event(
        STAGE,
        "start",
        serde_json::json!({ "zones": zones.len(), "families": families.len(), "baseline": clean.len() }),
    );
    let started = std::time::Instant::now();
    let sets = generate_attack_dataset(&net.model, &net.y, clean, zones, families, gen).stage(STAGE)?;
    let mut summaries = Vec::with_capacity(sets.len());
    for set in &sets {
        let file = set.file_name();
        set.dataset
            .write_csv_with(&out_dir.join(&file), &AttackSet::EXTRA_HEADER, |k| {
                set.extras[k].clone()
            })
            .stage(STAGE)?;
        let y = set.summary.feasible_yield();
        let fields = serde_json::json!({
            "zone": set.zone_name, "family": set.family, "attempted": set.summary.attempted,
            "emitted": set.summary.emitted, "yield": y, "violations": set.summary.violation_histogram,
        });
        log.event(STAGE, if y < LOW_YIELD { "low-yield" } else { "set" }, fields);
        summaries.push(AttackSetSummary {
            zone: set.zone_name.clone(),
            zone_id: set.zone_id,
            family: set.family,
            file,
            zone_buses: zones[set.zone_id].1.buses.clone(),
            feasible_yield: y,
            summary: set.summary.clone(),
        });
    }
    let manifest = AttackManifest {
        config_hash: config_hash.to_string(),
        gen: gen.clone(),
        families: families.to_vec(),
        n_baseline: clean.len(),
        sets: summaries,
    };
    write_json(&out_dir.join("summary.json"), &manifest, STAGE)?;
    let n_inst = (clean.len() * sets.len()).max(1);
    log.event(
        STAGE,
        "done",
        serde_json::json!({ "instances": clean.len() * sets.len(), "s_per_instance": started.elapsed().as_secs_f64() / n_inst as f64 }),
    );
    Ok((sets, manifest))
}

/// One attacked dataset tagged with its family and zone.
#[derive(Clone, Debug)]
pub struct AttackedDataset {
    pub name: String,
    pub family: AttackFamily,
    pub zone: String,
    pub dataset: Dataset,
}

impl AttackedDataset {
    pub fn from_set(set: &AttackSet) -> Self {
        AttackedDataset {
            name: format!("{}_{}", set.zone_name, set.family),
            family: set.family,
            zone: set.zone_name.clone(),
            dataset: set.dataset.clone(),
        }
    }
}

/// Reads every `<zone>_<family>.csv` in `dir`, sorted by file name.
pub fn read_attack_dir(dir: &Path) -> Result<Vec<AttackedDataset>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
        let Some((zone, fam)) = stem.rsplit_once('_') else {
            continue;
        };
        let Ok(family) = fam.parse::<AttackFamily>() else {
            continue;
        };
        out.push(AttackedDataset {
            name: stem.clone(),
            family,
            zone: zone.to_string(),
            dataset: read_dataset(&p)?,
        });
    }
    Ok(out)
}

/// Trains one regime and writes `<path>` plus `<stem>_trace.csv`.
#[allow(clippy::too_many_arguments)]
pub fn train_regime(
    train_ds: &Dataset,
    val_ds: &Dataset,
    y: &Admittance,
    cfg: &TrainConfig,
    start: UncertaintyState,
    config_hash: &str,
    ckpt_path: &Path,
    log: &Logger,
) -> Result<(Checkpoint, TrainTrace, Option<f64>), Failure> {
    const STAGE: &str = "train";
    log.event(
        STAGE,
        "start",
        serde_json::json!({ "regime": start.regime, "train": train_ds.len(), "val": val_ds.len(), "epochs": cfg.epochs, "s0": start.s }),
    );
    let out = train(train_ds, val_ds, y, cfg, start).stage(STAGE)?;
    let ckpt = Checkpoint {
        params: out.params,
        uncertainty: out.uncertainty,
        config: cfg.clone(),
        config_hash: Some(config_hash.to_string()),
    };
    save_checkpoint(ckpt_path, &ckpt).stage(STAGE)?;
    write_trace_csv(&trace_path(ckpt_path), &out.trace).stage(STAGE)?;
    let last = out.trace.len().checked_sub(1).map(|e| out.trace.row(e));
    log.event(
        STAGE,
        "done",
        serde_json::json!({ "regime": start.regime, "final": last.map(|r| r.to_vec()), "s": ckpt.uncertainty.s, "val_loss": out.val_loss }),
    );
    Ok((ckpt, out.trace, out.val_loss))
}

pub fn trace_path(ckpt_path: &Path) -> PathBuf {
    let stem = ckpt_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ckpt_path.with_file_name(format!("{stem}_trace.csv"))
}

#[allow(clippy::too_many_arguments)]
pub fn search(
    train_ds: &Dataset,
    val_ds: &Dataset,
    y: &Admittance,
    space: &SearchSpace,
    base: &TrainConfig,
    regime: Regime,
    trials: usize,
    seed: u64,
    log: &Logger,
) -> Result<SearchOutcome, Failure> {
    const STAGE: &str = "search";
    log.event(
        STAGE,
        "start",
        serde_json::json!({ "regime": regime, "trials": trials, "epochs": space.epochs }),
    );
    let out = random_search(train_ds, val_ds, y, space, base, regime, trials, seed).stage(STAGE)?;
    log.event(
        STAGE,
        "done",
        serde_json::json!({ "best_val_loss": out.best_val_loss, "fixed_log_sigmas": out.best.fixed_log_sigmas }),
    );
    Ok(out)
}

/// Metrics on the clean set (when given) and every non-empty attacked set.
pub fn evaluate(
    params: &MlpParams,
    clean: Option<(&str, &Dataset)>,
    attacked: &[AttackedDataset],
    metadata: BTreeMap<String, String>,
    log: &Logger,
) -> Result<MetricReport, Failure> {
    const STAGE: &str = "evaluate";
    let mut rows = Vec::new();
    if let Some((name, ds)) = clean {
        rows.push(mae(params, ds, name).stage(STAGE)?);
    }
    for a in attacked {
        if a.dataset.is_empty() {
            log.event(STAGE, "skip-empty", serde_json::json!({ "dataset": a.name }));
            continue;
        }
        let mut m = mae(params, &a.dataset, &a.name).stage(STAGE)?;
        m.family = Some(a.family);
        m.zone = Some(a.zone.clone());
        rows.push(m);
    }
    let mut report = MetricReport::new(rows);
    report.metadata = metadata;
    Ok(report)
}

pub fn emit(report: &MetricReport, path: &Path) -> Result<(), Failure> {
    emit_report(report, path).stage("evaluate").map(|_| ())
}

pub fn write_perturbation(table: &PerturbationTable, json_path: &Path) -> Result<(), Failure> {
    const STAGE: &str = "perturb-sweep";
    write_json(json_path, table, STAGE)?;
    write_csv(
        &json_path.with_extension("csv"),
        &table.csv_header(),
        &table.csv_rows(),
        STAGE,
    )
}

/// Final-epoch training state of one regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub config: TrainConfig,
    pub log_sigmas: [f64; 4],
    /// `total, l_p, l_q, l_v, l_theta, w_p, w_q, w_v, w_theta, w_phys,
    /// w_data, ratio` at the last epoch.
    pub final_epoch: Option<[f64; 12]>,
    pub val_loss: Option<f64>,
    pub clean_mae: f64,
}

/// Overall MAE of each regime on one family or zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub key: String,
    pub dynamic: Option<f64>,
    pub fixed: Option<f64>,
    pub frozen: Option<f64>,
    /// `100 (fixed - dynamic) / fixed`.
    pub reduction_vs_fixed_pct: Option<f64>,
    /// `100 (frozen - dynamic) / frozen`.
    pub reduction_vs_frozen_pct: Option<f64>,
}

impl Comparison {
    fn new(key: &str, dynamic: Option<f64>, fixed: Option<f64>, frozen: Option<f64>) -> Self {
        let red = |other: Option<f64>| match (dynamic, other) {
            (Some(d), Some(o)) if o > 0.0 => Some(100.0 * (o - d) / o),
            _ => None,
        };
        Comparison {
            key: key.to_string(),
            dynamic,
            fixed,
            frozen,
            reduction_vs_fixed_pct: red(fixed),
            reduction_vs_frozen_pct: red(frozen),
        }
    }

    fn header(first: &str) -> Vec<String> {
        [
            first,
            "mae_dynamic",
            "mae_fixed",
            "mae_frozen",
            "reduction_vs_fixed_pct",
            "reduction_vs_frozen_pct",
        ]
        .map(String::from)
        .to_vec()
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.key.clone(),
            fmt_opt(self.dynamic),
            fmt_opt(self.fixed),
            fmt_opt(self.frozen),
            fmt_opt(self.reduction_vs_fixed_pct),
            fmt_opt(self.reduction_vs_frozen_pct),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub family: AttackFamily,
    pub regime: Regime,
    pub mae95_v: f64,
    pub mae99_v: f64,
    pub mae95_theta: f64,
    pub mae99_theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub config_hash: String,
    pub n_train: usize,
    pub n_val: usize,
    pub regimes: Vec<RegimeSummary>,
    pub families: Vec<Comparison>,
    pub zones: Vec<Comparison>,
    pub percentiles: Vec<PercentileRow>,
    pub attack_yield: Vec<AttackSetSummary>,
    pub perturbation: BTreeMap<String, PerturbationTable>,
}

pub const REGIMES: [Regime; 3] = [Regime::Dynamic, Regime::Fixed, Regime::Frozen];

/// Bundle layout under the output root.
pub mod layout {
    pub const CONFIG: &str = "config.json";
    pub const DATA: &str = "data";
    pub const CLEAN: &str = "data/clean.csv";
    pub const ATTACKS: &str = "attacks";
    pub const MODELS: &str = "models";
    pub const REPORTS: &str = "reports";
    pub const SUMMARY: &str = "reports/ablation.json";
    pub const MANIFEST: &str = "manifest.json";
}

/// Runs the whole comparison: data, attacks, the three training regimes,
/// evaluation, the perturbation sweep and the comparative tables. Output is
/// a pure function of the config: no timestamps, fixed file order.
pub fn run_ablation(cfg: &PipelineConfig, config_hash: &str, log: &Logger) -> Result<AblationSummary, Failure> {
    validate_config(cfg)?;
    let root = &cfg.output;
    for d in [layout::DATA, layout::ATTACKS, layout::MODELS, layout::REPORTS] {
        create_dir(&root.join(d), "ablation")?;
    }
    let mut echo = cfg.clone();
    echo.output = PathBuf::new();
    write_json(
        &root.join(layout::CONFIG),
        &serde_json::json!({ "config_hash": config_hash, "config": echo }),
        "ablation",
    )?;

    let net = load_case(&cfg.case)?;
    let snap_cfg = SnapshotSetConfig {
        rng_seed: cfg.stage_seed(seed_stream::SNAPSHOTS),
        ..cfg.snapshots.clone()
    };
    let (clean, sidecar) = gen_data(&net, &snap_cfg, config_hash, &root.join(layout::CLEAN), log)?;
    let (mut train_ds, val_ds) = clean.split(cfg.train_fraction, cfg.stage_seed(seed_stream::SPLIT));
    if let Some(k) = cfg.train.subset {
        train_ds = train_ds.subset(0..k.min(train_ds.len()));
    }
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Failure::Stage {
            stage: "split",
            message: format!(
                "split gave {} training and {} validation snapshots",
                train_ds.len(),
                val_ds.len()
            ),
        });
    }
    log.event(
        "split",
        "done",
        serde_json::json!({ "train": train_ds.len(), "val": val_ds.len() }),
    );

    // Attacks are built on held-out snapshots so no estimator has seen their
    // baselines.
    let zones = cfg.zone_spec()?.resolve(&net.model).stage("gen-attacks")?;
    let feasible = match cfg.attack.feasible {
        Some(f) => f,
        None => FeasibleSetConfig::from_scales(sidecar.residual_scales.as_ref().expect("non-empty dataset has scales")),
    };
    let gen = AttackGenConfig {
        feasible,
        solver: cfg.attack.solver,
        seed: cfg.stage_seed(seed_stream::ATTACKS),
    };
    let base = val_ds.subset(0..cfg.attack.snapshots.min(val_ds.len()));
    let (sets, manifest) = gen_attacks(
        &net,
        &base,
        &zones,
        &cfg.families,
        &gen,
        config_hash,
        &root.join(layout::ATTACKS),
        log,
    )?;
    let attacked: Vec<AttackedDataset> = sets.iter().map(AttackedDataset::from_set).collect();

    let models = root.join(layout::MODELS);
    let base_cfg = cfg.train_config();
    let dyn_path = models.join("dynamic.ckpt");
    let dynamic = train_regime(
        &train_ds,
        &val_ds,
        &net.y,
        &base_cfg,
        UncertaintyState::dynamic(),
        config_hash,
        &dyn_path,
        log,
    )?;

    let space = cfg.fixed_search_space();
    let found = search(
        &train_ds,
        &val_ds,
        &net.y,
        &space,
        &base_cfg,
        Regime::Fixed,
        cfg.train.fixed_search.trials,
        cfg.stage_seed(seed_stream::SEARCH),
        log,
    )?;
    write_json(&models.join("fixed_search.json"), &found, "search")?;
    let fixed_cfg = TrainConfig {
        epochs: base_cfg.epochs,
        ..found.best.clone()
    };
    let fixed_start = fixed_cfg.initial_state(Regime::Fixed, None).stage("train")?;
    let fixed = train_regime(
        &train_ds,
        &val_ds,
        &net.y,
        &fixed_cfg,
        fixed_start,
        config_hash,
        &models.join("fixed.ckpt"),
        log,
    )?;

    // The frozen regime takes its weights from the saved dynamic checkpoint,
    // not from memory, so the round trip is part of every run.
    let saved = load_checkpoint(&dyn_path).stage("train")?;
    let frozen_start = base_cfg
        .initial_state(Regime::Frozen, Some(&saved.uncertainty))
        .stage("train")?;
    let frozen = train_regime(
        &train_ds,
        &val_ds,
        &net.y,
        &base_cfg,
        frozen_start,
        config_hash,
        &models.join("frozen.ckpt"),
        log,
    )?;

    let reports = root.join(layout::REPORTS);
    let mut metric_reports = Vec::new();
    let mut regimes = Vec::new();
    let mut perturbation = BTreeMap::new();
    for (regime, (ckpt, trace, val_loss)) in REGIMES.into_iter().zip([&dynamic, &fixed, &frozen]) {
        let mut meta = BTreeMap::new();
        meta.insert("config_hash".to_string(), config_hash.to_string());
        meta.insert("regime".to_string(), regime.to_string());
        let report = evaluate(&ckpt.params, Some(("clean_val", &val_ds)), &attacked, meta, log)?;
        emit(&report, &reports.join(format!("{regime}.json")))?;
        regimes.push(RegimeSummary {
            regime,
            config: ckpt.config.clone(),
            log_sigmas: ckpt.uncertainty.s,
            final_epoch: trace.len().checked_sub(1).map(|e| trace.row(e)),
            val_loss: *val_loss,
            clean_mae: report.dataset("clean_val").map(|d| d.mae_overall).unwrap_or(f64::NAN),
        });
        let table = scaled_perturbation_eval(
            &ckpt.params,
            &val_ds,
            &cfg.eval.perturbation_levels,
            &cfg.eval.perturbation_buses,
            cfg.stage_seed(seed_stream::SWEEP),
        )
        .stage("perturb-sweep")?;
        write_perturbation(&table, &reports.join(format!("perturbation_{regime}.json")))?;
        perturbation.insert(regime.to_string(), table);
        metric_reports.push(report);
    }
    log.event(
        "evaluate",
        "done",
        serde_json::json!({ "datasets": attacked.len() + 1 }),
    );

    let overall = |r: &MetricReport, key: &str, by_family: bool| {
        let aggs = if by_family {
            &r.family_aggregates
        } else {
            &r.zone_aggregates
        };
        aggs.iter().find(|a| a.key == key).map(|a| a.mae_overall)
    };
    let compare = |key: &str, by_family: bool| {
        let [d, f, z] = [0, 1, 2].map(|k| overall(&metric_reports[k], key, by_family));
        Comparison::new(key, d, f, z)
    };
    let families: Vec<Comparison> = cfg.families.iter().map(|f| compare(f.family().name(), true)).collect();
    let zone_comp: Vec<Comparison> = zones.iter().map(|(z, _)| compare(z, false)).collect();
    let mut percentiles = Vec::new();
    for f in cfg.families.iter().map(FamilyConfig::family) {
        for (regime, r) in REGIMES.into_iter().zip(&metric_reports) {
            if let Some(a) = r.family(f) {
                percentiles.push(PercentileRow {
                    family: f,
                    regime,
                    mae95_v: a.mae95_v,
                    mae99_v: a.mae99_v,
                    mae95_theta: a.mae95_theta,
                    mae99_theta: a.mae99_theta,
                });
            }
        }
    }

    let summary = AblationSummary {
        config_hash: config_hash.to_string(),
        n_train: train_ds.len(),
        n_val: val_ds.len(),
        regimes,
        families,
        zones: zone_comp,
        percentiles,
        attack_yield: manifest.sets,
        perturbation,
    };
    write_tables(&summary, &reports)?;
    write_json(&root.join(layout::SUMMARY), &summary, "ablation")?;
    write_manifest(root)?;
    log.event("ablation", "done", serde_json::json!({ "output": root }));
    Ok(summary)
}

fn write_tables(s: &AblationSummary, dir: &Path) -> Result<(), Failure> {
    const STAGE: &str = "ablation";
    let rows: Vec<Vec<String>> = s.families.iter().map(Comparison::row).collect();
    write_csv(
        &dir.join("compare_family.csv"),
        &Comparison::header("family"),
        &rows,
        STAGE,
    )?;
    let rows: Vec<Vec<String>> = s.zones.iter().map(Comparison::row).collect();
    write_csv(&dir.join("compare_zone.csv"), &Comparison::header("zone"), &rows, STAGE)?;

    let header: Vec<String> = ["family", "regime", "mae95_v", "mae99_v", "mae95_theta", "mae99_theta"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = s
        .percentiles
        .iter()
        .map(|p| {
            vec![
                p.family.to_string(),
                p.regime.to_string(),
                fmt_f64(p.mae95_v),
                fmt_f64(p.mae99_v),
                fmt_f64(p.mae95_theta),
                fmt_f64(p.mae99_theta),
            ]
        })
        .collect();
    write_csv(&dir.join("percentiles.csv"), &header, &rows, STAGE)?;

    let mut header = vec!["regime".to_string()];
    header.extend(TrainTrace::COLUMNS.iter().map(|c| c.to_string()));
    header.extend(["s_p", "s_q", "s_v", "s_theta", "val_loss", "clean_mae"].map(String::from));
    let rows: Vec<Vec<String>> = s
        .regimes
        .iter()
        .map(|r| {
            let mut row = vec![r.regime.to_string()];
            match r.final_epoch {
                Some(v) => row.extend(v.iter().map(|x| fmt_f64(*x))),
                None => row.extend(std::iter::repeat_n(String::new(), 12)),
            }
            row.extend(r.log_sigmas.iter().map(|x| fmt_f64(*x)));
            row.push(fmt_opt(r.val_loss));
            row.push(fmt_f64(r.clean_mae));
            row
        })
        .collect();
    write_csv(&dir.join("final_losses.csv"), &header, &rows, STAGE)
}

/// Writes `manifest.json`: the SHA-256 of every other file in the bundle,
/// sorted by relative path.
pub fn write_manifest(root: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut files = BTreeMap::new();
    collect_hashes(root, root, &mut files)?;
    files.remove(layout::MANIFEST);
    write_json(&root.join(layout::MANIFEST), &files, "ablation")?;
    Ok(files)
}

fn collect_hashes(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), Failure> {
    for entry in std::fs::read_dir(dir).stage("ablation")? {
        let path = entry.stage("ablation")?.path();
        if path.is_dir() {
            collect_hashes(root, &path, out)?;
        } else {
            let bytes = std::fs::read(&path).stage("ablation")?;
            let rel = path
                .strip_prefix(root)
                .expect("inside root")
                .to_string_lossy()
                .replace('\\', "/");
            out.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(())
}
