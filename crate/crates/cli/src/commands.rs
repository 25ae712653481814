//! Command-line interface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gridshield_core::attack::{AttackGenConfig, SolverOptions, ZoneSpecFile};
use gridshield_core::eval::scaled_perturbation_eval;
use gridshield_core::pinn::{load_checkpoint, SearchSpace};
use gridshield_core::{AttackFamily, Dataset, FamilyConfig, FeasibleSetConfig, SnapshotSetConfig, TrainConfig};
use serde::Serialize;

use crate::config::{config_hash, parse_regime, validate_config, PipelineConfig};
use crate::logging::Logger;
use crate::pipeline;
use crate::{Failure, StageExt};

#[derive(Debug, Parser)]
#[command(
    name = "gridshield",
    version,
    about = "Physics-informed state estimation under stealthy AC attacks"
)]
pub struct Cli {
    /// Suppress progress events on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a MATPOWER case and print a summary.
    ParseCase {
        #[arg(long)]
        case: PathBuf,
        /// Print the full bus, branch and generator tables.
        #[arg(long)]
        dump: bool,
    },
    /// Generate clean snapshots with Newton-Raphson power flow.
    GenData(GenDataArgs),
    /// Generate verified attacks on a clean dataset.
    GenAttacks(GenAttacksArgs),
    /// Train the estimator in one weighting regime.
    Train(TrainArgs),
    /// Random hyperparameter search.
    Search(SearchArgs),
    /// MAE and percentile metrics for a model on one or more datasets.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// A dataset CSV or a directory of attack CSVs.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scaled injection perturbation sweep.
    PerturbSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Levels in percent.
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
        levels: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        buses: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full three-regime comparison from one config file.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate the config and exit.
        #[arg(long)]
        validate_only: bool,
    },
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Snapshot set config (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenAttacksArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Clean dataset CSV. Its sidecar supplies the residual scales.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub zones: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "simple,lra,line,corruption")]
    pub families: Vec<String>,
    /// JSON list of family configs, overriding the defaults of `--families`.
    #[arg(long)]
    pub family_config: Option<PathBuf>,
    /// Feasible-set config (JSON), overriding the sidecar scales.
    #[arg(long)]
    pub feasible: Option<PathBuf>,
    /// Solver options (JSON).
    #[arg(long)]
    pub solver: Option<PathBuf>,
    /// Attack only the first `n` snapshots.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// dynamic, fixed or frozen.
    #[arg(long)]
    pub regime: String,
    /// Training config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dynamic checkpoint supplying the frozen weights.
    #[arg(long)]
    pub dynamic: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// dynamic or fixed.
    #[arg(long)]
    pub regime: String,
    /// Base training config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Search space (JSON).
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn opt_json<T: for<'de> serde::Deserialize<'de> + Default>(path: &Option<PathBuf>) -> Result<T, Failure> {
    path.as_deref()
        .map(pipeline::read_json)
        .unwrap_or_else(|| Ok(T::default()))
}

fn split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), Failure> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Failure::Config(format!(
            "val_fraction {val_fraction} must lie in (0, 1)"
        )));
    }
    Ok(ds.split(1.0 - val_fraction, seed))
}

fn file_hash(path: &Path) -> Result<String, Failure> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value).stage("output")?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let log = Logger::new(cli.quiet);
    match cli.command {
        Command::ParseCase { case, dump } => {
            let net = pipeline::load_case(&case)?;
            let m = &net.model;
            let summary = serde_json::json!({
                "name": m.name,
                "base_mva": m.base_mva,
                "n_bus": m.n_bus(),
                "n_branch": m.branches.len(),
                "n_branch_in_service": m.in_service_branches().count(),
                "n_gen": m.gens.len(),
                "slack_bus": m.bus_id(m.slack()),
                "ybus_nnz": net.y.nnz(),
            });
            if dump {
                print_json(&serde_json::json!({ "summary": summary, "model": m }))
            } else {
                print_json(&summary)
            }
        }
        Command::GenData(a) => {
            let net = pipeline::load_case(&a.case)?;
            let mut cfg: SnapshotSetConfig = opt_json(&a.config)?;
            if let Some(n) = a.samples {
                cfg.n_samples = n;
            }
            if let Some(s) = a.seed {
                cfg.rng_seed = s;
            }
            cfg.validate().stage("gen-data")?;
            let hash = config_hash(&(file_hash(&a.case)?, &cfg));
            pipeline::gen_data(&net, &cfg, &hash, &a.out, &log).map(|_| ())
        }
        Command::GenAttacks(a) => gen_attacks(a, &log),
        Command::Train(a) => {
            let net = pipeline::load_case(&a.case)?;
            let regime = parse_regime(&a.regime)?;
            let cfg: TrainConfig = opt_json(&a.config)?;
            cfg.validate().stage("train")?;
            let dynamic = match &a.dynamic {
                Some(p) => Some(
                    load_checkpoint(p)
                        .map_err(|e| Failure::Config(e.to_string()))?
                        .uncertainty,
                ),
                None => None,
            };
            let start = cfg.initial_state(regime, dynamic.as_ref()).stage("train")?;
            let ds = pipeline::read_dataset(&a.data)?;
            let (tr, va) = split(&ds, a.val_fraction, a.split_seed)?;
            let hash = config_hash(&(
                file_hash(&a.case)?,
                file_hash(&a.data)?,
                &cfg,
                regime,
                a.val_fraction,
                a.split_seed,
            ));
            pipeline::train_regime(&tr, &va, &net.y, &cfg, start, &hash, &a.out, &log).map(|_| ())
        }
        Command::Search(a) => {
            let net = pipeline::load_case(&a.case)?;
            let regime = parse_regime(&a.regime)?;
            let base: TrainConfig = opt_json(&a.config)?;
            let space: SearchSpace = opt_json(&a.space)?;
            let ds = pipeline::read_dataset(&a.data)?;
            let (tr, va) = split(&ds, a.val_fraction, a.seed)?;
            let out = pipeline::search(&tr, &va, &net.y, &space, &base, regime, a.trials, a.seed, &log)?;
            pipeline::write_json(&a.out, &out, "search")
        }
        Command::Evaluate { model, data, out } => {
            let ckpt = load_checkpoint(&model).map_err(|e| Failure::Config(e.to_string()))?;
            let mut meta = BTreeMap::new();
            meta.insert("model".to_string(), file_hash(&model)?);
            meta.insert("regime".to_string(), ckpt.uncertainty.regime.to_string());
            if let Some(h) = &ckpt.config_hash {
                meta.insert("config_hash".to_string(), h.clone());
            }
            let report = if data.is_dir() {
                let attacked = pipeline::read_attack_dir(&data)?;
                if attacked.is_empty() {
                    return Err(Failure::Config(format!("{}: no attack datasets", data.display())));
                }
                pipeline::evaluate(&ckpt.params, None, &attacked, meta, &log)?
            } else {
                let ds = pipeline::read_dataset(&data)?;
                let name = data
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                pipeline::evaluate(&ckpt.params, Some((&name, &ds)), &[], meta, &log)?
            };
            pipeline::emit(&report, &out)
        }
        Command::PerturbSweep {
            model,
            data,
            levels,
            buses,
            seed,
            out,
        } => {
            let ckpt = load_checkpoint(&model).map_err(|e| Failure::Config(e.to_string()))?;
            let ds = pipeline::read_dataset(&data)?;
            let fractions: Vec<f64> = levels.iter().map(|l| l / 100.0).collect();
            let table = scaled_perturbation_eval(&ckpt.params, &ds, &fractions, &buses, seed).stage("perturb-sweep")?;
            pipeline::write_perturbation(&table, &out)
        }
        Command::Ablation {
            config,
            seed,
            out,
            validate_only,
        } => {
            let (mut cfg, raw_hash) = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            // The output root never enters the hash; a seed override does.
            let hash = match seed {
                Some(s) => config_hash(&(raw_hash, s)),
                None => raw_hash,
            };
            validate_config(&cfg)?;
            if validate_only {
                log.event("ablation", "config-valid", serde_json::json!({ "config_hash": hash }));
                return Ok(());
            }
            pipeline::run_ablation(&cfg, &hash, &log).map(|_| ())
        }
    }
}

fn gen_attacks(a: GenAttacksArgs, log: &Logger) -> Result<(), Failure> {
    let net = pipeline::load_case(&a.case)?;
    let families: Vec<FamilyConfig> = match &a.family_config {
        Some(p) => pipeline::read_json(p)?,
        None => a
            .families
            .iter()
            .map(|f| f.parse::<AttackFamily>().map(FamilyConfig::default_for))
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Config(e.to_string()))?,
    };
    for f in &families {
        f.validate(net.model.n_bus()).stage("gen-attacks")?;
    }
    let zone_file = ZoneSpecFile::read(&a.zones).map_err(|e| Failure::Config(e.to_string()))?;
    let zones = zone_file
        .resolve(&net.model)
        .map_err(|e| Failure::Config(e.to_string()))?;
    let mut clean = pipeline::read_dataset(&a.data)?;
    if let Some(k) = a.limit {
        clean = clean.subset(0..k.min(clean.len()));
    }
    let feasible: FeasibleSetConfig = match &a.feasible {
        Some(p) => pipeline::read_json(p)?,
        None => match pipeline::read_sidecar(&a.data)?.and_then(|s| s.residual_scales) {
            Some(s) => FeasibleSetConfig::from_scales(&s),
            None => {
                let full = pipeline::read_dataset(&a.data)?;
                FeasibleSetConfig::from_scales(
                    &gridshield_core::powerflow::residual_scales(&full, &net.y).stage("gen-attacks")?,
                )
            }
        },
    };
    feasible.validate().stage("gen-attacks")?;
    let solver: SolverOptions = opt_json(&a.solver)?;
    let gen = AttackGenConfig {
        feasible,
        solver,
        seed: a.seed,
    };
    let hash = config_hash(&(
        file_hash(&a.case)?,
        file_hash(&a.data)?,
        &zone_file,
        &families,
        &gen,
        a.limit,
    ));
    pipeline::gen_attacks(&net, &clean, &zones, &families, &gen, &hash, &a.out, log).map(|_| ())
}
