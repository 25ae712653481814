//! Pipeline configuration: one JSON file with a section per stage.

use std::path::{Path, PathBuf};

use gridshield_core::attack::{SolverOptions, ZoneSpecFile};
use gridshield_core::pinn::{SearchSpace, TrainConfig};
use gridshield_core::{AttackFamily, FamilyConfig, FeasibleSetConfig, Regime, SnapshotSetConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Zone specs, inline or as a path to a zone spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZonesSource {
    Path(PathBuf),
    Inline(ZoneSpecFile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackStage {
    /// Validation snapshots attacked per (zone, family).
    pub snapshots: usize,
    /// Derived from the clean residual scales when absent.
    pub feasible: Option<FeasibleSetConfig>,
    pub solver: SolverOptions,
}

impl Default for AttackStage {
    fn default() -> Self {
        AttackStage {
            snapshots: 500,
            feasible: None,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedSearch {
    pub trials: usize,
    /// Epoch budget per trial.
    pub epochs: usize,
    pub log_sigma: (f64, f64),
}

impl Default for FixedSearch {
    fn default() -> Self {
        FixedSearch {
            trials: 8,
            epochs: 10,
            log_sigma: (-5.0, 5.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainStage {
    /// Shared by all three regimes. `rng_seed` is derived from the pipeline
    /// seed.
    pub base: TrainConfig,
    /// Use only the first `n` training snapshots.
    pub subset: Option<usize>,
    pub fixed_search: FixedSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalStage {
    /// Fractions, e.g. `0.05` for 5%.
    pub perturbation_levels: Vec<f64>,
    pub perturbation_buses: Vec<usize>,
}

impl Default for EvalStage {
    fn default() -> Self {
        EvalStage {
            perturbation_levels: vec![0.05, 0.10, 0.20, 0.30],
            perturbation_buses: vec![1, 10],
        }
    }
}

fn default_train_fraction() -> f64 {
    0.9
}

fn default_families() -> Vec<FamilyConfig> {
    AttackFamily::ALL.into_iter().map(FamilyConfig::default_for).collect()
}

/// Relative paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub case: PathBuf,
    /// Every stage seed is derived from this value.
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub snapshots: SnapshotSetConfig,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub zones: ZonesSource,
    #[serde(default = "default_families")]
    pub families: Vec<FamilyConfig>,
    #[serde(default)]
    pub attack: AttackStage,
    #[serde(default)]
    pub train: TrainStage,
    #[serde(default)]
    pub eval: EvalStage,
}

/// Stream indices for per-stage seeds.
pub mod seed_stream {
    pub const SNAPSHOTS: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const ATTACKS: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const SEARCH: u64 = 5;
    pub const SWEEP: u64 = 6;
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::Config(format!("pipeline config: {e}")))
    }

    /// Reads a config and resolves its relative paths. The returned hash is
    /// taken before resolution, so it does not depend on where the config
    /// file lives.
    pub fn load(path: &Path) -> Result<(Self, String), Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let hash = cfg.hash();
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok((cfg, hash))
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.case);
        fix(&mut self.output);
        if let ZonesSource::Path(p) = &mut self.zones {
            fix(p);
        }
    }

    pub fn stage_seed(&self, stream: u64) -> u64 {
        gridshield_core::rng::stream_seed(self.seed, stream)
    }

    /// Hex SHA-256 of the canonical JSON form, with the output root left out
    /// so relocating a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        config_hash(&canonical)
    }

    pub fn zone_spec(&self) -> Result<ZoneSpecFile, Failure> {
        match &self.zones {
            ZonesSource::Inline(z) => Ok(z.clone()),
            ZonesSource::Path(p) => ZoneSpecFile::read(p).map_err(|e| Failure::Config(e.to_string())),
        }
    }

    /// Training configuration for one regime; only the seed differs from
    /// `train.base`.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rng_seed: self.stage_seed(seed_stream::TRAIN),
            ..self.train.base.clone()
        }
    }

    pub fn fixed_search_space(&self) -> SearchSpace {
        let fs = &self.train.fixed_search;
        SearchSpace::weights_only(&self.train_config(), fs.log_sigma, fs.epochs)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    hex::encode(Sha256::digest(&bytes))
}

/// Checks every section and returns all violations at once. Parses the case
/// and resolves zones, so referenced files must exist.
pub fn validate_config(cfg: &PipelineConfig) -> Result<(), Failure> {
    let mut errors: Vec<String> = Vec::new();
    let mut push = |r: gridshield_core::Result<()>| {
        if let Err(e) = r {
            errors.push(e.to_string());
        }
    };
    push(cfg.snapshots.validate());
    push(cfg.train.base.validate());
    push(cfg.fixed_search_space().validate());
    if let Some(f) = &cfg.attack.feasible {
        push(f.validate());
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        errors.push(format!("train_fraction {} must lie in (0, 1)", cfg.train_fraction));
    }
    if cfg.train.fixed_search.trials == 0 {
        errors.push("train.fixed_search.trials must be at least 1".into());
    }
    if cfg.families.is_empty() {
        errors.push("families must not be empty".into());
    }
    let mut seen = Vec::new();
    for f in &cfg.families {
        if seen.contains(&f.family()) {
            errors.push(format!("family '{}' listed twice", f.family()));
        }
        seen.push(f.family());
    }
    if let Some(l) = cfg
        .eval
        .perturbation_levels
        .iter()
        .find(|l| !(l.is_finite() && **l > -1.0))
    {
        errors.push(format!("perturbation level {l} must be finite and above -1"));
    }
    match std::fs::read_to_string(&cfg.case) {
        Err(e) => errors.push(format!("case {}: {e}", cfg.case.display())),
        Ok(text) => match gridshield_core::case_model::parse_case(&text) {
            Err(e) => errors.push(format!("case {}: {e}", cfg.case.display())),
            Ok(model) => {
                let n = model.n_bus();
                for f in &cfg.families {
                    if let Err(e) = f.validate(n) {
                        errors.push(e.to_string());
                    }
                }
                match cfg
                    .zone_spec()
                    .and_then(|z| z.resolve(&model).map_err(|e| Failure::Config(e.to_string())))
                {
                    Ok(zones) if zones.is_empty() => errors.push("no attack zones configured".into()),
                    Ok(_) => {}
                    Err(e) => errors.push(e.to_string()),
                }
                if let Some(&k) = cfg.eval.perturbation_buses.iter().find(|&&k| k > n) {
                    errors.push(format!("perturbation bus count {k} exceeds {n} buses"));
                }
            }
        },
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(errors.join("; ")))
    }
}

/// Regime names accepted on the command line.
pub fn parse_regime(s: &str) -> Result<Regime, Failure> {
    s.parse()
        .map_err(|e: gridshield_core::Error| Failure::Config(e.to_string()))
}
