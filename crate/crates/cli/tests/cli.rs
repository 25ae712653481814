use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridshield_cli::config::PipelineConfig;
use gridshield_core::pinn::load_checkpoint;
use gridshield_core::Regime;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn gridshield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshield"))
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn smoke_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(root().join("configs/smoke_case4gs.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["case"] = root().join("cases/case4gs.m").to_string_lossy().into();
    edit(&mut v);
    let path = dir.join("cfg.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn smoke_ablation_writes_three_checkpoints_and_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), |_| {});
    let out = dir.path().join("run");
    let o = gridshield(&[
        "ablation",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "config.json",
        "manifest.json",
        "data/clean.csv",
        "attacks/summary.json",
        "models/fixed_search.json",
        "reports/ablation.json",
        "reports/dynamic.json",
        "reports/perturbation_frozen.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let dynamic = load_checkpoint(&out.join("models/dynamic.ckpt")).unwrap();
    let fixed = load_checkpoint(&out.join("models/fixed.ckpt")).unwrap();
    let frozen = load_checkpoint(&out.join("models/frozen.ckpt")).unwrap();
    assert_eq!(dynamic.uncertainty.regime, Regime::Dynamic);
    assert_eq!(fixed.uncertainty.regime, Regime::Fixed);
    assert_eq!(frozen.uncertainty.regime, Regime::Frozen);
    // frozen training starts from and keeps the learned dynamic weights
    assert_eq!(frozen.uncertainty.s, dynamic.uncertainty.s);
}

#[test]
fn manifest_hashes_every_bundle_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), |v| v["attack"]["snapshots"] = 2.into());
    let out = dir.path().join("run");
    let o = gridshield(&[
        "ablation",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let text = manifest.to_string();
    for f in [
        "config.json",
        "data/clean.csv",
        "models/dynamic.ckpt",
        "reports/ablation.json",
    ] {
        assert!(text.contains(f), "{f} not in manifest");
    }
}

#[test]
fn out_of_range_kappa_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), |v| {
        v["families"] = serde_json::json!([
            { "family": "simple", "kappa_p": 1.5, "kappa_q": 0.5, "delta_p": 0.5, "delta_q": 0.5 }
        ]);
    });
    let o = gridshield(&["ablation", "--config", cfg.to_str().unwrap(), "--validate-only"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa"), "{}", stderr(&o));
    assert!(stderr(&o).contains("(0,1]"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), |v| v["train"]["base"]["epoch"] = 5.into());
    let o = gridshield(&["ablation", "--config", cfg.to_str().unwrap(), "--validate-only"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn every_violation_is_reported_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), |v| {
        v["train_fraction"] = 1.5.into();
        v["eval"]["perturbation_buses"] = serde_json::json!([1, 50]);
    });
    let o = gridshield(&["ablation", "--config", cfg.to_str().unwrap(), "--validate-only"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("train_fraction") && err.contains("exceeds"), "{err}");
}

#[test]
fn shipped_configs_validate() {
    for name in ["ablation_ieee118.json", "smoke_case4gs.json"] {
        let path = root().join("configs").join(name);
        let o = gridshield(&["ablation", "--config", path.to_str().unwrap(), "--validate-only"]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn training_defaults_apply_when_omitted() {
    let cfg = PipelineConfig::from_json(r#"{"case": "c.m", "seed": 1, "output": "o", "zones": "z.json"}"#).unwrap();
    assert_eq!(cfg.train.base.epochs, 100);
    assert_eq!(cfg.families.len(), 4);
    assert_eq!(cfg.attack.snapshots, 500);
}

#[test]
fn config_hash_ignores_output_but_not_seed() {
    let a = PipelineConfig::from_json(r#"{"case": "c.m", "seed": 1, "output": "o1", "zones": "z.json"}"#).unwrap();
    let b = PipelineConfig::from_json(r#"{"case": "c.m", "seed": 1, "output": "o2", "zones": "z.json"}"#).unwrap();
    let c = PipelineConfig::from_json(r#"{"case": "c.m", "seed": 2, "output": "o1", "zones": "z.json"}"#).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn stage_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("clean.csv");
    let case = root().join("cases/case4gs.m");
    let o = gridshield(&[
        "gen-data",
        "--case",
        case.to_str().unwrap(),
        "--samples",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("gen-data"), "{}", stderr(&o));
}

#[test]
fn missing_case_is_a_config_error() {
    let o = gridshield(&["parse-case", "--case", "/nonexistent/case.m"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_case_prints_a_summary() {
    let case = root().join("cases/case118.m");
    let o = gridshield(&["parse-case", "--case", case.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_bus"], 118);
}

#[test]
fn subcommands_chain_from_data_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let case = root().join("cases/case4gs.m").to_string_lossy().into_owned();
    let zones = dir.path().join("zones.json");
    std::fs::write(
        &zones,
        r#"{"index_base": 1, "zones": [{"name": "z", "buses": [2, 3, 4]}]}"#,
    )
    .unwrap();
    let train_cfg = dir.path().join("train.json");
    std::fs::write(&train_cfg, r#"{"epochs": 2, "batch": 32}"#).unwrap();

    let steps: Vec<Vec<String>> = vec![
        vec![
            "gen-data".into(),
            "--case".into(),
            case.clone(),
            "--samples".into(),
            "60".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            d("clean.csv"),
        ],
        vec![
            "gen-attacks".into(),
            "--case".into(),
            case.clone(),
            "--data".into(),
            d("clean.csv"),
            "--zones".into(),
            zones.to_string_lossy().into_owned(),
            "--families".into(),
            "simple,line".into(),
            "--limit".into(),
            "3".into(),
            "--out".into(),
            d("attacks"),
        ],
        vec![
            "train".into(),
            "--case".into(),
            case.clone(),
            "--data".into(),
            d("clean.csv"),
            "--regime".into(),
            "dynamic".into(),
            "--config".into(),
            train_cfg.to_string_lossy().into_owned(),
            "--out".into(),
            d("dyn.ckpt"),
        ],
        vec![
            "train".into(),
            "--case".into(),
            case.clone(),
            "--data".into(),
            d("clean.csv"),
            "--regime".into(),
            "frozen".into(),
            "--config".into(),
            train_cfg.to_string_lossy().into_owned(),
            "--dynamic".into(),
            d("dyn.ckpt"),
            "--out".into(),
            d("frozen.ckpt"),
        ],
        vec![
            "evaluate".into(),
            "--model".into(),
            d("frozen.ckpt"),
            "--data".into(),
            d("attacks"),
            "--out".into(),
            d("report.json"),
        ],
        vec![
            "perturb-sweep".into(),
            "--model".into(),
            d("dyn.ckpt"),
            "--data".into(),
            d("clean.csv"),
            "--levels".into(),
            "5,30".into(),
            "--buses".into(),
            "1,2".into(),
            "--out".into(),
            d("sweep.json"),
        ],
    ];
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let o = gridshield(&args);
        assert!(o.status.success(), "{}: {}", step[0], stderr(&o));
    }
    let dynamic = load_checkpoint(Path::new(&d("dyn.ckpt"))).unwrap();
    let frozen = load_checkpoint(Path::new(&d("frozen.ckpt"))).unwrap();
    assert_eq!(frozen.uncertainty.s, dynamic.uncertainty.s);
    assert!(Path::new(&d("report.json")).is_file() && Path::new(&d("sweep.csv")).is_file());
}
