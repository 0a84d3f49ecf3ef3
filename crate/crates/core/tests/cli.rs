use std::fs;
use std::process::Command as Process;

use spectral_mp::cli::config::{NoiseConfig, SCENARIOS};
use spectral_mp::cli::{parse_config, run, Command, ConfigError, RunConfig};
use spectral_mp::coefficients::CatalogKind;
use spectral_mp::simulator::InitialLaw;

fn schema(text: &str) -> Vec<spectral_mp::cli::SchemaError> {
    match parse_config(text) {
        Err(ConfigError::Schema(e)) => e,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

fn constraint_keys(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(ConfigError::Constraint(e)) => e.into_iter().map(|c| c.key).collect(),
        other => panic!("expected a constraint error, got {other:?}"),
    }
}

#[test]
fn minimal_config_has_documented_defaults() {
    let c = parse_config("[sim]\n").unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!(c.scenario, "ou");
    assert_eq!(c.basis.n_modes, 16);
    assert_eq!(c.coefficients, CatalogKind::Ou { noise_scale: 1.0 });
    assert_eq!(c.noise, NoiseConfig::None);
    assert_eq!((c.sim.horizon, c.sim.dt, c.sim.n_paths, c.sim.seed), (1.0, 1e-3, 1000, 2024));
    assert_eq!(c.sim.initial, InitialLaw::Point { coeffs: vec![0.3, 0.1] });
    assert_eq!(c.diagnostics.z_threshold, 3.0);
    assert_eq!(c.diagnostics.max_failure_fraction, 0.02);
    assert_eq!(c.diagnostics.truncation_threshold, 1.0);
    assert!(c.output.plots);
}

#[test]
fn zero_dt_is_a_constraint_error() {
    assert!(constraint_keys("[sim]\ndt = 0.0\n").contains(&"sim.dt".to_string()));
}

#[test]
fn dt_above_horizon_is_a_constraint_error() {
    assert!(constraint_keys("[sim]\nhorizon = 0.5\ndt = 1.0\n").contains(&"sim.dt".to_string()));
}

#[test]
fn constraint_errors_are_collected() {
    let keys = constraint_keys("[basis]\nn_modes = 4\n[sim]\nn_paths = 0\n[diagnostics]\nvariance_modes = [9]\n");
    assert!(keys.contains(&"sim.n_paths".to_string()));
    assert!(keys.contains(&"diagnostics.variance_modes".to_string()));
}

#[test]
fn unknown_key_names_key_and_line() {
    let errs = schema("scenario = \"ou\"\n\n[sim]\nhorizon = 1.0\nfoo = 3\n");
    assert_eq!(errs[0].line, Some(5));
    assert!(errs[0].message.contains("foo"), "{}", errs[0].message);
}

#[test]
fn unknown_key_inside_tagged_table() {
    let errs = schema("[coefficients]\nkind = \"ou\"\nnoise_scale = 1.0\nbogus = 2\n");
    assert!(errs[0].message.contains("bogus"));
    assert!(errs[0].line.is_some());
}

#[test]
fn type_mismatch_is_a_schema_error() {
    let errs = schema("[sim]\nn_paths = \"many\"\n");
    assert_eq!(errs[0].line, Some(2));
}

#[test]
fn unknown_scenario_is_a_schema_error() {
    let errs = schema("\nscenario = \"nope\"\n");
    assert_eq!(errs[0].line, Some(2));
    assert!(errs[0].message.contains("nope"));
}

#[test]
fn scenario_presets_layer_under_user_keys() {
    let c = parse_config("scenario = \"corrupted-drift\"\n[sim]\nn_paths = 7\n").unwrap();
    assert_eq!(c.sim.n_paths, 7);
    assert_eq!(c.sim.drift_shift, vec![1.0]);
    assert_eq!(c.sim.seed, 2025);
    let c = parse_config("scenario = \"jumps\"\n[coefficients]\nkind = \"zero\"\n").unwrap();
    assert_eq!(c.coefficients, CatalogKind::Zero);
    assert_eq!(c.basis.n_modes, 8);
    assert!(SCENARIOS.iter().any(|(n, _)| *n == "heat-demo"));
}

#[test]
fn heat_demo_default_passes_with_plot_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config("").unwrap();
    let out = run(Command::HeatDemo, &config, dir.path()).unwrap();
    assert!(out.pass(), "{:?}", out.checks);
    assert_eq!(out.exit_code(), 0);
    for name in ["variance.svg", "variance.csv", "martingale.json", "MANIFEST"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("martingale.json")).unwrap()).unwrap();
    assert_eq!(report["report"], "martingale");
    assert_eq!(report["config"]["scenario"], "ou");
    assert!(report["entries"].as_array().unwrap().len() >= 50);
    let svg = fs::read_to_string(dir.path().join("variance.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert!(!dir.path().join("failures.json").exists());
}

#[test]
fn corrupted_drift_fails_and_lists_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config("scenario = \"corrupted-drift\"").unwrap();
    let out = run(Command::VerifyMp, &config, dir.path()).unwrap();
    assert!(!out.pass());
    assert_ne!(out.exit_code(), 0);
    let failures: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("failures.json")).unwrap()).unwrap();
    let listed = failures["martingale_failures"].as_array().unwrap();
    assert!(!listed.is_empty());
    assert!(listed[0]["z"].as_f64().unwrap().abs() > 5.0);
}

#[test]
fn simulate_twice_gives_identical_csv() {
    let config = parse_config("scenario = \"jumps\"\n[sim]\nn_paths = 50\n").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(Command::Simulate, &config, a.path()).unwrap();
    run(Command::Simulate, &config, b.path()).unwrap();
    for name in ["marginals.csv", "path_0000.csv", "path_0003.csv", "MANIFEST"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.path().join("marginals.csv")).unwrap();
    assert!(csv.starts_with("time,mean_c1,var_c1"));
}

#[test]
fn manifest_hashes_match_files() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config("[diagnostics]\nfactorization_paths = 2\nfactorization_steps = [64, 128]\n").unwrap();
    let out = run(Command::Factorization, &config, dir.path()).unwrap();
    let manifest = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
    assert_eq!(manifest.lines().count(), out.artifacts.len());
    for line in manifest.lines() {
        let (hash, name) = line.split_once("  ").unwrap();
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(hash, hex::encode(Sha256::digest(bytes)));
    }
}

#[test]
fn different_seeds_change_the_manifest() {
    let text = |seed: u64| format!("[sim]\nn_paths = 20\nseed = {seed}\n");
    let mut manifests = Vec::new();
    for seed in [1, 2] {
        let dir = tempfile::tempdir().unwrap();
        run(Command::Simulate, &parse_config(&text(seed)).unwrap(), dir.path()).unwrap();
        manifests.push(fs::read(dir.path().join("MANIFEST")).unwrap());
    }
    assert_ne!(manifests[0], manifests[1]);
}

#[test]
fn heat_demo_rejects_non_ou_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config("scenario = \"jumps\"").unwrap();
    let err = run(Command::HeatDemo, &config, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_spectral-mp"))
}

#[test]
fn binary_reports_schema_errors_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[sim]\nfoo = 1\n").unwrap();
    let out = binary()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "schema");
    assert_eq!(err["detail"]["errors"][0]["line"], 2);
}

#[test]
fn binary_exit_status_follows_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cd.toml");
    fs::write(&cfg, "scenario = \"corrupted-drift\"\n[sim]\nn_paths = 2000\n").unwrap();
    let out = binary()
        .args(["verify-mp", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("bad"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL martingale"));

    let out = binary()
        .args(["simulate", "--quiet", "--paths", "10", "--seed", "5", "--out"])
        .arg(dir.path().join("ok"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ok/ensemble.json")).unwrap()).unwrap();
    assert_eq!(summary["n_paths"], 10);
    assert_eq!(summary["seed"], 5);
}

#[test]
fn binary_uses_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = binary()
        .args(["simulate", "--quiet", "--paths", "5"])
        .env("SPECTRAL_MP_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("MANIFEST").exists());
}

#[test]
fn documented_defaults_file_matches_defaults() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/defaults.toml")).unwrap();
    assert_eq!(parse_config(&text).unwrap(), RunConfig::default());
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        parse_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
