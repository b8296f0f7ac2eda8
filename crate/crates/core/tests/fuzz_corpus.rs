//! Replays the checked-in fuzz corpus through the same properties the fuzz
//! targets assert, so the seeds stay meaningful on a stable toolchain.

use std::fs;
use std::path::{Path, PathBuf};

use passive_cbf::sim::{energy_audit, parse_values, run_scenario, ScenarioConfig, SweepParam};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn scenario_config_seeds_round_trip() {
    let mut accepted = 0;
    for (path, text) in seeds("scenario_config") {
        if let Ok(cfg) = ScenarioConfig::from_toml_str(&text) {
            accepted += 1;
            let canonical = cfg.to_canonical_toml();
            let again = ScenarioConfig::from_toml_str(&canonical).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(again, cfg, "{}", path.display());
            assert_eq!(again.to_canonical_toml(), canonical);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn short_run_seeds_simulate() {
    for (path, text) in seeds("short_run") {
        let Ok(mut cfg) = ScenarioConfig::from_toml_str(&text) else { continue };
        cfg.integrator.t_final = cfg.integrator.t_final.min(200.0 * cfg.integrator.dt);
        if let Ok(traj) = run_scenario(&cfg) {
            assert_eq!(energy_audit(&traj).steps + 1, traj.records.len(), "{}", path.display());
        }
    }
}

#[test]
fn sweep_param_seeds_display_round_trip() {
    for (_, text) in seeds("sweep_param") {
        if let Ok(p) = text.parse::<SweepParam>() {
            assert_eq!(p.to_string(), text);
        }
    }
}

#[test]
fn sweep_values_seeds_are_finite() {
    for (_, text) in seeds("sweep_values") {
        if let Ok(values) = parse_values(&text) {
            assert!(!values.is_empty());
            assert!(values.iter().all(|v| v.is_finite()));
            assert_eq!(values.len(), text.split(',').count());
        }
    }
}
