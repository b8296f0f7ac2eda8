#![no_main]

use libfuzzer_sys::fuzz_target;
use passive_cbf::sim::{energy_audit, run_scenario, ScenarioConfig};

// Accepted configs, truncated to a few hundred steps, must simulate or
// report an error without panicking.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut cfg) = ScenarioConfig::from_toml_str(text) else { return };
    cfg.integrator.t_final = cfg.integrator.t_final.min(200.0 * cfg.integrator.dt);
    if let Ok(traj) = run_scenario(&cfg) {
        let audit = energy_audit(&traj);
        assert_eq!(audit.steps + 1, traj.records.len());
    }
});
