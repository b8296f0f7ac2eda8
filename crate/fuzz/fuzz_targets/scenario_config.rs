#![no_main]

use libfuzzer_sys::fuzz_target;
use passive_cbf::sim::ScenarioConfig;

// Any accepted config must survive a canonical render and re-parse unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::from_toml_str(text) {
        let canonical = cfg.to_canonical_toml();
        let again = ScenarioConfig::from_toml_str(&canonical).expect("canonical form parses");
        assert_eq!(again, cfg);
        assert_eq!(again.to_canonical_toml(), canonical);
    }
});
