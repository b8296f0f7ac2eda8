#![no_main]

use libfuzzer_sys::fuzz_target;
use passive_cbf::sim::SweepParam;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = text.parse::<SweepParam>() {
        assert_eq!(p.to_string(), text);
    }
});
