#![no_main]

use libfuzzer_sys::fuzz_target;
use mirrorsim_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // Anything accepted must survive a trip through its own encoding.
        let again = serde_json::to_string(&cfg).expect("config serializes");
        let back = parse_config(&again).expect("re-parse of accepted config");
        assert_eq!(serde_json::to_string(&back).unwrap(), again);
    }
});
