#![no_main]

use libfuzzer_sys::fuzz_target;
use mirrorsim_cli::config::{apply_override, from_value, parse_override, ScenarioConfig};

// Input is split on newlines into a sequence of `--set` arguments applied
// to the default document.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut doc = serde_json::to_value(ScenarioConfig::default()).unwrap();
    for line in text.lines().take(16) {
        let Ok(o) = parse_override(line) else {
            continue;
        };
        assert!(!o.path.is_empty());
        let _ = apply_override(&mut doc, &o);
    }
    let _ = from_value(doc);
});
