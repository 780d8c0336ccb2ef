#![no_main]

use libfuzzer_sys::fuzz_target;
use mirrorsim_cli::commands::parse_report;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = parse_report(text) {
        let again = serde_json::to_string(&report).expect("report serializes");
        let back = parse_report(&again).expect("re-parse of accepted report");
        assert_eq!(serde_json::to_string(&back).unwrap(), again);
    }
});
