#![no_main]

use infill_core::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        // The canonical echo must parse back to the same configuration.
        let again = parse_config(&cfg.echo()).expect("echo parses");
        assert_eq!(again.echo(), cfg.echo());
    }
});
