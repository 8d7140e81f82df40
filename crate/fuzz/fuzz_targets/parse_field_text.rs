#![no_main]

use infill_core::io::parse_field_text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_field_text(text) {
        assert_eq!(m.cells.len(), m.nx * m.ny);
    }
});
