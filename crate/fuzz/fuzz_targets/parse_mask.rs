#![no_main]

use infill_core::grid::CartesianGrid;
use infill_core::io::{format_mask, parse_mask};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mask) = parse_mask(text) else { return };
    assert_eq!(mask.active.len(), mask.nx * mask.ny);
    if let Ok(grid) = CartesianGrid::with_mask(mask.nx, mask.ny, &mask.active) {
        assert_eq!(parse_mask(&format_mask(&grid)).unwrap(), mask);
    }
});
