#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgames::fields::{field_from_csv, field_header_json, field_to_csv};

// Input: JSON header, a blank line, then the CSV body.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((header, body)) = text.split_once("\n\n") else { return };
    if let Ok(field) = field_from_csv(header, body) {
        // whatever parses must survive a round trip
        let h = field_header_json(&field).unwrap();
        let b = field_to_csv(&field).unwrap();
        let back = field_from_csv(&h, &b).unwrap();
        assert_eq!(back.grid, field.grid);
        for (a, b) in back.values.iter().zip(&field.values) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
});
