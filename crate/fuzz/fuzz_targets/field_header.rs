#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgames::fields::grid_from_header;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = grid_from_header(text) {
            assert!(g.len() > 0);
            let _ = g.coords(g.len() - 1);
        }
    }
});
