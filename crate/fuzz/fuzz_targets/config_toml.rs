#![no_main]

use libfuzzer_sys::fuzz_target;
use nlgames::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        // a config that validates must also size its grids without panicking
        for &eps in &cfg.schedule {
            let _ = cfg.grid_for(eps);
        }
    }
});
