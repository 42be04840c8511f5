#![no_main]

use libfuzzer_sys::fuzz_target;
use spef_core::harness::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // Only builtin instances load without touching the filesystem.
        if cfg.topology.is_none() && cfg.demands.is_some() {
            let _ = cfg.load();
        }
    }
});
