#![no_main]

use libfuzzer_sys::fuzz_target;
use spef_core::builtin::fig1;
use spef_core::harness::{parse_weights, WeightsFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(w) = parse_weights(text) {
        let (topo, _) = fig1();
        let _ = WeightsFile::vector(&topo, &w.first);
    }
});
