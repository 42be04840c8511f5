#![no_main]

use libfuzzer_sys::fuzz_target;
use spef_core::builtin::fig1;
use spef_core::io::{parse_demand_csv, read_demands};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_demand_csv(text);
    let (topo, _) = fig1();
    if let Ok(dm) = read_demands(&topo, text) {
        assert!(dm.positive_pairs().all(|(_, _, d)| d.is_finite() && d > 0.0));
    }
});
