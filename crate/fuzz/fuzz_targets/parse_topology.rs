#![no_main]

use libfuzzer_sys::fuzz_target;
use spef_core::io::{parse_topology, topology_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(topo) = parse_topology(text) {
        // Anything accepted must survive a write/read cycle unchanged.
        let json = topology_to_json(&topo).expect("valid topology serializes");
        let again = parse_topology(&json).expect("serialized topology parses");
        assert_eq!(again.num_links(), topo.num_links());
        assert_eq!(again.node_names(), topo.node_names());
    }
});
