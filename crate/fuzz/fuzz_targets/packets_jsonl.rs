#![no_main]

use libfuzzer_sys::fuzz_target;
use mapifi::formats::{packets_to_jsonl, parse_packets_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(packets) = parse_packets_jsonl(text) {
        // accepted input must survive a write/read cycle unchanged
        let again = parse_packets_jsonl(&packets_to_jsonl(&packets)).unwrap();
        assert_eq!(again.len(), packets.len());
        let _ = mapifi::aggregate(&packets);
    }
});
