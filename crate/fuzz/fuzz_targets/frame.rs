#![no_main]

use libfuzzer_sys::fuzz_target;
use mapifi::ingest::parse_frame;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = parse_frame(data) {
        if frame.transmitter_mac.is_some() {
            assert!(data.len() >= 16);
        }
    }
});
