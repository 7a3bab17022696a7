#![no_main]

use libfuzzer_sys::fuzz_target;
use mapifi::ingest::{parse_frame, parse_radiotap};

fuzz_target!(|data: &[u8]| {
    if let Ok(info) = parse_radiotap(data) {
        assert!(info.header_len as usize <= data.len());
        let _ = parse_frame(&data[info.header_len as usize..]);
    }
});
