#![no_main]

use libfuzzer_sys::fuzz_target;
use mapifi::formats::{markers_to_jsonl, parse_markers_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(markers) = parse_markers_jsonl(text) {
        assert_eq!(parse_markers_jsonl(&markers_to_jsonl(&markers)).unwrap(), markers);
        for m in markers.intervals() {
            assert_eq!(markers.anchor_at(m.t_start_us), Some(m.anchor_id.as_str()));
        }
    }
});
