#![no_main]

use libfuzzer_sys::fuzz_target;
use mapifi::ingest::{ingest_pcap, AnchorMarkers, MarkerInterval};

fuzz_target!(|data: &[u8]| {
    let markers = AnchorMarkers::new(vec![
        MarkerInterval { anchor_id: "a000".into(), t_start_us: 0, t_end_us: 1_999_999 },
        MarkerInterval { anchor_id: "a001".into(), t_start_us: 3_000_000, t_end_us: u64::MAX },
    ])
    .unwrap();
    if let Ok(out) = ingest_pcap(data, &markers) {
        let d = out.diagnostics;
        assert_eq!(d.records, d.accepted + d.malformed + d.no_signal + d.no_transmitter + d.outside_markers);
        assert_eq!(out.packets.len(), d.accepted);
    }
});
