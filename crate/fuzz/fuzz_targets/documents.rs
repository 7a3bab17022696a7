#![no_main]

use libfuzzer_sys::fuzz_target;
use mapifi::evalmap::{export_map, MapFormat};
use mapifi::formats::{map_from_json, measurement_set_from_json, report_from_json, scenario_from_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = map_from_json(text) {
        let _ = export_map(&map, MapFormat::Svg);
    }
    let _ = scenario_from_json(text);
    let _ = measurement_set_from_json(text);
    let _ = report_from_json(text);
});
