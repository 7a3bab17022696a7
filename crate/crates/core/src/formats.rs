//! On-disk formats: packet and marker JSONL streams, and versioned JSON
//! documents for scenarios, measurement sets, maps and evaluation reports.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::evalmap::EvalReport;
use crate::ingest::{AnchorMarkers, MacAddr, MarkerInterval};
use crate::model::{Entry, MapSolution, MeasurementSet, Packet};
use crate::synth::Scenario;
use crate::{Error, Result, SCHEMA_VERSION};

#[derive(Serialize)]
struct VersionedRef<'a, T> {
    mapifi_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Versioned<T> {
    mapifi_version: u32,
    #[serde(flatten)]
    body: T,
}

fn to_versioned_json<T: Serialize>(body: &T) -> String {
    let doc = VersionedRef {
        mapifi_version: SCHEMA_VERSION,
        body,
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    out.push('\n');
    out
}

fn from_versioned_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let doc: Versioned<T> =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    if doc.mapifi_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "{what}: unsupported mapifi_version {} (expected {SCHEMA_VERSION})",
            doc.mapifi_version
        )));
    }
    Ok(doc.body)
}

fn parse_jsonl<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str(line)
                .map_err(|e| Error::Schema(format!("{what} line {}: {e}", n + 1)))
        })
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

/// Reads measurement JSONL. MACs are normalized to lowercase colon-hex.
pub fn parse_packets_jsonl(text: &str) -> Result<Vec<Packet>> {
    let mut packets: Vec<Packet> = parse_jsonl(text, "measurements")?;
    for (n, p) in packets.iter_mut().enumerate() {
        let mac: MacAddr = p
            .device_mac
            .parse()
            .map_err(|e| Error::Schema(format!("measurement {}: {e}", n + 1)))?;
        p.device_mac = mac.to_string();
        if p.anchor_id.is_empty() {
            return Err(Error::Schema(format!("measurement {}: empty anchor_id", n + 1)));
        }
    }
    Ok(packets)
}

pub fn packets_to_jsonl(packets: &[Packet]) -> String {
    to_jsonl(packets)
}

pub fn parse_markers_jsonl(text: &str) -> Result<AnchorMarkers> {
    let intervals: Vec<MarkerInterval> = parse_jsonl(text, "markers")?;
    Ok(AnchorMarkers::new(intervals)?)
}

pub fn markers_to_jsonl(markers: &AnchorMarkers) -> String {
    to_jsonl(markers.intervals())
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    to_versioned_json(scenario)
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let scenario: Scenario = from_versioned_json(text, "scenario")?;
    scenario.bbox.validate()?;
    scenario.params.validate()?;
    Ok(scenario)
}

pub fn map_to_json(solution: &MapSolution) -> String {
    to_versioned_json(solution)
}

pub fn map_from_json(text: &str) -> Result<MapSolution> {
    from_versioned_json(text, "map")
}

pub fn report_to_json(report: &EvalReport) -> String {
    to_versioned_json(report)
}

pub fn report_from_json(text: &str) -> Result<EvalReport> {
    from_versioned_json(text, "report")
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    anchor: usize,
    device: usize,
    #[serde(flatten)]
    entry: Entry,
}

#[derive(Serialize, Deserialize)]
struct MeasurementSetDoc {
    anchor_ids: Vec<String>,
    device_ids: Vec<String>,
    entries: Vec<EntryRecord>,
}

pub fn measurement_set_to_json(ms: &MeasurementSet) -> String {
    let doc = MeasurementSetDoc {
        anchor_ids: ms.anchor_ids().to_vec(),
        device_ids: ms.device_ids().to_vec(),
        entries: ms
            .entries()
            .map(|((anchor, device), entry)| EntryRecord {
                anchor,
                device,
                entry: *entry,
            })
            .collect(),
    };
    to_versioned_json(&doc)
}

pub fn measurement_set_from_json(text: &str) -> Result<MeasurementSet> {
    let doc: MeasurementSetDoc = from_versioned_json(text, "measurement set")?;
    let mut entries = BTreeMap::new();
    for r in doc.entries {
        if entries.insert((r.anchor, r.device), r.entry).is_some() {
            return Err(Error::Schema(format!(
                "duplicate entry ({}, {})",
                r.anchor, r.device
            )));
        }
    }
    MeasurementSet::new(doc.anchor_ids, doc.device_ids, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::aggregate;
    use crate::synth::{forward_rssi, generate_scenario, WalkSpec};
    use crate::{BoundingBox, Point3};
    use proptest::prelude::*;

    #[test]
    fn packet_line_format() {
        let text = r#"{"anchor_id":"a000","device_mac":"AA:BB:CC:DD:EE:FF","rssi_dbm":-61.5,"ts_us":12}

{"anchor_id":"a001","device_mac":"02:00:00:00:00:01","rssi_dbm":-70}
"#;
        let packets = parse_packets_jsonl(text).unwrap();
        assert_eq!(packets.len(), 2);
        assert_eq!(packets[0].device_mac, "aa:bb:cc:dd:ee:ff");
        assert_eq!(packets[0].ts_us, Some(12));
        assert_eq!(packets[1].ts_us, None);
        let out = packets_to_jsonl(&packets);
        assert_eq!(out.lines().count(), 2);
        assert!(!out.lines().nth(1).unwrap().contains("ts_us"));
    }

    #[test]
    fn packet_schema_errors_carry_line_numbers() {
        let err = parse_packets_jsonl("{\"anchor_id\":\"a\",\"device_mac\":\"aa:bb:cc:dd:ee:ff\",\"rssi_dbm\":-1}\n{\"anchor_id\":\"a\"}\n")
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_packets_jsonl(r#"{"anchor_id":"a","device_mac":"nope","rssi_dbm":-1}"#).is_err());
    }

    #[test]
    fn versioned_documents() {
        let bbox = BoundingBox::new(Point3::zeros(), Point3::new(10.0, 8.0, 3.0)).unwrap();
        let scenario = generate_scenario(bbox, 4, &WalkSpec::default(), (0.5, 2.0), 1).unwrap();
        let text = scenario_to_json(&scenario);
        assert!(text.contains("\"mapifi_version\": 1"));
        assert!(text.contains("\"pos\""));
        assert!(text.contains("\"pathloss\""));
        assert_eq!(scenario_from_json(&text).unwrap(), scenario);
        let bumped = text.replace("\"mapifi_version\": 1", "\"mapifi_version\": 2");
        assert!(matches!(scenario_from_json(&bumped), Err(Error::Schema(_))));

        let cap = forward_rssi(&scenario, 1.0, 3, 0.2, 4).unwrap();
        let ms = aggregate(&cap.packets).unwrap();
        assert_eq!(measurement_set_from_json(&measurement_set_to_json(&ms)).unwrap(), ms);
    }

    #[test]
    fn markers_round_trip() {
        let text = "{\"anchor_id\":\"a0\",\"t_start_us\":0,\"t_end_us\":10}\n{\"anchor_id\":\"a1\",\"t_start_us\":20,\"t_end_us\":30}\n";
        let markers = parse_markers_jsonl(text).unwrap();
        assert_eq!(markers_to_jsonl(&markers), text);
        let overlapping = "{\"anchor_id\":\"a0\",\"t_start_us\":0,\"t_end_us\":25}\n{\"anchor_id\":\"a1\",\"t_start_us\":20,\"t_end_us\":30}\n";
        assert!(matches!(parse_markers_jsonl(overlapping), Err(Error::Parse(_))));
    }

    proptest! {
        #[test]
        fn packets_jsonl_round_trip(
            rows in prop::collection::vec(("[a-z][a-z0-9]{0,6}", any::<[u8; 6]>(), -120.0f64..0.0, prop::option::of(any::<u64>())), 1..20)
        ) {
            let packets: Vec<Packet> = rows
                .into_iter()
                .map(|(anchor_id, mac, rssi_dbm, ts_us)| Packet {
                    anchor_id,
                    device_mac: MacAddr(mac).to_string(),
                    rssi_dbm,
                    ts_us,
                })
                .collect();
            prop_assert_eq!(parse_packets_jsonl(&packets_to_jsonl(&packets)).unwrap(), packets);
        }
    }
}
